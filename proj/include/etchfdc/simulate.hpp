#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "etchfdc/common.hpp"
#include "etchfdc/core.hpp"
#include "etchfdc/doe.hpp"
#include "etchfdc/pretreat.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Basis functions of the recipe the whole ground truth is built on:
/// [1, z1..z5 (coded factors), ratio deviation, z1*z2, z2*z3, z4*z5].
inline constexpr int kBasisSize = 10;

/// One simulated channel: baseline = coef . basis(recipe), shaped over time by
/// per-region levels and a within-region ramp, then noise and drift on top.
struct ChannelTruth {
  std::string name;
  Eigen::VectorXd coef;                    // kBasisSize entries; coef(0) = offset
  std::array<double, 3> region_levels{};   // multiplier per etch region
  double ramp_slope = 0.0;                 // fractional rise per second in-region
  double noise_sigma = 0.0;                // per-sample, absolute
  double drift_rate = 0.0;                 // added per wafer index
};

struct SpectralPeak {
  double center_line = 0.0;
  double width = 1.0;
  Eigen::VectorXd amp_coef;  // peak amplitude as basis coefficients
};

/// Emission-spectrum truth: line-resolved profile built from peaks plus a
/// continuum, reduced to bands with bin_spectra, then seen by n_spectrometers
/// gain-matched spectrometers with independent noise.
struct OesTruth {
  int n_lines = 2042;
  int n_bins = 42;
  int n_spectrometers = 3;
  std::vector<SpectralPeak> peaks;
  Eigen::VectorXd continuum_coef;
  std::array<double, 3> spectrometer_gains{1.0, 1.0, 1.0};
  std::array<double, 3> region_levels{};
  double ramp_slope = 0.0;
  std::vector<double> bin_noise_sigmas;    // spectrometer-major, then bin
  double drift_rate = 0.0;
};

/// Per-die affine map from a subset of machine-channel baselines to wafer
/// state, with smooth radial dependence on die position.
struct WaferMapTruth {
  std::array<int, 8> state_channels{};     // indices into GroundTruth::machine
  std::array<double, 8> state_ref{};       // baselines at the center recipe
  double lwr_base = 0.0, lwr_bow = 0.0;
  double oxide_base = 0.0, oxide_bow = 0.0;
  std::array<double, 8> lwr_coef{}, lwr_bow_coef{};
  std::array<double, 8> oxide_coef{}, oxide_bow_coef{};
  double lwr_noise_sigma = 0.0;
  double oxide_noise_sigma = 0.0;
};

struct GroundTruthConfig {
  double noise_scale = 1.0;   // 0 silences every random term, state noise included
  double drift_scale = 0.0;
  std::uint64_t table_seed = 914237563;
};

struct GroundTruth {
  GroundTruthConfig config;
  Recipe center;
  std::array<double, 5> steps{};
  double ratio_step = 0.25;
  std::array<double, 5> state_noise{};   // coded-unit chamber fluctuation per factor
  std::vector<ChannelTruth> machine;     // 12 channels
  std::vector<ChannelTruth> rfm;         // 70 channels
  OesTruth oes;
  WaferMapTruth wafer_map;
  RegionWindows windows{};
  int n_samples = 0;
  double sample_period = 1.0;
};

/// Normalized squared radius of a die position on the 6x6 grid, in [0, 1].
inline double die_radius_sq(int die) {
  const auto [row, col] = die_grid_position(die);
  const double dx = double(col) - 2.5;
  const double dy = double(row) - 2.5;
  return (dx * dx + dy * dy) / 12.5;
}

inline Eigen::VectorXd recipe_basis(const GroundTruth& t, const Recipe& r) {
  if (r.bcl3_flow <= 0.0)
    throw std::domain_error("recipe_basis: bcl3_flow must be positive");
  Eigen::VectorXd b(kBasisSize);
  b(0) = 1.0;
  for (int f = 0; f < 5; ++f)
    b(1 + f) = (factor_value(r, kRecipeFactors[std::size_t(f)]) -
                factor_value(t.center, kRecipeFactors[std::size_t(f)])) /
               t.steps[std::size_t(f)];
  b(6) = (r.cl2_flow / r.bcl3_flow - t.center.cl2_bcl3_ratio) / t.ratio_step;
  b(7) = b(1) * b(2);
  b(8) = b(2) * b(3);
  b(9) = b(4) * b(5);
  return b;
}

inline double channel_baseline(const ChannelTruth& ch, const Eigen::VectorXd& basis) {
  return ch.coef.dot(basis);
}

namespace detail {

/// Relative sensitivity of each non-constant basis direction. Pressure is
/// deliberately the weakest-coupled factor, so its virtual-sensor error
/// dominates once noise is calibrated; interactions are mild by design.
inline constexpr std::array<double, kBasisSize> kBasisGain = {
    1.0, 0.25, 0.9, 1.2, 0.8, 0.8, 0.6, 0.15, 0.15, 0.15};

inline Eigen::VectorXd draw_channel_coef(Rng& rng, double offset, double rel_lo,
                                         double rel_hi) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(kBasisSize);
  c(0) = offset;
  for (int k = 1; k < kBasisSize; ++k) {
    const double rel = rng.uniform(rel_lo, rel_hi);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    c(k) = offset * rel * sign * kBasisGain[std::size_t(k)];
  }
  return c;
}

inline void draw_channel_shape(Rng& rng, ChannelTruth& ch, double tin_lo,
                               double tin_hi, double ox_lo, double ox_hi,
                               double noise_rel, double noise_scale,
                               double drift_scale) {
  ch.region_levels = {1.0, rng.uniform(tin_lo, tin_hi), rng.uniform(ox_lo, ox_hi)};
  ch.ramp_slope = rng.uniform(0.0005, 0.002);
  ch.noise_sigma = noise_scale * noise_rel * rng.uniform(0.5, 1.5) * std::abs(ch.coef(0));
  ch.drift_rate = drift_scale * rng.uniform(0.0, 0.001) * std::abs(ch.coef(0));
}

}  // namespace detail

/// Builds the fixed synthetic-reactor truth: 12 machine channels, a 10-peak
/// emission spectrum over 3 spectrometers, 70 RF channels, and the per-die
/// wafer map driven by 8 machine states. Deterministic in the config.
inline GroundTruth make_ground_truth(const GroundTruthConfig& cfg = {}) {
  GroundTruth t;
  t.config = cfg;
  t.center = make_recipe(9.0, 350.0, 150.0, 40.0, 60.0);
  t.steps = {2.0, 30.0, 20.0, 8.0, 10.0};
  t.ratio_step = 0.25;
  t.state_noise = {0.30, 0.10, 0.05, 0.08, 0.06};
  t.windows = RegionWindows{RegionWindow{0.0, 30.0}, RegionWindow{30.0, 55.0},
                            RegionWindow{55.0, 75.0}};
  t.n_samples = 75;
  t.sample_period = 1.0;

  detail::Rng rng(cfg.table_seed);

  static const std::array<std::pair<const char*, double>, 12> kMachine = {{
      {"Pressure", 9.0},        {"ThrottlePos", 38.0},  {"RfTopFwd", 350.0},
      {"RfTopRefl", 6.0},       {"RfBotFwd", 150.0},    {"RfBotRefl", 4.0},
      {"BiasDc", 210.0},        {"BCl3Flow", 40.0},     {"Cl2Flow", 60.0},
      {"HeBackPress", 8.0},     {"ElectrodeTemp", 62.0},{"WallTemp", 68.0},
  }};
  for (const auto& [name, offset] : kMachine) {
    ChannelTruth ch;
    ch.name = name;
    ch.coef = detail::draw_channel_coef(rng, offset, 0.02, 0.06);
    detail::draw_channel_shape(rng, ch, 0.88, 0.96, 0.78, 0.88, 0.004,
                               cfg.noise_scale, cfg.drift_scale);
    t.machine.push_back(std::move(ch));
  }

  static const std::array<double, 10> kPeakCenters = {120, 320, 520, 740, 940,
                                                      1160, 1380, 1600, 1800, 1960};
  for (double center : kPeakCenters) {
    SpectralPeak p;
    p.center_line = center;
    p.width = rng.uniform(18.0, 55.0);
    p.amp_coef = detail::draw_channel_coef(rng, rng.uniform(40.0, 160.0), 0.02, 0.07);
    t.oes.peaks.push_back(std::move(p));
  }
  t.oes.continuum_coef = detail::draw_channel_coef(rng, 8.0, 0.01, 0.03);
  t.oes.spectrometer_gains = {0.97, 1.0, 1.03};
  t.oes.region_levels = {1.0, rng.uniform(0.55, 0.70), rng.uniform(0.30, 0.45)};
  t.oes.ramp_slope = rng.uniform(0.0005, 0.002);
  t.oes.drift_rate = cfg.drift_scale * rng.uniform(0.0, 0.02);
  t.oes.bin_noise_sigmas.resize(std::size_t(t.oes.n_spectrometers * t.oes.n_bins));
  for (auto& s : t.oes.bin_noise_sigmas)
    s = cfg.noise_scale * 0.008 * rng.uniform(0.5, 1.5) * 30.0;

  for (int sensor = 1; sensor <= 10; ++sensor) {
    const double base = rng.uniform(8.0, 80.0);
    static const std::array<double, 7> kHarmonicScale = {1.0, 0.8, 0.65, 0.5,
                                                         0.4, 0.3, 0.25};
    for (int v = 1; v <= 7; ++v) {
      ChannelTruth ch;
      ch.name = "S" + std::to_string(sensor) + "V" + std::to_string(v);
      ch.coef = detail::draw_channel_coef(rng, base * kHarmonicScale[std::size_t(v - 1)],
                                          0.02, 0.06);
      detail::draw_channel_shape(rng, ch, 0.85, 0.94, 0.72, 0.84, 0.006,
                                 cfg.noise_scale, cfg.drift_scale);
      t.rfm.push_back(std::move(ch));
    }
  }

  auto& wm = t.wafer_map;
  wm.state_channels = {0, 1, 2, 4, 6, 7, 8, 10};
  wm.lwr_base = 0.12;
  wm.lwr_bow = 0.15;
  wm.oxide_base = 40.0;
  wm.oxide_bow = 0.20;
  for (int j = 0; j < 8; ++j) {
    const ChannelTruth& ch = t.machine[std::size_t(wm.state_channels[std::size_t(j)])];
    wm.state_ref[std::size_t(j)] = ch.coef(0);
    const double swing = std::abs(ch.coef(0)) * 0.04;  // typical baseline excursion
    auto sens = [&](double base_level) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      return base_level * rng.uniform(0.05, 0.15) * sign / swing;
    };
    wm.lwr_coef[std::size_t(j)] = sens(wm.lwr_base);
    wm.lwr_bow_coef[std::size_t(j)] = rng.uniform(-0.3, 0.3);
    wm.oxide_coef[std::size_t(j)] = sens(wm.oxide_base);
    wm.oxide_bow_coef[std::size_t(j)] = rng.uniform(-0.3, 0.3);
  }
  wm.lwr_noise_sigma = cfg.noise_scale * 0.004;
  wm.oxide_noise_sigma = cfg.noise_scale * 1.2;
  return t;
}

/// Noiseless f then g: chamber baselines from the recipe, then the per-die
/// affine wafer map. The oracle simulate_wafer converges to at zero noise.
inline WaferState ground_truth_wafer_states(const Recipe& recipe,
                                            const GroundTruth& truth) {
  const Eigen::VectorXd basis = recipe_basis(truth, recipe);
  std::array<double, 8> delta{};
  for (int j = 0; j < 8; ++j)
    delta[std::size_t(j)] =
        channel_baseline(
            truth.machine[std::size_t(truth.wafer_map.state_channels[std::size_t(j)])],
            basis) -
        truth.wafer_map.state_ref[std::size_t(j)];

  const auto& wm = truth.wafer_map;
  WaferState ws;
  for (int die = 1; die <= kDiesPerWafer; ++die) {
    const double r2 = die_radius_sq(die);
    double lwr = wm.lwr_base * (1.0 + wm.lwr_bow * r2);
    double oxide = wm.oxide_base * (1.0 + wm.oxide_bow * r2);
    for (int j = 0; j < 8; ++j) {
      lwr += wm.lwr_coef[std::size_t(j)] * (1.0 + wm.lwr_bow_coef[std::size_t(j)] * r2) *
             delta[std::size_t(j)];
      oxide += wm.oxide_coef[std::size_t(j)] *
               (1.0 + wm.oxide_bow_coef[std::size_t(j)] * r2) * delta[std::size_t(j)];
    }
    ws.lwr_per_die.push_back(lwr);
    ws.oxide_loss_per_die.push_back(oxide);
  }
  return ws;
}

// ---------------------------------------------------------------------------
// Fault scenarios
// ---------------------------------------------------------------------------

enum class FaultKind { None = 0, SetpointOffset, SensorGain, SensorDrift, StuckSensor };

inline const char* to_string(FaultKind k) {
  switch (k) {
    case FaultKind::None: return "none";
    case FaultKind::SetpointOffset: return "setpoint_offset";
    case FaultKind::SensorGain: return "sensor_gain";
    case FaultKind::SensorDrift: return "sensor_drift";
    case FaultKind::StuckSensor: return "stuck_sensor";
  }
  return "?";
}

inline FaultKind parse_fault_kind(std::string_view s) {
  for (FaultKind k : {FaultKind::None, FaultKind::SetpointOffset, FaultKind::SensorGain,
                      FaultKind::SensorDrift, FaultKind::StuckSensor})
    if (s == to_string(k)) return k;
  throw config_error("unknown fault kind: '" + std::string(s) + "'");
}

/// One injected abnormality. The kind decides which fields matter:
/// SetpointOffset reads factor/delta, the sensor kinds read suite/channel plus
/// gain, slope, or value. Effects start at onset_wafer.
struct FaultScenario {
  FaultKind kind = FaultKind::None;
  RecipeFactor factor = RecipeFactor::Pressure;
  double delta = 0.0;
  SensorSuite suite = SensorSuite::Machine;
  std::string channel;
  double gain = 1.0;
  double slope = 0.0;
  double value = 0.0;
  int onset_wafer = 0;
};

inline FaultScenario fault_none() { return {}; }

inline FaultScenario fault_setpoint_offset(RecipeFactor factor, double delta,
                                           int onset_wafer = 0) {
  FaultScenario s;
  s.kind = FaultKind::SetpointOffset;
  s.factor = factor;
  s.delta = delta;
  s.onset_wafer = onset_wafer;
  return s;
}

inline FaultScenario fault_sensor_gain(SensorSuite suite, std::string channel,
                                       double gain, int onset_wafer = 0) {
  FaultScenario s;
  s.kind = FaultKind::SensorGain;
  s.suite = suite;
  s.channel = std::move(channel);
  s.gain = gain;
  s.onset_wafer = onset_wafer;
  return s;
}

inline FaultScenario fault_sensor_drift(SensorSuite suite, std::string channel,
                                        double slope, int onset_wafer = 0) {
  FaultScenario s;
  s.kind = FaultKind::SensorDrift;
  s.suite = suite;
  s.channel = std::move(channel);
  s.slope = slope;
  s.onset_wafer = onset_wafer;
  return s;
}

inline FaultScenario fault_stuck_sensor(SensorSuite suite, std::string channel,
                                        double value, int onset_wafer = 0) {
  FaultScenario s;
  s.kind = FaultKind::StuckSensor;
  s.suite = suite;
  s.channel = std::move(channel);
  s.value = value;
  s.onset_wafer = onset_wafer;
  return s;
}

/// Measurement-side corruption of one trace. Non-matching traces (and the
/// recipe-side kinds) pass through untouched.
inline SensorTrace apply_fault_scenario(SensorTrace trace, const FaultScenario& sc,
                                        int wafer_index) {
  const bool matches = (sc.kind == FaultKind::SensorGain ||
                        sc.kind == FaultKind::SensorDrift ||
                        sc.kind == FaultKind::StuckSensor) &&
                       trace.suite == sc.suite && trace.channel == sc.channel &&
                       wafer_index >= sc.onset_wafer;
  if (!matches) return trace;
  switch (sc.kind) {
    case FaultKind::SensorGain:
      for (auto& s : trace.samples) s.value *= sc.gain;
      break;
    case FaultKind::SensorDrift:
      for (auto& s : trace.samples) s.value += sc.slope * double(wafer_index - sc.onset_wafer);
      break;
    case FaultKind::StuckSensor:
      for (auto& s : trace.samples) s.value = sc.value;
      break;
    default:
      break;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Wafer simulation
// ---------------------------------------------------------------------------

namespace detail {

inline EtchRegion region_of_time(const RegionWindows& w, double t) {
  if (t < w[1].start) return EtchRegion::Al;
  if (t < w[2].start) return EtchRegion::TiN;
  return EtchRegion::Ox;
}

inline double shape_factor(const RegionWindows& w, const std::array<double, 3>& levels,
                           double ramp_slope, double t) {
  const EtchRegion r = region_of_time(w, t);
  const double local = t - w[std::size_t(int(r))].start;
  return levels[std::size_t(int(r))] * (1.0 + ramp_slope * local);
}

inline std::string wafer_name(int wafer_index) {
  std::string n = std::to_string(wafer_index);
  while (n.size() < 3) n.insert(n.begin(), '0');
  return "w" + n;
}

inline Recipe apply_state_noise(const Recipe& commanded, const GroundTruth& truth,
                                Rng& rng) {
  Recipe achieved = commanded;
  for (std::size_t f = 0; f < 5; ++f) {
    const double dz = rng.gauss(0.0, truth.state_noise[f] * truth.config.noise_scale);
    achieved = with_factor(achieved, kRecipeFactors[f],
                           factor_value(achieved, kRecipeFactors[f]) + dz * truth.steps[f]);
  }
  return achieved;
}

}  // namespace detail

/// The recipe the chamber actually held for this wafer seed: the commanded
/// values plus the seeded state fluctuation. simulate_wafer consumes the
/// same leading draws, so its traces encode exactly this recipe.
inline Recipe achieved_recipe(const Recipe& commanded, const GroundTruth& truth,
                              std::uint64_t seed) {
  detail::Rng rng(seed);
  return detail::apply_state_noise(commanded, truth, rng);
}

/// One complete simulated run. Chamber conditions follow the actual recipe
/// (the nominal plus any active SetpointOffset) plus seeded per-wafer state
/// fluctuation; traces, wafer state, and sensor faults layer on top of that.
inline WaferRecord simulate_wafer(const Recipe& recipe, const GroundTruth& truth,
                                  const FaultScenario& scenario, int wafer_index,
                                  std::uint64_t seed) {
  if (wafer_index < 0)
    throw std::invalid_argument("simulate_wafer: wafer_index must be >= 0");

  WaferRecord rec;
  rec.wafer_id = detail::wafer_name(wafer_index);
  rec.lot_id = "lot0";
  rec.nominal_recipe = recipe;
  rec.actual_recipe = recipe;
  if (scenario.kind == FaultKind::SetpointOffset && wafer_index >= scenario.onset_wafer) {
    rec.actual_recipe = with_factor(recipe, scenario.factor,
                                    factor_value(recipe, scenario.factor) + scenario.delta);
    if (rec.actual_recipe.pressure <= 0.0 || rec.actual_recipe.top_power < 0.0 ||
        rec.actual_recipe.rf_bottom < 0.0 || rec.actual_recipe.bcl3_flow < 0.0 ||
        rec.actual_recipe.cl2_flow < 0.0)
      throw std::invalid_argument("simulate_wafer: setpoint offset on " +
                                  std::string(to_string(scenario.factor)) +
                                  " drives the recipe out of range");
  }

  detail::Rng rng(seed);

  // chamber never sits exactly at the commanded values
  const Recipe achieved = detail::apply_state_noise(rec.actual_recipe, truth, rng);
  const Eigen::VectorXd basis = recipe_basis(truth, achieved);

  const auto& w = truth.windows;
  auto trace_times = [&](int i) { return double(i) * truth.sample_period; };

  auto make_channel_trace = [&](SensorSuite suite, const ChannelTruth& ch) {
    SensorTrace tr;
    tr.wafer_id = rec.wafer_id;
    tr.suite = suite;
    tr.channel = ch.name;
    tr.region_windows = w;
    const double base = channel_baseline(ch, basis);
    for (int i = 0; i < truth.n_samples; ++i) {
      const double t = trace_times(i);
      double v = base * detail::shape_factor(w, ch.region_levels, ch.ramp_slope, t);
      v += ch.drift_rate * double(wafer_index);
      if (ch.noise_sigma > 0.0) v += rng.gauss(0.0, ch.noise_sigma);
      tr.samples.push_back({t, v});
    }
    return tr;
  };

  for (const auto& ch : truth.machine)
    rec.traces.push_back(make_channel_trace(SensorSuite::Machine, ch));

  // line-resolved spectrum once (time shape is separable), banded via bin_spectra
  const auto& oes = truth.oes;
  const double continuum = oes.continuum_coef.dot(basis);
  std::vector<double> peak_amps;
  for (const auto& p : oes.peaks) peak_amps.push_back(p.amp_coef.dot(basis));
  Eigen::MatrixXd lines(1, oes.n_lines);
  for (int l = 0; l < oes.n_lines; ++l) {
    double v = continuum;
    for (std::size_t pi = 0; pi < oes.peaks.size(); ++pi) {
      const double dz = (double(l) - oes.peaks[pi].center_line) / oes.peaks[pi].width;
      v += peak_amps[pi] * std::exp(-0.5 * dz * dz);
    }
    lines(0, l) = v;
  }
  const Eigen::MatrixXd binned = bin_spectra(lines, oes.n_bins);
  for (int s = 0; s < oes.n_spectrometers; ++s) {
    for (int b = 0; b < oes.n_bins; ++b) {
      SensorTrace tr;
      tr.wafer_id = rec.wafer_id;
      tr.suite = SensorSuite::Oes;
      tr.channel = "OES" + std::to_string(s + 1) + "B" +
                   (b < 10 ? "0" + std::to_string(b) : std::to_string(b));
      tr.region_windows = w;
      const double base = binned(0, b) * oes.spectrometer_gains[std::size_t(s)];
      const double sigma = oes.bin_noise_sigmas[std::size_t(s * oes.n_bins + b)];
      for (int i = 0; i < truth.n_samples; ++i) {
        const double t = trace_times(i);
        double v = base * detail::shape_factor(w, oes.region_levels, oes.ramp_slope, t);
        v += oes.drift_rate * double(wafer_index);
        if (sigma > 0.0) v += rng.gauss(0.0, sigma);
        tr.samples.push_back({t, v});
      }
      rec.traces.push_back(std::move(tr));
    }
  }

  for (const auto& ch : truth.rfm)
    rec.traces.push_back(make_channel_trace(SensorSuite::Rfm, ch));

  for (auto& tr : rec.traces) tr = apply_fault_scenario(std::move(tr), scenario, wafer_index);

  // the wafer reacts to the achieved chamber state, not the commanded one
  WaferState ws = ground_truth_wafer_states(achieved, truth);
  for (auto& v : ws.lwr_per_die)
    if (truth.wafer_map.lwr_noise_sigma > 0.0)
      v += rng.gauss(0.0, truth.wafer_map.lwr_noise_sigma);
  for (auto& v : ws.oxide_loss_per_die)
    if (truth.wafer_map.oxide_noise_sigma > 0.0)
      v += rng.gauss(0.0, truth.wafer_map.oxide_noise_sigma);
  rec.wafer_state = std::move(ws);
  return rec;
}

/// Simulates one wafer per recipe with per-wafer seeds base_seed + index.
inline std::vector<WaferRecord> simulate_dataset(const std::vector<Recipe>& recipes,
                                                 const GroundTruth& truth,
                                                 const FaultScenario& scenario,
                                                 std::uint64_t base_seed) {
  std::vector<WaferRecord> out;
  for (std::size_t i = 0; i < recipes.size(); ++i)
    out.push_back(simulate_wafer(recipes[i], truth, scenario, int(i),
                                 base_seed + std::uint64_t(i)));
  return out;
}

}  // namespace etchfdc
