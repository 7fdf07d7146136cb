#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/common.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Recipe
// ---------------------------------------------------------------------------

/// One etch recipe: five independent setpoints plus the two derived
/// quantities the process engineers track (gas ratio, total flow).
struct Recipe {
  double pressure = 0.0;        // mTorr
  double top_power = 0.0;       // watts
  double rf_bottom = 0.0;       // watts
  double bcl3_flow = 0.0;       // sccm
  double cl2_flow = 0.0;        // sccm
  double cl2_bcl3_ratio = 0.0;  // derived, dimensionless
  double total_flow = 0.0;      // derived, sccm
};

/// Builds a Recipe with the derived fields filled in. With bcl3_flow == 0 the
/// ratio is stored as 0; derive_recipe_targets refuses such recipes.
inline Recipe make_recipe(double pressure, double top_power, double rf_bottom,
                          double bcl3_flow, double cl2_flow) {
  Recipe r;
  r.pressure = pressure;
  r.top_power = top_power;
  r.rf_bottom = rf_bottom;
  r.bcl3_flow = bcl3_flow;
  r.cl2_flow = cl2_flow;
  r.cl2_bcl3_ratio = bcl3_flow > 0.0 ? cl2_flow / bcl3_flow : 0.0;
  r.total_flow = bcl3_flow + cl2_flow;
  return r;
}

/// The five independently settable factors, in design order.
enum class RecipeFactor { Pressure = 0, TopPower, RfBottom, Bcl3Flow, Cl2Flow };

inline constexpr std::array<RecipeFactor, 5> kRecipeFactors = {
    RecipeFactor::Pressure, RecipeFactor::TopPower, RecipeFactor::RfBottom,
    RecipeFactor::Bcl3Flow, RecipeFactor::Cl2Flow};

inline const char* to_string(RecipeFactor f) {
  switch (f) {
    case RecipeFactor::Pressure: return "pressure";
    case RecipeFactor::TopPower: return "top_power";
    case RecipeFactor::RfBottom: return "rf_bottom";
    case RecipeFactor::Bcl3Flow: return "bcl3_flow";
    case RecipeFactor::Cl2Flow: return "cl2_flow";
  }
  return "?";
}

inline double factor_value(const Recipe& r, RecipeFactor f) {
  switch (f) {
    case RecipeFactor::Pressure: return r.pressure;
    case RecipeFactor::TopPower: return r.top_power;
    case RecipeFactor::RfBottom: return r.rf_bottom;
    case RecipeFactor::Bcl3Flow: return r.bcl3_flow;
    case RecipeFactor::Cl2Flow: return r.cl2_flow;
  }
  return 0.0;
}

/// Returns a copy of `r` with one factor replaced; derived fields recomputed.
inline Recipe with_factor(const Recipe& r, RecipeFactor f, double value) {
  double v[5] = {r.pressure, r.top_power, r.rf_bottom, r.bcl3_flow, r.cl2_flow};
  v[static_cast<int>(f)] = value;
  return make_recipe(v[0], v[1], v[2], v[3], v[4]);
}

/// The seven quantities the setpoint virtual sensors predict.
enum class RecipeTarget {
  Pressure = 0, TopPower, RfBottom, Bcl3, Cl2, Cl2Bcl3Ratio, TotalFlow
};

inline constexpr std::array<RecipeTarget, 7> kRecipeTargets = {
    RecipeTarget::Pressure, RecipeTarget::TopPower,     RecipeTarget::RfBottom,
    RecipeTarget::Bcl3,     RecipeTarget::Cl2,          RecipeTarget::Cl2Bcl3Ratio,
    RecipeTarget::TotalFlow};

inline const char* to_string(RecipeTarget t) {
  switch (t) {
    case RecipeTarget::Pressure: return "pressure";
    case RecipeTarget::TopPower: return "top_power";
    case RecipeTarget::RfBottom: return "rf_bottom";
    case RecipeTarget::Bcl3: return "bcl3";
    case RecipeTarget::Cl2: return "cl2";
    case RecipeTarget::Cl2Bcl3Ratio: return "cl2_bcl3_ratio";
    case RecipeTarget::TotalFlow: return "total_flow";
  }
  return "?";
}

/// Target vector [pressure, top_power, rf_bottom, bcl3, cl2, cl2/bcl3, total].
/// Throws std::domain_error when bcl3_flow is zero (ratio undefined).
inline std::array<double, 7> derive_recipe_targets(const Recipe& r) {
  if (r.bcl3_flow <= 0.0)
    throw std::domain_error(
        "derive_recipe_targets: cl2_bcl3_ratio undefined, bcl3_flow is zero");
  return {r.pressure,  r.top_power,           r.rf_bottom, r.bcl3_flow,
          r.cl2_flow,  r.cl2_flow / r.bcl3_flow, r.bcl3_flow + r.cl2_flow};
}

// ---------------------------------------------------------------------------
// Sensor suites, etch regions, traces
// ---------------------------------------------------------------------------

enum class SensorSuite { Machine = 0, Oes, Rfm };
inline constexpr std::array<SensorSuite, 3> kSensorSuites = {
    SensorSuite::Machine, SensorSuite::Oes, SensorSuite::Rfm};

inline const char* to_string(SensorSuite s) {
  switch (s) {
    case SensorSuite::Machine: return "machine";
    case SensorSuite::Oes: return "oes";
    case SensorSuite::Rfm: return "rfm";
  }
  return "?";
}

inline SensorSuite parse_suite(std::string_view s) {
  if (s == "machine") return SensorSuite::Machine;
  if (s == "oes") return SensorSuite::Oes;
  if (s == "rfm") return SensorSuite::Rfm;
  throw config_error("unknown sensor suite: '" + std::string(s) +
                     "' (expected machine|oes|rfm)");
}

enum class EtchRegion { Al = 0, TiN, Ox };
inline constexpr std::array<EtchRegion, 3> kEtchRegions = {
    EtchRegion::Al, EtchRegion::TiN, EtchRegion::Ox};

inline const char* to_string(EtchRegion r) {
  switch (r) {
    case EtchRegion::Al: return "al";
    case EtchRegion::TiN: return "tin";
    case EtchRegion::Ox: return "ox";
  }
  return "?";
}

inline EtchRegion parse_region(std::string_view s) {
  if (s == "al") return EtchRegion::Al;
  if (s == "tin") return EtchRegion::TiN;
  if (s == "ox") return EtchRegion::Ox;
  throw config_error("unknown etch region: '" + std::string(s) +
                     "' (expected al|tin|ox)");
}

struct Sample {
  double time = 0.0;  // seconds from etch start
  double value = 0.0;
};

struct RegionWindow {
  double start = 0.0;  // inclusive
  double end = 0.0;    // exclusive
};

using RegionWindows = std::array<RegionWindow, 3>;  // indexed by EtchRegion

/// Time history of one sensor channel over one etch.
struct SensorTrace {
  std::string wafer_id;
  SensorSuite suite = SensorSuite::Machine;
  std::string channel;
  std::vector<Sample> samples;
  std::optional<RegionWindows> region_windows;
};

// ---------------------------------------------------------------------------
// Wafer state and records
// ---------------------------------------------------------------------------

inline constexpr int kDiesPerWafer = 32;

/// Post-etch metrology, one value per die position 1..32.
///
/// Die positions follow a fixed row-major convention on a 6x6 grid with the
/// four corners absent (the usual 32-die map): position 1 is row 0 / col 1,
/// numbering proceeds left-to-right then top-to-bottom, skipping corners.
struct WaferState {
  std::vector<double> lwr_per_die;        // microns
  std::vector<double> oxide_loss_per_die; // angstroms
};

/// (row, col) of a die position (1..32) on the 6x6-minus-corners grid.
inline std::pair<int, int> die_grid_position(int die) {
  if (die < 1 || die > kDiesPerWafer)
    throw std::invalid_argument("die position out of range 1..32");
  int n = 0;
  for (int row = 0; row < 6; ++row) {
    for (int col = 0; col < 6; ++col) {
      const bool corner = (row == 0 || row == 5) && (col == 0 || col == 5);
      if (corner) continue;
      if (++n == die) return {row, col};
    }
  }
  return {0, 0};  // unreachable
}

enum class Split { Train = 0, Validation, Test, Unassigned };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  if (s == "unassigned") return Split::Unassigned;
  throw data_error("unknown split tag: '" + std::string(s) + "'");
}

/// Everything recorded about one processed wafer. `actual_recipe` is ground
/// truth available only from the simulator; on clean wafers it equals the
/// nominal recipe.
struct WaferRecord {
  std::string wafer_id;
  std::string lot_id;
  Recipe nominal_recipe;
  Recipe actual_recipe;
  std::vector<SensorTrace> traces;
  std::optional<WaferState> wafer_state;
  Split split = Split::Unassigned;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_recipe(const Recipe& r, const std::string& label,
                            std::vector<std::string>& out) {
  if (!(r.pressure > 0.0))
    out.push_back(label + ".pressure: must be > 0, got " + format_double(r.pressure));
  if (r.top_power < 0.0)
    out.push_back(label + ".top_power: must be >= 0");
  if (r.rf_bottom < 0.0)
    out.push_back(label + ".rf_bottom: must be >= 0");
  if (r.bcl3_flow < 0.0)
    out.push_back(label + ".bcl3_flow: must be >= 0");
  if (r.cl2_flow < 0.0)
    out.push_back(label + ".cl2_flow: must be >= 0");
  if (r.bcl3_flow > 0.0 && r.cl2_bcl3_ratio != r.cl2_flow / r.bcl3_flow)
    out.push_back(label + ".cl2_bcl3_ratio: inconsistent with cl2_flow/bcl3_flow");
  if (r.total_flow != r.bcl3_flow + r.cl2_flow)
    out.push_back(label + ".total_flow: inconsistent with bcl3_flow + cl2_flow");
}

}  // namespace detail

/// Checks every type invariant; returns one human-readable violation per
/// breach (empty list means the record is well formed).
inline std::vector<std::string> validate_wafer_record(const WaferRecord& rec) {
  std::vector<std::string> v;
  detail::validate_recipe(rec.nominal_recipe, "nominal_recipe", v);
  detail::validate_recipe(rec.actual_recipe, "actual_recipe", v);

  std::vector<std::pair<SensorSuite, std::string>> seen;
  for (const auto& tr : rec.traces) {
    auto key = std::make_pair(tr.suite, tr.channel);
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      v.push_back(std::string("traces: duplicate channel '") + tr.channel +
                  "' for suite " + to_string(tr.suite));
    else
      seen.push_back(key);

    for (std::size_t i = 1; i < tr.samples.size(); ++i) {
      if (!(tr.samples[i].time > tr.samples[i - 1].time)) {
        v.push_back("traces[" + tr.channel +
                    "].samples: times not strictly increasing at index " +
                    std::to_string(i));
        break;
      }
    }

    if (tr.region_windows) {
      const auto& w = *tr.region_windows;
      for (int r = 0; r < 3; ++r)
        if (!(w[r].start < w[r].end))
          v.push_back("traces[" + tr.channel + "].region_windows[" +
                      to_string(kEtchRegions[r]) + "]: empty or inverted window");
      if (w[0].end > w[1].start || w[1].end > w[2].start)
        v.push_back("traces[" + tr.channel +
                    "].region_windows: windows overlap or are out of Al->TiN->Ox order");
    }
  }

  if (rec.wafer_state) {
    const auto& ws = *rec.wafer_state;
    if (ws.lwr_per_die.size() != kDiesPerWafer)
      v.push_back("wafer_state.lwr_per_die: expected 32, got " +
                  std::to_string(ws.lwr_per_die.size()));
    if (ws.oxide_loss_per_die.size() != kDiesPerWafer)
      v.push_back("wafer_state.oxide_loss_per_die: expected 32, got " +
                  std::to_string(ws.oxide_loss_per_die.size()));
  } else if (rec.split == Split::Train || rec.split == Split::Validation) {
    v.push_back("wafer_state: required for train/validation wafers, absent");
  }

  return v;
}

// ---------------------------------------------------------------------------
// Split assignment
// ---------------------------------------------------------------------------

struct SplitCounts {
  int train = 35;
  int validation = 23;
  int test = 12;
};

/// Random-without-replacement split assignment, deterministic per seed.
/// Records beyond train+validation+test stay Unassigned.
inline std::vector<WaferRecord> assign_splits(std::vector<WaferRecord> records,
                                              std::uint64_t seed,
                                              SplitCounts counts = {}) {
  const std::size_t n = records.size();
  const long want = long(counts.train) + counts.validation + counts.test;
  if (counts.train < 0 || counts.validation < 0 || counts.test < 0)
    throw std::invalid_argument("assign_splits: negative split count");
  if (want > static_cast<long>(n))
    throw std::invalid_argument("assign_splits: split counts sum to " +
                                std::to_string(want) + " but only " +
                                std::to_string(n) + " records given");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  detail::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.index(i)]);

  for (auto& r : records) r.split = Split::Unassigned;
  std::size_t at = 0;
  for (int i = 0; i < counts.train; ++i) records[order[at++]].split = Split::Train;
  for (int i = 0; i < counts.validation; ++i)
    records[order[at++]].split = Split::Validation;
  for (int i = 0; i < counts.test; ++i) records[order[at++]].split = Split::Test;
  return records;
}

}  // namespace etchfdc
