#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "etchfdc/core.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Metric kinds and per-region metric sets
// ---------------------------------------------------------------------------

/// Per-region summary statistics of one channel (the TAS metrics).
enum class MetricKind { Avg = 0, Sigma, Max, Min, AdjR2, Ssr };

inline constexpr std::array<MetricKind, 6> kMetricKinds = {
    MetricKind::Avg, MetricKind::Sigma, MetricKind::Max,
    MetricKind::Min, MetricKind::AdjR2, MetricKind::Ssr};

inline const char* to_string(MetricKind m) {
  switch (m) {
    case MetricKind::Avg: return "avg";
    case MetricKind::Sigma: return "sigma";
    case MetricKind::Max: return "max";
    case MetricKind::Min: return "min";
    case MetricKind::AdjR2: return "adjr2";
    case MetricKind::Ssr: return "ssr";
  }
  return "?";
}

inline MetricKind parse_metric(std::string_view s) {
  for (MetricKind m : kMetricKinds)
    if (s == to_string(m)) return m;
  throw config_error("unknown metric kind: '" + std::string(s) + "'");
}

/// Which metrics to extract per (suite, region). Iteration over a set always
/// follows the MetricKind declaration order, so column layouts are stable.
class MetricSetConfig {
public:
  MetricSetConfig() = default;

  void set(SensorSuite s, EtchRegion r, std::set<MetricKind> kinds) {
    if (kinds.empty())
      throw config_error("metric set for " + std::string(to_string(s)) + "/" +
                         to_string(r) + " must be non-empty");
    sets_[int(s)][int(r)] = std::move(kinds);
  }

  const std::set<MetricKind>& get(SensorSuite s, EtchRegion r) const {
    return sets_[int(s)][int(r)];
  }

  /// Metric kinds in deterministic (declaration) order.
  std::vector<MetricKind> ordered(SensorSuite s, EtchRegion r) const {
    std::vector<MetricKind> out;
    for (MetricKind m : kMetricKinds)
      if (sets_[int(s)][int(r)].count(m)) out.push_back(m);
    return out;
  }

private:
  std::array<std::array<std::set<MetricKind>, 3>, 3> sets_{};
};

/// The stock metric layout. Per suite it reproduces the published per-region
/// feature counts: machine 24/60/24, OES 126/252/126, RFM 140/280/140.
inline MetricSetConfig default_metric_config() {
  using M = MetricKind;
  MetricSetConfig c;
  c.set(SensorSuite::Machine, EtchRegion::Al, {M::Avg, M::Sigma});
  c.set(SensorSuite::Machine, EtchRegion::TiN, {M::Avg, M::Sigma, M::Max, M::Min, M::AdjR2});
  c.set(SensorSuite::Machine, EtchRegion::Ox, {M::Avg, M::Sigma});
  c.set(SensorSuite::Oes, EtchRegion::Al, {M::Avg});
  c.set(SensorSuite::Oes, EtchRegion::TiN, {M::Max, M::AdjR2});
  c.set(SensorSuite::Oes, EtchRegion::Ox, {M::Avg});
  c.set(SensorSuite::Rfm, EtchRegion::Al, {M::Avg, M::Sigma});
  c.set(SensorSuite::Rfm, EtchRegion::TiN, {M::Sigma, M::Max, M::AdjR2, M::Ssr});
  c.set(SensorSuite::Rfm, EtchRegion::Ox, {M::Avg, M::Sigma});
  return c;
}

// ---------------------------------------------------------------------------
// Spectral binning
// ---------------------------------------------------------------------------

/// Reduces line-resolved spectra (rows = sample times, cols = spectral lines)
/// to n_bins contiguous wavelength bands; each band value is the mean
/// intensity of its lines. Band sizes differ by at most one line.
inline Eigen::MatrixXd bin_spectra(const Eigen::MatrixXd& raw_lines, int n_bins) {
  const Eigen::Index n_lines = raw_lines.cols();
  if (n_bins < 1 || n_bins > n_lines)
    throw std::invalid_argument("bin_spectra: n_bins " + std::to_string(n_bins) +
                                " outside 1.." + std::to_string(n_lines));
  Eigen::MatrixXd out(raw_lines.rows(), n_bins);
  for (int b = 0; b < n_bins; ++b) {
    const Eigen::Index lo = n_lines * b / n_bins;
    const Eigen::Index hi = n_lines * (b + 1) / n_bins;
    out.col(b) = raw_lines.middleCols(lo, hi - lo).rowwise().mean();
  }
  return out;
}

/// [lo, hi) line-index range of one bin, matching bin_spectra's partition.
inline std::pair<int, int> spectral_bin_range(int n_lines, int n_bins, int bin) {
  return {n_lines * bin / n_bins, n_lines * (bin + 1) / n_bins};
}

// ---------------------------------------------------------------------------
// Region segmentation
// ---------------------------------------------------------------------------

/// Finds the Al/TiN/Ox windows. When the endpoint trace already carries
/// window annotations those win outright; otherwise each boundary is the
/// first downward crossing of its threshold on the endpoint channel.
inline RegionWindows segment_regions(const std::vector<SensorTrace>& traces,
                                     const std::string& endpoint_channel,
                                     std::pair<double, double> thresholds) {
  const SensorTrace* ep = nullptr;
  for (const auto& tr : traces)
    if (tr.channel == endpoint_channel) { ep = &tr; break; }
  if (!ep)
    throw std::invalid_argument("segment_regions: endpoint channel '" +
                                endpoint_channel + "' not present");
  if (ep->region_windows) return *ep->region_windows;

  if (ep->samples.size() < 2)
    throw std::runtime_error("segment_regions: endpoint trace too short to segment");

  auto first_downward_crossing = [&](double thr, std::size_t from) -> std::optional<std::size_t> {
    for (std::size_t i = std::max<std::size_t>(from, 1); i < ep->samples.size(); ++i)
      if (ep->samples[i - 1].value >= thr && ep->samples[i].value < thr) return i;
    return std::nullopt;
  };

  const auto al_cross = first_downward_crossing(thresholds.first, 1);
  if (!al_cross)
    throw std::runtime_error(
        "segment_regions: Al/TiN boundary not found (threshold never crossed)");
  const auto tin_cross = first_downward_crossing(thresholds.second, *al_cross + 1);
  if (!tin_cross)
    throw std::runtime_error(
        "segment_regions: TiN/Ox boundary not found (threshold never crossed)");

  const double t0 = ep->samples.front().time;
  const double t1 = ep->samples[*al_cross].time;
  const double t2 = ep->samples[*tin_cross].time;
  const double t_end = ep->samples.back().time;
  // windows are half-open; pad the tail so the last sample stays inside Ox
  return RegionWindows{RegionWindow{t0, t1}, RegionWindow{t1, t2},
                       RegionWindow{t2, std::nextafter(t_end, t_end + 1.0)}};
}

/// Stamps one window set onto every trace.
inline std::vector<SensorTrace> apply_region_windows(std::vector<SensorTrace> traces,
                                                     const RegionWindows& windows) {
  for (auto& tr : traces) tr.region_windows = windows;
  return traces;
}

// ---------------------------------------------------------------------------
// Metric extraction
// ---------------------------------------------------------------------------

namespace detail {

struct LineFit {
  double slope = 0.0, intercept = 0.0, ssr = 0.0, sst = 0.0;
};

inline LineFit fit_value_vs_time(const std::vector<double>& t,
                                 const std::vector<double>& v) {
  const std::size_t n = t.size();
  double tm = 0, vm = 0;
  for (std::size_t i = 0; i < n; ++i) { tm += t[i]; vm += v[i]; }
  tm /= double(n); vm /= double(n);
  double stt = 0, stv = 0, svv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    stv += (t[i] - tm) * (v[i] - vm);
    svv += (v[i] - vm) * (v[i] - vm);
  }
  LineFit f;
  f.slope = stt > 0 ? stv / stt : 0.0;
  f.intercept = vm - f.slope * tm;
  f.sst = svv;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = v[i] - (f.intercept + f.slope * t[i]);
    f.ssr += r * r;
  }
  return f;
}

}  // namespace detail

/// Summary metrics of one trace over one region window.
///
/// Avg/Max/Min are the plain extrema and mean; Sigma is the n-1 sample
/// standard deviation (0 for a single sample). AdjR2/Ssr come from the
/// least-squares line value ~ a + b*time inside the window; a zero-variance
/// window has AdjR2 = 0 by convention, and two points fit exactly (AdjR2 = 1).
inline std::map<MetricKind, double> extract_metrics(const SensorTrace& trace,
                                                    EtchRegion region,
                                                    const std::set<MetricKind>& kinds) {
  if (!trace.region_windows)
    throw std::invalid_argument("extract_metrics: trace '" + trace.channel +
                                "' has no region windows");
  const RegionWindow w = (*trace.region_windows)[int(region)];
  std::vector<double> times, values;
  for (const auto& s : trace.samples)
    if (s.time >= w.start && s.time < w.end) {
      times.push_back(s.time);
      values.push_back(s.value);
    }

  const bool needs_fit = kinds.count(MetricKind::AdjR2) || kinds.count(MetricKind::Ssr);
  const std::size_t required = needs_fit ? 2 : 1;
  if (values.size() < required)
    throw std::runtime_error("extract_metrics: insufficient data in region " +
                             std::string(to_string(region)) + " of channel '" +
                             trace.channel + "' (" + std::to_string(values.size()) +
                             " samples, need " + std::to_string(required) + ")");

  const std::size_t n = values.size();
  std::map<MetricKind, double> out;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= double(n);

  if (kinds.count(MetricKind::Avg)) out[MetricKind::Avg] = mean;
  if (kinds.count(MetricKind::Sigma)) {
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    out[MetricKind::Sigma] = n > 1 ? std::sqrt(ss / double(n - 1)) : 0.0;
  }
  if (kinds.count(MetricKind::Max))
    out[MetricKind::Max] = *std::max_element(values.begin(), values.end());
  if (kinds.count(MetricKind::Min))
    out[MetricKind::Min] = *std::min_element(values.begin(), values.end());

  if (needs_fit) {
    const auto fit = detail::fit_value_vs_time(times, values);
    if (kinds.count(MetricKind::Ssr)) out[MetricKind::Ssr] = fit.ssr;
    if (kinds.count(MetricKind::AdjR2)) {
      double adj = 0.0;
      if (fit.sst > 0.0) {
        const double r2 = 1.0 - fit.ssr / fit.sst;
        adj = n > 2 ? 1.0 - (1.0 - r2) * double(n - 1) / double(n - 2) : 1.0;
      }
      out[MetricKind::AdjR2] = adj;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature vectors and matrices
// ---------------------------------------------------------------------------

/// Pretreated values for one wafer, one suite, one region; entry order is
/// channel-major, metric-minor and deterministic.
struct FeatureVector {
  std::string wafer_id;
  SensorSuite suite = SensorSuite::Machine;
  EtchRegion region = EtchRegion::Al;
  std::vector<std::pair<std::string, double>> entries;  // name -> value
};

inline std::string feature_column_name(const std::string& channel, EtchRegion region,
                                       MetricKind metric) {
  return channel + "|" + to_string(region) + "|" + to_string(metric);
}

/// Channels of one suite in a record, in trace order.
inline std::vector<std::string> channel_inventory(const WaferRecord& rec,
                                                  SensorSuite suite) {
  std::vector<std::string> names;
  for (const auto& tr : rec.traces)
    if (tr.suite == suite) names.push_back(tr.channel);
  return names;
}

inline FeatureVector extract_feature_vector(const WaferRecord& rec, SensorSuite suite,
                                            EtchRegion region,
                                            const MetricSetConfig& config) {
  FeatureVector fv;
  fv.wafer_id = rec.wafer_id;
  fv.suite = suite;
  fv.region = region;
  const auto kinds = config.get(suite, region);
  const auto ordered = config.ordered(suite, region);
  for (const auto& tr : rec.traces) {
    if (tr.suite != suite) continue;
    auto metrics = extract_metrics(tr, region, kinds);
    for (MetricKind m : ordered)
      fv.entries.emplace_back(feature_column_name(tr.channel, region, m), metrics.at(m));
  }
  return fv;
}

struct FeatureMatrix {
  Eigen::MatrixXd values;                 // wafers x features
  std::vector<std::string> column_names;  // "<channel>|<region>|<metric>"
  std::vector<std::string> wafer_ids;     // row labels
};

/// Stacks per-wafer feature vectors into a matrix. The channel inventory is
/// taken from the first record; any wafer missing one of those channels is an
/// error naming the wafer and channel.
inline FeatureMatrix build_feature_matrix(const std::vector<const WaferRecord*>& records,
                                          SensorSuite suite, EtchRegion region,
                                          const MetricSetConfig& config) {
  if (records.empty())
    throw data_error("build_feature_matrix: no wafer records");
  const auto channels = channel_inventory(*records.front(), suite);
  const auto ordered = config.ordered(suite, region);
  const auto kinds = config.get(suite, region);

  FeatureMatrix fm;
  for (const auto& ch : channels)
    for (MetricKind m : ordered)
      fm.column_names.push_back(feature_column_name(ch, region, m));
  fm.values.resize(Eigen::Index(records.size()), Eigen::Index(fm.column_names.size()));

  for (std::size_t row = 0; row < records.size(); ++row) {
    const auto& rec = *records[row];
    fm.wafer_ids.push_back(rec.wafer_id);
    Eigen::Index col = 0;
    for (const auto& ch : channels) {
      const SensorTrace* tr = nullptr;
      for (const auto& t : rec.traces)
        if (t.suite == suite && t.channel == ch) { tr = &t; break; }
      if (!tr)
        throw data_error("build_feature_matrix: wafer " + rec.wafer_id +
                         " missing channel '" + ch + "' for suite " + to_string(suite));
      auto metrics = extract_metrics(*tr, region, kinds);
      for (MetricKind m : ordered) fm.values(Eigen::Index(row), col++) = metrics.at(m);
    }
  }
  return fm;
}

inline FeatureMatrix build_feature_matrix(const std::vector<WaferRecord>& records,
                                          SensorSuite suite, EtchRegion region,
                                          const MetricSetConfig& config) {
  std::vector<const WaferRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  return build_feature_matrix(ptrs, suite, region, config);
}

/// Full per-suite layout: the three region blocks side by side (Al, TiN, Ox).
/// Stock config column counts per suite: machine 108, OES 504, RFM 560.
inline FeatureMatrix build_suite_feature_matrix(const std::vector<WaferRecord>& records,
                                                SensorSuite suite,
                                                const MetricSetConfig& config) {
  FeatureMatrix out;
  for (EtchRegion region : kEtchRegions) {
    FeatureMatrix part = build_feature_matrix(records, suite, region, config);
    if (out.column_names.empty()) {
      out = std::move(part);
      continue;
    }
    const Eigen::Index old_cols = out.values.cols();
    out.values.conservativeResize(Eigen::NoChange, old_cols + part.values.cols());
    out.values.rightCols(part.values.cols()) = part.values;
    out.column_names.insert(out.column_names.end(), part.column_names.begin(),
                            part.column_names.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Autoscaling
// ---------------------------------------------------------------------------

struct StandardizeParams {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;               // 1.0 for flagged columns
  std::vector<bool> zero_variance;      // flagged constant columns
};

inline Eigen::MatrixXd apply_standardize(const Eigen::MatrixXd& X,
                                         const StandardizeParams& p) {
  if (X.cols() != p.means.size())
    throw std::invalid_argument("standardize: column count mismatch (" +
                                std::to_string(X.cols()) + " vs fitted " +
                                std::to_string(p.means.size()) + ")");
  return (X.rowwise() - p.means.transpose()).array().rowwise() /
         p.scales.transpose().array();
}

/// Column-wise autoscaling. Without params: fit mean/std (n-1) on X and
/// return the scaled copy plus the fitted params; zero-variance columns get
/// scale 1 and a flag. With params: apply them frozen.
inline std::pair<Eigen::MatrixXd, StandardizeParams> standardize(
    const Eigen::MatrixXd& X, const std::optional<StandardizeParams>& params = {}) {
  if (params) return {apply_standardize(X, *params), *params};
  if (X.rows() < 2)
    throw std::invalid_argument("standardize: need >= 2 rows to fit scaling");

  StandardizeParams p;
  p.means = X.colwise().mean();
  p.scales.resize(X.cols());
  p.zero_variance.assign(std::size_t(X.cols()), false);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double ss = (X.col(j).array() - p.means(j)).square().sum();
    const double sd = std::sqrt(ss / double(X.rows() - 1));
    if (sd > 0.0) {
      p.scales(j) = sd;
    } else {
      p.scales(j) = 1.0;
      p.zero_variance[std::size_t(j)] = true;
    }
  }
  return {apply_standardize(X, p), p};
}

}  // namespace etchfdc
