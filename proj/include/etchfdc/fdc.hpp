#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/core.hpp"
#include "etchfdc/vsensor.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Tolerances and bounds
// ---------------------------------------------------------------------------

/// Per-target agreement tolerance = base x k. The bases are the worst
/// per-suite RMS model errors of the reference study; k widens them into
/// alarm thresholds.
struct ToleranceProfile {
  std::array<double, 7> base{2.0, 11.0, 2.0, 9.0, 7.0, 0.1, 14.0};
  double k = 3.0;

  double tolerance(RecipeTarget t) const { return base[std::size_t(int(t))] * k; }
};

inline void validate_tolerances(const ToleranceProfile& p) {
  for (RecipeTarget t : kRecipeTargets)
    if (!(p.tolerance(t) > 0.0))
      throw std::invalid_argument("tolerance for " + std::string(to_string(t)) +
                                  " must be > 0");
}

/// Acceptable wafer-state intervals, applied per die.
struct QualityBounds {
  double lwr_lo = 0.06, lwr_hi = 0.20;        // microns
  double oxide_lo = 20.0, oxide_hi = 60.0;    // angstroms

  std::pair<double, double> interval(StateParam p) const {
    return p == StateParam::Lwr ? std::pair{lwr_lo, lwr_hi}
                                : std::pair{oxide_lo, oxide_hi};
  }
};

inline void validate_bounds(const QualityBounds& b) {
  if (!(b.lwr_lo < b.lwr_hi))
    throw std::invalid_argument("quality bounds: lwr lower must be < upper");
  if (!(b.oxide_lo < b.oxide_hi))
    throw std::invalid_argument("quality bounds: oxide lower must be < upper");
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

struct AgreementSummary {
  double median = 0.0;        // of all estimates
  double max_pairwise = 0.0;
  std::vector<SensorSuite> outliers;
  bool has_consensus = true;  // false when every pairwise delta exceeds tolerance
};

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Leave-one-out consensus: a suite is an outlier when the remaining suites
/// agree among themselves (max pairwise delta <= tolerance) and this suite
/// sits more than the tolerance from their median. When every pairwise delta
/// exceeds the tolerance there is no consensus and every suite is flagged.
inline AgreementSummary agreement(const std::map<SensorSuite, double>& estimates,
                                  double tolerance) {
  if (estimates.size() < 2)
    throw data_error("agreement: need at least 2 suite estimates, got " +
                     std::to_string(estimates.size()));
  std::vector<SensorSuite> suites;
  std::vector<double> values;
  for (const auto& [s, v] : estimates) {
    suites.push_back(s);
    values.push_back(v);
  }

  AgreementSummary out;
  out.median = detail::median_of(values);
  double min_pairwise = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      const double d = std::abs(values[i] - values[j]);
      out.max_pairwise = std::max(out.max_pairwise, d);
      min_pairwise = std::min(min_pairwise, d);
    }

  if (min_pairwise > tolerance) {
    out.outliers = suites;
    out.has_consensus = false;
    return out;
  }

  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> others;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (j != i) others.push_back(values[j]);
    double others_spread = 0.0;
    for (std::size_t a = 0; a < others.size(); ++a)
      for (std::size_t b = a + 1; b < others.size(); ++b)
        others_spread = std::max(others_spread, std::abs(others[a] - others[b]));
    if (others_spread <= tolerance &&
        std::abs(values[i] - detail::median_of(others)) > tolerance)
      out.outliers.push_back(suites[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fault reports
// ---------------------------------------------------------------------------

enum class FaultClass {
  NoFault = 0, ProcessDeviation, SensorFault, WaferQualityFault, Indeterminate
};

inline const char* to_string(FaultClass c) {
  switch (c) {
    case FaultClass::NoFault: return "no_fault";
    case FaultClass::ProcessDeviation: return "process_deviation";
    case FaultClass::SensorFault: return "sensor_fault";
    case FaultClass::WaferQualityFault: return "wafer_quality_fault";
    case FaultClass::Indeterminate: return "indeterminate";
  }
  return "?";
}

/// Per-target outcome of the decision rules; kind is NoFault for rule (a).
struct TargetFinding {
  RecipeTarget target = RecipeTarget::Pressure;
  FaultClass kind = FaultClass::NoFault;
  std::optional<SensorSuite> suite;  // SensorFault attribution
};

struct EvidenceRow {
  RecipeTarget target = RecipeTarget::Pressure;
  SensorSuite suite = SensorSuite::Machine;
  double estimate = 0.0;
  double residual = 0.0;  // estimate minus nominal
};

struct PairwiseRow {
  RecipeTarget target = RecipeTarget::Pressure;
  SensorSuite a = SensorSuite::Machine, b = SensorSuite::Machine;
  double delta = 0.0;
};

struct QualityFinding {
  StateParam parameter = StateParam::Lwr;
  std::vector<int> dies;
};

struct FaultReport {
  std::string wafer_id;
  FaultClass classification = FaultClass::NoFault;
  std::vector<TargetFinding> findings;       // only targets with a finding
  std::vector<RecipeTarget> targets;         // union of finding targets
  std::optional<SensorSuite> suite;          // single-suite SensorFault attribution
  std::vector<QualityFinding> quality;
  std::vector<EvidenceRow> evidence;
  std::vector<PairwiseRow> pairwise;
  std::vector<std::string> notes;
};

/// Redundancy vote per target. Rules, in order: (a) every suite within
/// tolerance of nominal -> no finding; (b) suites mutually agree but their
/// median is off nominal -> ProcessDeviation; (c) exactly one outlier against
/// a consensus matching nominal -> SensorFault on that suite; (d) otherwise
/// Indeterminate. The report is NoFault iff no target has a finding.
/// Indeterminate findings defer to an otherwise-unanimous kind when rolling
/// up: deviation findings with no sensor findings -> ProcessDeviation, sensor
/// findings on a single suite with no deviation findings -> SensorFault.
/// Deviation and sensor findings together, sensor findings on several suites,
/// or indeterminate findings alone roll up as Indeterminate since three
/// suites cannot attribute them further.
inline FaultReport detect(const Recipe& nominal,
                          const std::map<SensorSuite, std::array<double, 7>>& estimates,
                          const ToleranceProfile& tolerances,
                          const std::string& wafer_id = {}) {
  validate_tolerances(tolerances);
  if (estimates.size() < 2)
    throw data_error("detect: need at least 2 suite estimates, got " +
                     std::to_string(estimates.size()));
  const std::array<double, 7> nom = derive_recipe_targets(nominal);

  FaultReport rep;
  rep.wafer_id = wafer_id;
  for (RecipeTarget t : kRecipeTargets) {
    const std::size_t ti = std::size_t(int(t));
    const double tol = tolerances.tolerance(t);
    std::map<SensorSuite, double> est;
    for (const auto& [suite, vec] : estimates) {
      est[suite] = vec[ti];
      rep.evidence.push_back({t, suite, vec[ti], vec[ti] - nom[ti]});
    }

    bool all_near_nominal = true;
    for (const auto& [suite, v] : est)
      if (std::abs(v - nom[ti]) > tol) all_near_nominal = false;

    const AgreementSummary ag = agreement(est, tol);
    {
      auto it_a = est.begin();
      for (; it_a != est.end(); ++it_a) {
        auto it_b = std::next(it_a);
        for (; it_b != est.end(); ++it_b)
          rep.pairwise.push_back(
              {t, it_a->first, it_b->first, std::abs(it_a->second - it_b->second)});
      }
    }

    if (all_near_nominal) continue;

    TargetFinding f;
    f.target = t;
    if (ag.max_pairwise <= tol && std::abs(ag.median - nom[ti]) > tol) {
      f.kind = FaultClass::ProcessDeviation;
    } else if (ag.has_consensus && ag.outliers.size() == 1) {
      std::vector<double> others;
      for (const auto& [suite, v] : est)
        if (suite != ag.outliers.front()) others.push_back(v);
      if (std::abs(detail::median_of(others) - nom[ti]) <= tol) {
        f.kind = FaultClass::SensorFault;
        f.suite = ag.outliers.front();
      } else {
        f.kind = FaultClass::Indeterminate;
      }
    } else {
      f.kind = FaultClass::Indeterminate;
    }
    rep.findings.push_back(f);
    rep.targets.push_back(t);
  }

  if (rep.findings.empty()) {
    rep.classification = FaultClass::NoFault;
    return rep;
  }
  bool any_process = false, any_sensor = false;
  std::optional<SensorSuite> sensor_suite;
  bool single_suite = true;
  for (const auto& f : rep.findings) {
    if (f.kind == FaultClass::ProcessDeviation) any_process = true;
    if (f.kind == FaultClass::SensorFault) {
      any_sensor = true;
      if (!sensor_suite) {
        sensor_suite = f.suite;
      } else if (sensor_suite != f.suite) {
        single_suite = false;
      }
    }
  }
  if (any_process && !any_sensor) {
    rep.classification = FaultClass::ProcessDeviation;
  } else if (any_sensor && !any_process && single_suite) {
    rep.classification = FaultClass::SensorFault;
    rep.suite = sensor_suite;
  } else {
    rep.classification = FaultClass::Indeterminate;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Quality classification
// ---------------------------------------------------------------------------

struct QualityResult {
  std::vector<QualityFinding> faults;
  std::vector<std::string> notes;  // suite-disagreement evidence
};

/// Median-across-suites per die against the bounds. Dies whose median falls
/// outside become findings; a suite deviating from the median by more than
/// consensus_frac of the bound width is noted as evidence only. Dies some
/// suites left absent use the median of the rest; fully absent dies are
/// skipped.
inline QualityResult classify_quality(
    const std::map<SensorSuite, WaferStateEstimate>& estimates,
    const QualityBounds& bounds, double consensus_frac = 0.25) {
  validate_bounds(bounds);
  if (estimates.empty())
    throw data_error("classify_quality: need at least one suite estimate");

  QualityResult out;
  for (StateParam p : {StateParam::Lwr, StateParam::OxideLoss}) {
    const auto [lo, hi] = bounds.interval(p);
    const double consensus_tol = consensus_frac * (hi - lo);
    QualityFinding finding;
    finding.parameter = p;
    for (int die = 1; die <= kDiesPerWafer; ++die) {
      std::vector<double> values;
      std::vector<SensorSuite> who;
      for (const auto& [suite, est] : estimates) {
        const auto& slot =
            (p == StateParam::Lwr ? est.lwr : est.oxide)[std::size_t(die - 1)];
        if (slot) {
          values.push_back(*slot);
          who.push_back(suite);
        }
      }
      if (values.empty()) continue;
      const double med = detail::median_of(values);
      if (med < lo || med > hi) finding.dies.push_back(die);
      for (std::size_t i = 0; i < values.size(); ++i)
        if (std::abs(values[i] - med) > consensus_tol)
          out.notes.push_back(std::string(to_string(who[i])) + " deviates on " +
                              to_string(p) + " die " + std::to_string(die) + " (" +
                              format_double(values[i]) + " vs median " +
                              format_double(med) + ")");
    }
    if (!finding.dies.empty()) out.faults.push_back(std::move(finding));
  }
  return out;
}

inline QualityResult classify_quality(
    const std::map<SensorSuite, WaferState>& estimates, const QualityBounds& bounds,
    double consensus_frac = 0.25) {
  std::map<SensorSuite, WaferStateEstimate> wrapped;
  for (const auto& [suite, ws] : estimates) {
    if (ws.lwr_per_die.size() != std::size_t(kDiesPerWafer) ||
        ws.oxide_loss_per_die.size() != std::size_t(kDiesPerWafer))
      throw data_error("classify_quality: wafer state for " +
                       std::string(to_string(suite)) + " is not 32 dies");
    WaferStateEstimate est;
    for (int i = 0; i < kDiesPerWafer; ++i) {
      est.lwr[std::size_t(i)] = ws.lwr_per_die[std::size_t(i)];
      est.oxide[std::size_t(i)] = ws.oxide_loss_per_die[std::size_t(i)];
    }
    wrapped.emplace(suite, std::move(est));
  }
  return classify_quality(wrapped, bounds, consensus_frac);
}

/// Folds quality findings into a setpoint report. Setpoint classifications
/// outrank quality-only findings.
inline FaultReport combine_reports(FaultReport setpoint, const QualityResult& quality) {
  setpoint.quality = quality.faults;
  for (const auto& n : quality.notes) setpoint.notes.push_back(n);
  if (setpoint.classification == FaultClass::NoFault && !quality.faults.empty())
    setpoint.classification = FaultClass::WaferQualityFault;
  return setpoint;
}

}  // namespace etchfdc
