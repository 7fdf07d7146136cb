#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "etchfdc/core.hpp"
#include "etchfdc/pretreat.hpp"
#include "etchfdc/regress.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Model keys
// ---------------------------------------------------------------------------

/// The two per-die wafer-state quantities.
enum class StateParam { Lwr = 0, OxideLoss };

inline const char* to_string(StateParam p) {
  return p == StateParam::Lwr ? "lwr" : "oxide_loss";
}

/// What one virtual sensor predicts: a recipe setpoint target, or one
/// wafer-state parameter at one die.
struct VsTarget {
  enum class Kind { Setpoint = 0, Lwr, OxideLoss };
  Kind kind = Kind::Setpoint;
  RecipeTarget setpoint = RecipeTarget::Pressure;
  int die = 0;  // 1..32 for the wafer-state kinds

  auto operator<=>(const VsTarget&) const = default;
};

inline VsTarget vs_setpoint(RecipeTarget t) {
  VsTarget v;
  v.kind = VsTarget::Kind::Setpoint;
  v.setpoint = t;
  return v;
}

namespace detail {
inline int checked_die(int die) {
  if (die < 1 || die > kDiesPerWafer)
    throw std::invalid_argument("die index " + std::to_string(die) + " outside 1..32");
  return die;
}
}  // namespace detail

inline VsTarget vs_lwr(int die) {
  VsTarget v;
  v.kind = VsTarget::Kind::Lwr;
  v.die = detail::checked_die(die);
  return v;
}

inline VsTarget vs_oxide_loss(int die) {
  VsTarget v;
  v.kind = VsTarget::Kind::OxideLoss;
  v.die = detail::checked_die(die);
  return v;
}

inline std::string to_string(const VsTarget& t) {
  switch (t.kind) {
    case VsTarget::Kind::Setpoint: return to_string(t.setpoint);
    case VsTarget::Kind::Lwr:
      return "lwr_die" + std::string(t.die < 10 ? "0" : "") + std::to_string(t.die);
    case VsTarget::Kind::OxideLoss:
      return "oxide_die" + std::string(t.die < 10 ? "0" : "") + std::to_string(t.die);
  }
  return "?";
}

inline VsTarget parse_vs_target(std::string_view s) {
  for (RecipeTarget t : kRecipeTargets)
    if (s == to_string(t)) return vs_setpoint(t);
  auto die_of = [](std::string_view d) {
    int v = 0;
    for (char c : d) {
      if (c < '0' || c > '9') return -1;
      v = v * 10 + (c - '0');
    }
    return d.empty() ? -1 : v;
  };
  if (s.substr(0, 7) == "lwr_die") {
    const int d = die_of(s.substr(7));
    if (d >= 1 && d <= kDiesPerWafer) return vs_lwr(d);
  }
  if (s.substr(0, 9) == "oxide_die") {
    const int d = die_of(s.substr(9));
    if (d >= 1 && d <= kDiesPerWafer) return vs_oxide_loss(d);
  }
  std::string valid = "pressure, top_power, rf_bottom, bcl3, cl2, cl2_bcl3_ratio, "
                      "total_flow, lwr_dieNN, oxide_dieNN";
  throw config_error("unknown target '" + std::string(s) + "' (valid: " + valid + ")");
}

struct ModelKey {
  VsTarget target;
  SensorSuite suite = SensorSuite::Machine;
  EtchRegion region = EtchRegion::Al;
  Technique technique = Technique::LinearPls;

  auto operator<=>(const ModelKey&) const = default;
};

inline std::string to_string(const ModelKey& k) {
  return to_string(k.target) + "/" + to_string(k.suite) + "/" + to_string(k.region) +
         "/" + to_string(k.technique);
}

// ---------------------------------------------------------------------------
// Banks
// ---------------------------------------------------------------------------

struct BankEntry {
  RegressionModel model;
  FitReport report;  // validation RMSE always present and finite
};

struct TrainingManifest {
  std::string dataset_id;
  std::uint64_t split_seed = 0;
  std::string config_hash;
};

/// A trained grid of single-target models. Keys that failed to fit are kept
/// in `errors` with the reason, so the grid accounting always closes.
struct VirtualSensorBank {
  std::map<ModelKey, BankEntry> models;
  std::map<ModelKey, std::string> errors;
  TrainingManifest manifest;
};

inline std::vector<VsTarget> setpoint_targets() {
  std::vector<VsTarget> targets;
  for (RecipeTarget t : kRecipeTargets) targets.push_back(vs_setpoint(t));
  return targets;
}

inline std::vector<VsTarget> wafer_state_targets() {
  std::vector<VsTarget> targets;
  for (int die = 1; die <= kDiesPerWafer; ++die) targets.push_back(vs_lwr(die));
  for (int die = 1; die <= kDiesPerWafer; ++die) targets.push_back(vs_oxide_loss(die));
  return targets;
}

namespace detail {

inline std::pair<std::vector<const WaferRecord*>, std::vector<const WaferRecord*>>
split_pointers(const std::vector<WaferRecord>& records) {
  std::vector<const WaferRecord*> tr, va;
  for (const auto& r : records) {
    if (r.split == Split::Train) tr.push_back(&r);
    if (r.split == Split::Validation) va.push_back(&r);
  }
  if (tr.empty()) throw data_error("bank training: empty train split");
  if (va.empty()) throw data_error("bank training: empty validation split");
  return {std::move(tr), std::move(va)};
}

inline double setpoint_y(const WaferRecord& r, const VsTarget& t) {
  return derive_recipe_targets(r.nominal_recipe)[std::size_t(int(t.setpoint))];
}

inline double wafer_state_y(const WaferRecord& r, const VsTarget& t) {
  if (!r.wafer_state)
    throw data_error("wafer " + r.wafer_id + " has no wafer state");
  const auto& per_die = t.kind == VsTarget::Kind::Lwr
                            ? r.wafer_state->lwr_per_die
                            : r.wafer_state->oxide_loss_per_die;
  return per_die.at(std::size_t(t.die - 1));
}

/// matrices_for(suite, region) supplies the (train, validation) design
/// matrices with rows in tr/va order; y comes from the records per target.
template <typename MatrixFn, typename TargetFn>
inline void train_bank_grid(VirtualSensorBank& bank,
                            const std::vector<const WaferRecord*>& tr,
                            const std::vector<const WaferRecord*>& va,
                            const std::vector<SensorSuite>& suites,
                            const std::vector<EtchRegion>& regions,
                            Technique technique, int max_lv, const FitOptions& opt,
                            const std::vector<VsTarget>& targets,
                            MatrixFn&& matrices_for, TargetFn&& target_y) {
  for (SensorSuite suite : suites) {
    for (EtchRegion region : regions) {
      const std::pair<Eigen::MatrixXd, Eigen::MatrixXd> X = matrices_for(suite, region);
      if (X.first.rows() != Eigen::Index(tr.size()) ||
          X.second.rows() != Eigen::Index(va.size()))
        throw data_error("bank training: feature rows do not match the splits for " +
                         std::string(to_string(suite)) + "/" + to_string(region));
      const int bound = int(std::min<Eigen::Index>(X.first.rows() - 1, X.first.cols()));
      const int lv = std::clamp(max_lv, 1, bound);
      for (const VsTarget& target : targets) {
        ModelKey key{target, suite, region, technique};
        try {
          Eigen::VectorXd y_tr(Eigen::Index(tr.size())), y_val(Eigen::Index(va.size()));
          for (std::size_t i = 0; i < tr.size(); ++i)
            y_tr(Eigen::Index(i)) = target_y(*tr[i], target);
          for (std::size_t i = 0; i < va.size(); ++i)
            y_val(Eigen::Index(i)) = target_y(*va[i], target);
          SelectionResult sel =
              select_latent_dim(X.first, y_tr, X.second, y_val, technique, lv, opt);
          FitReport report = sel.reports[std::size_t(sel.best_n_lv - 1)];
          if (!report.validation_rmse || !std::isfinite(*report.validation_rmse))
            throw data_error("non-finite validation RMSE");
          bank.models.emplace(key, BankEntry{std::move(sel.model), std::move(report)});
        } catch (const std::exception& e) {
          bank.errors.emplace(key, e.what());
        }
      }
    }
  }
}

template <typename TargetFn>
inline VirtualSensorBank train_bank_from_traces(
    const std::vector<WaferRecord>& records, const std::vector<SensorSuite>& suites,
    const std::vector<EtchRegion>& regions, Technique technique, int max_lv,
    const MetricSetConfig& metrics, const FitOptions& opt,
    const std::vector<VsTarget>& targets, TargetFn&& target_y) {
  VirtualSensorBank bank;
  const auto split = split_pointers(records);
  const auto& tr = split.first;
  const auto& va = split.second;
  train_bank_grid(
      bank, tr, va, suites, regions, technique, max_lv, opt, targets,
      [&](SensorSuite s, EtchRegion r) {
        return std::pair{build_feature_matrix(tr, s, r, metrics).values,
                         build_feature_matrix(va, s, r, metrics).values};
      },
      target_y);
  return bank;
}

}  // namespace detail

/// Setpoint bank: one model per (7 targets x suites x regions), selected on
/// the validation split; test rows are never read. max_lv is clamped to each
/// feature matrix's rank bound.
inline VirtualSensorBank train_finv_bank(const std::vector<WaferRecord>& records,
                                         const std::vector<SensorSuite>& suites,
                                         const std::vector<EtchRegion>& regions,
                                         Technique technique, int max_lv,
                                         const MetricSetConfig& metrics =
                                             default_metric_config(),
                                         const FitOptions& opt = {}) {
  return detail::train_bank_from_traces(records, suites, regions, technique, max_lv,
                                        metrics, opt, setpoint_targets(),
                                        detail::setpoint_y);
}

/// Wafer-state bank: one model per (2 parameters x 32 dies x suites x
/// regions). Dies whose target degenerates are recorded per key, not fatal.
inline VirtualSensorBank train_g_bank(const std::vector<WaferRecord>& records,
                                      const std::vector<SensorSuite>& suites,
                                      const std::vector<EtchRegion>& regions,
                                      Technique technique, int max_lv,
                                      const MetricSetConfig& metrics =
                                          default_metric_config(),
                                      const FitOptions& opt = {}) {
  return detail::train_bank_from_traces(records, suites, regions, technique, max_lv,
                                        metrics, opt, wafer_state_targets(),
                                        detail::wafer_state_y);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

using SuiteRegionFeatures =
    std::map<std::pair<SensorSuite, EtchRegion>, Eigen::VectorXd>;

/// Pretreats one wafer into per-(suite, region) feature rows, entry order
/// identical to build_feature_matrix columns.
inline SuiteRegionFeatures features_for_wafer(const WaferRecord& rec,
                                              const std::vector<SensorSuite>& suites,
                                              const std::vector<EtchRegion>& regions,
                                              const MetricSetConfig& metrics =
                                                  default_metric_config()) {
  SuiteRegionFeatures out;
  for (SensorSuite s : suites)
    for (EtchRegion r : regions) {
      const FeatureVector fv = extract_feature_vector(rec, s, r, metrics);
      Eigen::VectorXd row(Eigen::Index(fv.entries.size()));
      for (std::size_t i = 0; i < fv.entries.size(); ++i)
        row(Eigen::Index(i)) = fv.entries[i].second;
      out.emplace(std::make_pair(s, r), std::move(row));
    }
  return out;
}

namespace detail {

/// Model with the lowest validation RMSE for (suite, target) across regions;
/// ties keep the earlier region in enumeration order.
inline const std::pair<const ModelKey, BankEntry>* best_region_entry(
    const VirtualSensorBank& bank, SensorSuite suite, const VsTarget& target) {
  const std::pair<const ModelKey, BankEntry>* best = nullptr;
  for (const auto& kv : bank.models) {
    if (kv.first.suite != suite || !(kv.first.target == target)) continue;
    if (!best || *kv.second.report.validation_rmse <
                     *best->second.report.validation_rmse)
      best = &kv;
  }
  return best;
}

inline double predict_one(const BankEntry& entry, const SuiteRegionFeatures& features,
                          const ModelKey& key) {
  const auto it = features.find({key.suite, key.region});
  if (it == features.end())
    throw data_error("predict: missing features for " +
                     std::string(to_string(key.suite)) + "/" + to_string(key.region));
  Eigen::MatrixXd X(1, it->second.size());
  X.row(0) = it->second;
  return predict(entry.model, X)(0);
}

}  // namespace detail

struct SetpointPrediction {
  std::array<double, 7> estimate{};
  std::array<ModelKey, 7> chosen{};
};

/// Per suite, each target comes from that suite's best-validation region.
inline std::map<SensorSuite, SetpointPrediction> predict_setpoints(
    const VirtualSensorBank& bank, const SuiteRegionFeatures& features) {
  std::vector<SensorSuite> suites;
  for (const auto& kv : features)
    if (suites.empty() || suites.back() != kv.first.first)
      suites.push_back(kv.first.first);

  std::map<SensorSuite, SetpointPrediction> out;
  for (SensorSuite suite : suites) {
    SetpointPrediction pred;
    for (RecipeTarget t : kRecipeTargets) {
      const auto* entry = detail::best_region_entry(bank, suite, vs_setpoint(t));
      if (!entry)
        throw data_error("predict_setpoints: no model for target " +
                         std::string(to_string(t)) + " in suite " + to_string(suite));
      pred.estimate[std::size_t(int(t))] =
          detail::predict_one(entry->second, features, entry->first);
      pred.chosen[std::size_t(int(t))] = entry->first;
    }
    out.emplace(suite, std::move(pred));
  }
  return out;
}

/// Per-die estimates; a die with no usable model in any region stays absent.
struct WaferStateEstimate {
  std::vector<std::optional<double>> lwr =
      std::vector<std::optional<double>>(std::size_t(kDiesPerWafer), std::nullopt);
  std::vector<std::optional<double>> oxide =
      std::vector<std::optional<double>>(std::size_t(kDiesPerWafer), std::nullopt);
};

inline std::map<SensorSuite, WaferStateEstimate> predict_wafer_state(
    const VirtualSensorBank& bank, const SuiteRegionFeatures& features) {
  std::vector<SensorSuite> suites;
  for (const auto& kv : features)
    if (suites.empty() || suites.back() != kv.first.first)
      suites.push_back(kv.first.first);

  std::map<SensorSuite, WaferStateEstimate> out;
  for (SensorSuite suite : suites) {
    WaferStateEstimate est;
    bool any = false;
    for (int die = 1; die <= kDiesPerWafer; ++die) {
      for (StateParam p : {StateParam::Lwr, StateParam::OxideLoss}) {
        const VsTarget target = p == StateParam::Lwr ? vs_lwr(die) : vs_oxide_loss(die);
        const auto* entry = detail::best_region_entry(bank, suite, target);
        if (!entry) continue;
        const double v = detail::predict_one(entry->second, features, entry->first);
        (p == StateParam::Lwr ? est.lwr : est.oxide)[std::size_t(die - 1)] = v;
        any = true;
      }
    }
    if (!any)
      throw data_error("predict_wafer_state: no wafer-state models for suite " +
                       std::string(to_string(suite)));
    out.emplace(suite, std::move(est));
  }
  return out;
}

/// All of a target's models ordered by validation RMSE (ascending); exact
/// ties keep (suite, region) enumeration order.
inline std::vector<std::pair<ModelKey, double>> rank_models(
    const VirtualSensorBank& bank, const VsTarget& target) {
  std::vector<std::pair<ModelKey, double>> out;
  for (const auto& kv : bank.models)
    if (kv.first.target == target)
      out.emplace_back(kv.first, *kv.second.report.validation_rmse);
  if (out.empty())
    throw std::out_of_range("rank_models: no models for target " + to_string(target));
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return out;
}

}  // namespace etchfdc
