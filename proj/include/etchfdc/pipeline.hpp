#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/persist.hpp"

namespace etchfdc {

inline constexpr int kExitOk = 0;      // success / all NoFault
inline constexpr int kExitFault = 1;   // detection ran and found a fault
inline constexpr int kExitConfig = 2;  // usage or configuration error
inline constexpr int kExitData = 3;    // missing, malformed, or degenerate data

template <typename Fn>
inline int exit_code_guard(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const config_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

// ---------------------------------------------------------------------------
// Split assignment: deterministic interleave hitting the 35/23/12 reference
// proportions exactly, spread evenly across the design order so every split
// samples factorial, axial, and center points.
// ---------------------------------------------------------------------------

inline std::vector<Split> assign_splits(std::size_t n) {
  constexpr double kWeights[3] = {35.0, 23.0, 12.0};
  std::array<std::size_t, 3> target{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int j = 0; j < 3; ++j) {
    const double share = double(n) * kWeights[j] / 70.0;
    target[std::size_t(j)] = std::size_t(share);
    frac[std::size_t(j)] = share - double(target[std::size_t(j)]);
    assigned += target[std::size_t(j)];
  }
  while (assigned < n) {
    int pick = 0;
    for (int j = 1; j < 3; ++j)
      if (frac[std::size_t(j)] > frac[std::size_t(pick)]) pick = j;
    ++target[std::size_t(pick)];
    frac[std::size_t(pick)] = -1.0;
    ++assigned;
  }

  std::vector<Split> out;
  out.reserve(n);
  std::array<std::size_t, 3> count{};
  for (std::size_t i = 1; i <= n; ++i) {
    int pick = -1;
    double best = -1e300;
    for (int j = 0; j < 3; ++j) {
      if (count[std::size_t(j)] >= target[std::size_t(j)]) continue;
      const double deficit =
          double(target[std::size_t(j)]) * double(i) / double(n) -
          double(count[std::size_t(j)]);
      if (deficit > best) {
        best = deficit;
        pick = j;
      }
    }
    ++count[std::size_t(pick)];
    out.push_back(Split(pick));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

using FeatureStore = std::map<std::pair<SensorSuite, EtchRegion>, FeatureMatrix>;

inline std::filesystem::path bundle_path(const RunConfig& c) {
  return std::filesystem::path(c.out_dir) / "bundle.json";
}

namespace detail {

inline void ensure_out_dir(const RunConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) throw data_error("cannot create output directory " + c.out_dir);
}

inline std::vector<WaferRecord> load_windowed_dataset(const RunConfig& c) {
  std::vector<WaferRecord> records = read_dataset(c.dataset_dir);
  const GroundTruth truth = make_ground_truth(c.truth);
  for (auto& r : records)
    r.traces = apply_region_windows(std::move(r.traces), truth.windows);
  return records;
}

inline FeatureStore load_feature_store(const RunConfig& c,
                                       const std::vector<SensorSuite>& suites,
                                       const std::vector<EtchRegion>& regions) {
  FeatureStore store;
  for (SensorSuite s : suites)
    for (EtchRegion r : regions) {
      const auto file = std::filesystem::path(c.out_dir) / feature_file_name(s, r);
      if (!std::filesystem::exists(file))
        throw data_error("missing feature matrix " + file.string() +
                         " (run pretreat first)");
      store.emplace(std::make_pair(s, r), read_feature_csv(file));
    }
  return store;
}

inline void check_store_alignment(const FeatureStore& store,
                                  const std::vector<WaferRecord>& records) {
  for (const auto& [key, m] : store) {
    if (m.wafer_ids.size() != records.size())
      throw data_error("feature matrix " +
                       feature_file_name(key.first, key.second) + " has " +
                       std::to_string(m.wafer_ids.size()) + " rows, manifest has " +
                       std::to_string(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i)
      if (m.wafer_ids[i] != records[i].wafer_id)
        throw data_error("feature matrix " +
                         feature_file_name(key.first, key.second) + " row " +
                         std::to_string(i + 1) + " is wafer " + m.wafer_ids[i] +
                         ", manifest says " + records[i].wafer_id);
  }
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                                 const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(Eigen::Index(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(Eigen::Index(i)) = X.row(Eigen::Index(rows[i]));
  return out;
}

template <typename TargetFn>
inline VirtualSensorBank train_bank_from_store(const std::vector<WaferRecord>& records,
                                               const FeatureStore& store,
                                               Technique technique, int max_lv,
                                               const FitOptions& opt,
                                               const std::vector<VsTarget>& targets,
                                               TargetFn&& target_y) {
  std::vector<const WaferRecord*> tr, va;
  std::vector<std::size_t> itr, iva;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::Train) {
      tr.push_back(&records[i]);
      itr.push_back(i);
    }
    if (records[i].split == Split::Validation) {
      va.push_back(&records[i]);
      iva.push_back(i);
    }
  }
  if (tr.empty()) throw data_error("bank training: empty train split");
  if (va.empty()) throw data_error("bank training: empty validation split");

  std::vector<SensorSuite> suites;
  std::vector<EtchRegion> regions;
  for (const auto& kv : store) {
    if (std::find(suites.begin(), suites.end(), kv.first.first) == suites.end())
      suites.push_back(kv.first.first);
    if (std::find(regions.begin(), regions.end(), kv.first.second) == regions.end())
      regions.push_back(kv.first.second);
  }

  VirtualSensorBank bank;
  train_bank_grid(
      bank, tr, va, suites, regions, technique, max_lv, opt, targets,
      [&](SensorSuite s, EtchRegion r) {
        const Eigen::MatrixXd& full = store.at({s, r}).values;
        return std::pair{take_rows(full, itr), take_rows(full, iva)};
      },
      target_y);
  return bank;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate: design the experiment, run the simulator, write the dataset
// ---------------------------------------------------------------------------

inline void cmd_simulate(const RunConfig& c, std::ostream& log) {
  const std::vector<DesignPoint> design = central_composite_design(c.doe);
  const std::vector<Recipe> recipes = scale_design_to_recipes(design, c.doe);
  const GroundTruth truth = make_ground_truth(c.truth);
  std::vector<WaferRecord> records = simulate_dataset(recipes, truth, c.fault, c.seed);

  const std::vector<Split> splits = assign_splits(records.size());
  std::array<int, 3> counts{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].split = splits[i];
    ++counts[std::size_t(int(splits[i]))];
  }

  write_dataset(c.dataset_dir, records);
  write_truth_sidecar(std::filesystem::path(c.dataset_dir) / "ground_truth.json", truth,
                      records, c.seed, c.fault);
  log << "simulated " << records.size() << " wafers (train/validation/test = "
      << counts[0] << "/" << counts[1] << "/" << counts[2] << ") into " << c.dataset_dir
      << '\n';
  if (c.fault.kind != FaultKind::None)
    log << "fault scenario: " << to_string(c.fault.kind) << " from wafer index "
        << c.fault.onset_wafer << '\n';
}

// ---------------------------------------------------------------------------
// pretreat: traces -> one feature matrix per (suite, region)
// ---------------------------------------------------------------------------

inline void cmd_pretreat(const RunConfig& c, std::ostream& log,
                         std::optional<SensorSuite> only_suite = std::nullopt,
                         std::optional<EtchRegion> only_region = std::nullopt) {
  const std::vector<WaferRecord> records = detail::load_windowed_dataset(c);
  detail::ensure_out_dir(c);
  std::vector<const WaferRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);

  for (SensorSuite s : kSensorSuites) {
    if (only_suite && s != *only_suite) continue;
    for (EtchRegion r : kEtchRegions) {
      if (only_region && r != *only_region) continue;
      const FeatureMatrix m = build_feature_matrix(ptrs, s, r, c.metrics);
      const auto file = std::filesystem::path(c.out_dir) / feature_file_name(s, r);
      write_feature_csv(file, m);
      log << file.filename().string() << ": " << m.values.rows() << " wafers x "
          << m.values.cols() << " features\n";
    }
  }
}

// ---------------------------------------------------------------------------
// train: feature matrices -> virtual-sensor banks -> bundle file
// ---------------------------------------------------------------------------

inline void cmd_train(const RunConfig& c, std::ostream& log) {
  const auto manifest_path = std::filesystem::path(c.dataset_dir) / "manifest.csv";
  if (!std::filesystem::exists(manifest_path))
    throw data_error("dataset missing: no manifest at " + manifest_path.string());
  const std::vector<WaferRecord> records = read_manifest_csv(manifest_path);
  const FeatureStore store =
      detail::load_feature_store(c, {kSensorSuites.begin(), kSensorSuites.end()},
                                 {kEtchRegions.begin(), kEtchRegions.end()});
  detail::check_store_alignment(store, records);

  VirtualSensorBank finv = detail::train_bank_from_store(
      records, store, c.technique, c.max_lv, c.fit, setpoint_targets(),
      detail::setpoint_y);
  VirtualSensorBank g = detail::train_bank_from_store(
      records, store, c.technique, c.max_lv, c.fit, wafer_state_targets(),
      detail::wafer_state_y);
  const TrainingManifest manifest{c.dataset_dir, c.seed, config_hash(c)};
  finv.manifest = manifest;
  g.manifest = manifest;

  if (finv.models.empty())
    throw data_error("setpoint bank is empty; first failure: " +
                     (finv.errors.empty() ? std::string("none recorded")
                                          : to_string(finv.errors.begin()->first) +
                                                ": " + finv.errors.begin()->second));
  if (g.models.empty())
    throw data_error("wafer-state bank is empty; first failure: " +
                     (g.errors.empty() ? std::string("none recorded")
                                       : to_string(g.errors.begin()->first) + ": " +
                                             g.errors.begin()->second));

  detail::ensure_out_dir(c);
  save_model_bundle(finv, g, bundle_path(c));

  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.5g", v);
    return std::string(buf);
  };
  for (RecipeTarget t : kRecipeTargets) {
    log << "target " << to_string(t) << " (validation RMSE ranking):\n";
    for (const auto& [key, vrmse] : rank_models(finv, vs_setpoint(t)))
      log << "  " << to_string(key.suite) << "/" << to_string(key.region) << " "
          << to_string(key.technique) << " lv=" << finv.models.at(key).model.n_components
          << " rmse=" << num(vrmse) << '\n';
  }
  for (StateParam p : {StateParam::Lwr, StateParam::OxideLoss}) {
    for (SensorSuite s : kSensorSuites) {
      std::vector<double> best;
      for (int die = 1; die <= kDiesPerWafer; ++die) {
        const VsTarget target = p == StateParam::Lwr ? vs_lwr(die) : vs_oxide_loss(die);
        if (const auto* e = detail::best_region_entry(g, s, target))
          best.push_back(*e->second.report.validation_rmse);
      }
      if (best.empty()) continue;
      std::sort(best.begin(), best.end());
      log << to_string(p) << " via " << to_string(s) << ": median best rmse "
          << num(best[best.size() / 2]) << " over " << best.size() << " dies\n";
    }
  }
  log << "bundle: " << finv.models.size() << " setpoint + " << g.models.size()
      << " wafer-state models (" << finv.errors.size() + g.errors.size()
      << " failures) -> " << bundle_path(c).string() << '\n';
  for (const auto& [key, msg] : finv.errors)
    log << "  failed " << to_string(key) << ": " << msg << '\n';
  for (const auto& [key, msg] : g.errors)
    log << "  failed " << to_string(key) << ": " << msg << '\n';
}

// ---------------------------------------------------------------------------
// detect: bundle + wafer traces -> fault reports
// ---------------------------------------------------------------------------

inline std::vector<FaultReport> cmd_detect(const RunConfig& c, std::ostream& log,
                                           const std::vector<std::string>& wafer_ids) {
  const auto [finv, g] = load_model_bundle(bundle_path(c));
  const std::vector<WaferRecord> records = detail::load_windowed_dataset(c);

  std::vector<const WaferRecord*> chosen;
  if (wafer_ids.empty()) {
    for (const auto& r : records)
      if (r.split == Split::Test) chosen.push_back(&r);
    if (chosen.empty()) throw data_error("no test-split wafers in the dataset");
  } else {
    for (const auto& id : wafer_ids) {
      const auto it =
          std::find_if(records.begin(), records.end(),
                       [&](const WaferRecord& r) { return r.wafer_id == id; });
      if (it == records.end()) throw data_error("unknown wafer id '" + id + "'");
      chosen.push_back(&*it);
    }
  }

  detail::ensure_out_dir(c);
  const std::vector<SensorSuite> suites{kSensorSuites.begin(), kSensorSuites.end()};
  const std::vector<EtchRegion> regions{kEtchRegions.begin(), kEtchRegions.end()};
  std::vector<FaultReport> reports;
  for (const WaferRecord* rec : chosen) {
    const SuiteRegionFeatures features =
        features_for_wafer(*rec, suites, regions, c.metrics);
    std::map<SensorSuite, std::array<double, 7>> estimates;
    for (const auto& [suite, pred] : predict_setpoints(finv, features))
      estimates.emplace(suite, pred.estimate);
    FaultReport report =
        detect(rec->nominal_recipe, estimates, c.tolerances, rec->wafer_id);
    const QualityResult quality =
        classify_quality(predict_wafer_state(g, features), c.bounds);
    report = combine_reports(std::move(report), quality);

    const auto base = std::filesystem::path(c.out_dir) / ("report_" + rec->wafer_id);
    detail::write_text(base.string() + ".json",
                       fault_report_to_json(report).dump(1) + "\n");
    const std::string text = render_fault_report(report);
    detail::write_text(base.string() + ".txt", text);
    log << text;
    reports.push_back(std::move(report));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// ga-select: evolve a column subset for one target on one suite
// ---------------------------------------------------------------------------

inline GaResult cmd_ga_select(const RunConfig& c, std::ostream& log) {
  if (c.technique == Technique::Mlr)
    throw config_error("ga-select needs a latent technique, not mlr");
  const auto manifest_path = std::filesystem::path(c.dataset_dir) / "manifest.csv";
  if (!std::filesystem::exists(manifest_path))
    throw data_error("dataset missing: no manifest at " + manifest_path.string());
  const std::vector<WaferRecord> records = read_manifest_csv(manifest_path);
  const FeatureStore store = detail::load_feature_store(
      c, {c.ga_suite}, {kEtchRegions.begin(), kEtchRegions.end()});
  detail::check_store_alignment(store, records);

  FeatureMatrix suite_matrix;
  for (EtchRegion r : kEtchRegions) {
    const FeatureMatrix& part = store.at({c.ga_suite, r});
    if (suite_matrix.column_names.empty()) {
      suite_matrix = part;
      continue;
    }
    suite_matrix.column_names.insert(suite_matrix.column_names.end(),
                                     part.column_names.begin(), part.column_names.end());
    Eigen::MatrixXd joined(suite_matrix.values.rows(),
                           suite_matrix.values.cols() + part.values.cols());
    joined << suite_matrix.values, part.values;
    suite_matrix.values = std::move(joined);
  }

  std::vector<std::size_t> itr, iva;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::Train) itr.push_back(i);
    if (records[i].split == Split::Validation) iva.push_back(i);
  }
  if (itr.empty() || iva.empty())
    throw data_error("ga-select: needs non-empty train and validation splits");
  const auto y_of = [&](const WaferRecord& r) {
    return c.ga_target.kind == VsTarget::Kind::Setpoint
               ? detail::setpoint_y(r, c.ga_target)
               : detail::wafer_state_y(r, c.ga_target);
  };
  Eigen::VectorXd y_tr(Eigen::Index(itr.size())), y_val(Eigen::Index(iva.size()));
  for (std::size_t i = 0; i < itr.size(); ++i)
    y_tr(Eigen::Index(i)) = y_of(records[itr[i]]);
  for (std::size_t i = 0; i < iva.size(); ++i)
    y_val(Eigen::Index(i)) = y_of(records[iva[i]]);

  const GaResult res =
      evolve(detail::take_rows(suite_matrix.values, itr), y_tr,
             detail::take_rows(suite_matrix.values, iva), y_val, c.technique, c.max_lv,
             c.ga, c.fit);

  detail::ensure_out_dir(c);
  const std::string stem =
      "ga_" + to_string(c.ga_target) + "_" + to_string(c.ga_suite);
  const auto cols_file = std::filesystem::path(c.out_dir) / (stem + "_columns.txt");
  const auto hist_file = std::filesystem::path(c.out_dir) / (stem + "_history.csv");
  write_column_list(cols_file, mask_to_columns(res.best.mask, suite_matrix.column_names));
  write_ga_history_csv(hist_file, res.history);

  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5g", res.best.fitness.value_or(0.0));
  log << "ga-select " << to_string(c.ga_target) << " on " << to_string(c.ga_suite)
      << ": best validation rmse " << buf << " with " << res.best.n_vars() << "/"
      << suite_matrix.column_names.size() << " columns after "
      << res.history.size() << " generations (" << res.evaluations
      << " evaluations)\n";
  log << "wrote " << cols_file.string() << " and " << hist_file.string() << '\n';
  return res;
}

}  // namespace etchfdc
