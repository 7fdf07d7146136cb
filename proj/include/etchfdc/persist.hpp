#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/csv.hpp"
#include "etchfdc/doe.hpp"
#include "etchfdc/fdc.hpp"
#include "etchfdc/gasel.hpp"
#include "etchfdc/simulate.hpp"
#include "etchfdc/vsensor.hpp"

namespace etchfdc {

using ojson = nlohmann::ordered_json;

class unsupported_version_error : public data_error {
  using data_error::data_error;
};

class bundle_integrity_error : public data_error {
  using data_error::data_error;
};

// ---------------------------------------------------------------------------
// Run configuration: a flat key set in a single JSON object. Unknown keys are
// hard errors so typos cannot silently fall back to defaults.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string dataset_dir = "data";
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  DesignSpec doe;
  GroundTruthConfig truth;
  MetricSetConfig metrics = default_metric_config();

  Technique technique = Technique::LinearPls;
  int max_lv = 8;
  FitOptions fit;

  ToleranceProfile tolerances;
  QualityBounds bounds;

  GaConfig ga;
  VsTarget ga_target = vs_setpoint(RecipeTarget::Pressure);
  SensorSuite ga_suite = SensorSuite::Machine;

  FaultScenario fault;
};

namespace detail {

inline RecipeFactor parse_recipe_factor(std::string_view s) {
  for (RecipeFactor f : kRecipeFactors)
    if (s == to_string(f)) return f;
  throw config_error("unknown recipe factor: '" + std::string(s) + "'");
}

inline std::vector<double> parse_double_list(const std::string& s, const char* key) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string field =
        s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      out.push_back(parse_double(field));
    } catch (const std::exception&) {
      throw config_error(std::string("config key ") + key + ": bad number '" + field +
                         "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string join_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

inline std::set<MetricKind> parse_metric_list(const std::string& s, const char* key) {
  std::set<MetricKind> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string field =
        s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (field.empty())
      throw config_error(std::string("config key ") + key + ": empty metric name");
    out.insert(parse_metric(field));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double cfg_double(const ojson& v, const std::string& key) {
  if (!v.is_number()) throw config_error("config key " + key + " must be a number");
  return v.get<double>();
}

inline int cfg_int(const ojson& v, const std::string& key) {
  if (!v.is_number_integer())
    throw config_error("config key " + key + " must be an integer");
  return v.get<int>();
}

inline std::uint64_t cfg_uint(const ojson& v, const std::string& key) {
  if (!v.is_number_integer() || v.is_number_float() || v.get<std::int64_t>() < 0)
    throw config_error("config key " + key + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string cfg_string(const ojson& v, const std::string& key) {
  if (!v.is_string()) throw config_error("config key " + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline RunConfig parse_run_config(const ojson& j) {
  if (!j.is_object()) throw config_error("config root must be a JSON object");
  RunConfig c;
  std::vector<double> center{9.0, 350.0, 150.0, 40.0, 60.0};

  for (const auto& [key, value] : j.items()) {
    using namespace detail;
    if (key == "dataset_dir") c.dataset_dir = cfg_string(value, key);
    else if (key == "out_dir") c.out_dir = cfg_string(value, key);
    else if (key == "seed") c.seed = cfg_uint(value, key);
    else if (key == "doe_factors") c.doe.n_factors = cfg_int(value, key);
    else if (key == "doe_total_wafers") c.doe.total_wafers = cfg_int(value, key);
    else if (key == "doe_alpha") c.doe.axial_alpha = cfg_double(value, key);
    else if (key == "doe_center")
      center = parse_double_list(cfg_string(value, key), "doe_center");
    else if (key == "doe_steps")
      c.doe.step_sizes = parse_double_list(cfg_string(value, key), "doe_steps");
    else if (key == "truth_seed") c.truth.table_seed = cfg_uint(value, key);
    else if (key == "noise_scale") c.truth.noise_scale = cfg_double(value, key);
    else if (key == "drift_scale") c.truth.drift_scale = cfg_double(value, key);
    else if (key.rfind("metrics_", 0) == 0) {
      const std::string rest = key.substr(8);
      const std::size_t us = rest.find('_');
      if (us == std::string::npos)
        throw config_error("unknown config key '" + key + "'");
      c.metrics.set(parse_suite(rest.substr(0, us)), parse_region(rest.substr(us + 1)),
                    parse_metric_list(cfg_string(value, key), key.c_str()));
    } else if (key == "technique")
      c.technique = parse_technique(cfg_string(value, key));
    else if (key == "max_lv") c.max_lv = cfg_int(value, key);
    else if (key == "poly_degree") c.fit.poly_degree = cfg_int(value, key);
    else if (key == "nn_hidden") c.fit.nn_hidden = cfg_int(value, key);
    else if (key == "nn_epochs") c.fit.nn.epochs = cfg_int(value, key);
    else if (key == "nn_learning_rate") c.fit.nn.learning_rate = cfg_double(value, key);
    else if (key == "nn_patience") c.fit.nn.patience = cfg_int(value, key);
    else if (key == "nn_seed") c.fit.nn.seed = cfg_uint(value, key);
    else if (key == "tol_base") {
      const auto v = parse_double_list(cfg_string(value, key), "tol_base");
      if (v.size() != 7) throw config_error("tol_base needs 7 values");
      std::copy(v.begin(), v.end(), c.tolerances.base.begin());
    } else if (key == "tol_k")
      c.tolerances.k = cfg_double(value, key);
    else if (key == "lwr_lo") c.bounds.lwr_lo = cfg_double(value, key);
    else if (key == "lwr_hi") c.bounds.lwr_hi = cfg_double(value, key);
    else if (key == "oxide_lo") c.bounds.oxide_lo = cfg_double(value, key);
    else if (key == "oxide_hi") c.bounds.oxide_hi = cfg_double(value, key);
    else if (key == "ga_population") c.ga.population_size = cfg_int(value, key);
    else if (key == "ga_generations") c.ga.generations = cfg_int(value, key);
    else if (key == "ga_crossover") c.ga.crossover_rate = cfg_double(value, key);
    else if (key == "ga_mutation") c.ga.mutation_rate = cfg_double(value, key);
    else if (key == "ga_tournament") c.ga.tournament = cfg_int(value, key);
    else if (key == "ga_elitism") c.ga.elitism = cfg_int(value, key);
    else if (key == "ga_min_vars") c.ga.min_vars = cfg_int(value, key);
    else if (key == "ga_penalty") c.ga.penalty_weight = cfg_double(value, key);
    else if (key == "ga_seed") c.ga.seed = cfg_uint(value, key);
    else if (key == "ga_target") c.ga_target = parse_vs_target(cfg_string(value, key));
    else if (key == "ga_suite") c.ga_suite = parse_suite(cfg_string(value, key));
    else if (key == "fault_kind") c.fault.kind = parse_fault_kind(cfg_string(value, key));
    else if (key == "fault_factor")
      c.fault.factor = parse_recipe_factor(cfg_string(value, key));
    else if (key == "fault_delta") c.fault.delta = cfg_double(value, key);
    else if (key == "fault_suite") c.fault.suite = parse_suite(cfg_string(value, key));
    else if (key == "fault_channel") c.fault.channel = cfg_string(value, key);
    else if (key == "fault_gain") c.fault.gain = cfg_double(value, key);
    else if (key == "fault_slope") c.fault.slope = cfg_double(value, key);
    else if (key == "fault_value") c.fault.value = cfg_double(value, key);
    else if (key == "fault_onset") c.fault.onset_wafer = cfg_int(value, key);
    else
      throw config_error("unknown config key '" + key + "'");
  }

  if (center.size() != 5) throw config_error("doe_center needs 5 values");
  c.doe.center = make_recipe(center[0], center[1], center[2], center[3], center[4]);
  if (c.dataset_dir.empty()) throw config_error("dataset_dir must not be empty");
  if (c.out_dir.empty()) throw config_error("out_dir must not be empty");
  if (c.max_lv < 1) throw config_error("max_lv must be >= 1");
  if (c.fault.kind == FaultKind::SensorGain || c.fault.kind == FaultKind::SensorDrift ||
      c.fault.kind == FaultKind::StuckSensor) {
    if (c.fault.channel.empty())
      throw config_error("fault_channel required for sensor fault scenarios");
  }
  validate_tolerances(c.tolerances);
  validate_bounds(c.bounds);
  validate(c.ga);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw config_error("cannot open config " + file.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

/// Full round trip of every key, in a fixed order; also the canonical text
/// the config hash is computed over.
inline ojson run_config_to_json(const RunConfig& c) {
  ojson j;
  j["dataset_dir"] = c.dataset_dir;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["doe_factors"] = c.doe.n_factors;
  j["doe_total_wafers"] = c.doe.total_wafers;
  j["doe_alpha"] = c.doe.axial_alpha;
  j["doe_center"] = detail::join_double_list({c.doe.center.pressure, c.doe.center.top_power,
                                              c.doe.center.rf_bottom, c.doe.center.bcl3_flow,
                                              c.doe.center.cl2_flow});
  j["doe_steps"] = detail::join_double_list(c.doe.step_sizes);
  j["truth_seed"] = c.truth.table_seed;
  j["noise_scale"] = c.truth.noise_scale;
  j["drift_scale"] = c.truth.drift_scale;
  for (SensorSuite s : kSensorSuites)
    for (EtchRegion r : kEtchRegions) {
      std::string names;
      for (MetricKind m : c.metrics.ordered(s, r))
        names += (names.empty() ? "" : ",") + std::string(to_string(m));
      j[std::string("metrics_") + to_string(s) + "_" + to_string(r)] = names;
    }
  j["technique"] = to_string(c.technique);
  j["max_lv"] = c.max_lv;
  j["poly_degree"] = c.fit.poly_degree;
  j["nn_hidden"] = c.fit.nn_hidden;
  j["nn_epochs"] = c.fit.nn.epochs;
  j["nn_learning_rate"] = c.fit.nn.learning_rate;
  j["nn_patience"] = c.fit.nn.patience;
  j["nn_seed"] = c.fit.nn.seed;
  j["tol_base"] =
      detail::join_double_list({c.tolerances.base.begin(), c.tolerances.base.end()});
  j["tol_k"] = c.tolerances.k;
  j["lwr_lo"] = c.bounds.lwr_lo;
  j["lwr_hi"] = c.bounds.lwr_hi;
  j["oxide_lo"] = c.bounds.oxide_lo;
  j["oxide_hi"] = c.bounds.oxide_hi;
  j["ga_population"] = c.ga.population_size;
  j["ga_generations"] = c.ga.generations;
  j["ga_crossover"] = c.ga.crossover_rate;
  j["ga_mutation"] = c.ga.mutation_rate;
  j["ga_tournament"] = c.ga.tournament;
  j["ga_elitism"] = c.ga.elitism;
  j["ga_min_vars"] = c.ga.min_vars;
  j["ga_penalty"] = c.ga.penalty_weight;
  j["ga_seed"] = c.ga.seed;
  j["ga_target"] = to_string(c.ga_target);
  j["ga_suite"] = to_string(c.ga_suite);
  j["fault_kind"] = to_string(c.fault.kind);
  j["fault_factor"] = to_string(c.fault.factor);
  j["fault_delta"] = c.fault.delta;
  j["fault_suite"] = to_string(c.fault.suite);
  j["fault_channel"] = c.fault.channel;
  j["fault_gain"] = c.fault.gain;
  j["fault_slope"] = c.fault.slope;
  j["fault_value"] = c.fault.value;
  j["fault_onset"] = c.fault.onset_wafer;
  return j;
}

inline void save_run_config(const std::filesystem::path& file, const RunConfig& c) {
  detail::write_text(file, run_config_to_json(c).dump(2) + "\n");
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  const std::uint64_t h = detail::fnv1a64(run_config_to_json(c).dump());
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xF];
  buf[16] = '\0';
  return buf;
}

// ---------------------------------------------------------------------------
// Model bundles: one versioned JSON file holding both banks. Doubles are
// stored as shortest round-trip decimal strings so load(save(x)) reproduces
// every coefficient bit for bit.
// ---------------------------------------------------------------------------

inline constexpr int kBundleVersion = 1;
inline constexpr const char* kBundleFormat = "etchfdc-bundle";

namespace detail {

inline ojson vec_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(format_double(v(i)));
  return a;
}

inline Eigen::VectorXd json_vec(const ojson& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    v(Eigen::Index(i)) = parse_double(a.at(i).get<std::string>());
  return v;
}

inline ojson mat_json(const Eigen::MatrixXd& m) {
  ojson a;
  a["rows"] = m.rows();
  a["cols"] = m.cols();
  ojson data = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(format_double(m(r, c)));
  a["data"] = data;
  return a;
}

inline Eigen::MatrixXd json_mat(const ojson& a) {
  const auto rows = a.at("rows").get<Eigen::Index>();
  const auto cols = a.at("cols").get<Eigen::Index>();
  const auto& data = a.at("data");
  if (Eigen::Index(data.size()) != rows * cols)
    throw bundle_integrity_error("matrix data length does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = parse_double(data.at(i++).get<std::string>());
  return m;
}

inline ojson scaling_json(const StandardizeParams& p) {
  ojson j;
  j["means"] = vec_json(p.means);
  j["scales"] = vec_json(p.scales);
  ojson zv = ojson::array();
  for (bool b : p.zero_variance) zv.push_back(b ? 1 : 0);
  j["zero_variance"] = zv;
  return j;
}

inline StandardizeParams json_scaling(const ojson& j) {
  StandardizeParams p;
  p.means = json_vec(j.at("means"));
  p.scales = json_vec(j.at("scales"));
  for (const auto& b : j.at("zero_variance")) p.zero_variance.push_back(b.get<int>() != 0);
  return p;
}

inline ojson model_json(const RegressionModel& m) {
  ojson j;
  j["technique"] = to_string(m.technique);
  j["n_components"] = m.n_components;
  j["x_scaling"] = scaling_json(m.x_scaling);
  j["y_scaling"] = scaling_json(m.y_scaling);
  j["x_weights"] = mat_json(m.x_weights);
  j["x_loadings"] = mat_json(m.x_loadings);
  j["y_loadings"] = vec_json(m.y_loadings);
  ojson inner = ojson::array();
  for (const auto& ic : m.inner) {
    ojson c;
    c["b"] = format_double(ic.b);
    c["poly"] = vec_json(ic.poly);
    if (ic.net) {
      ojson n;
      n["a"] = vec_json(ic.net->a);
      n["b"] = vec_json(ic.net->b);
      n["v"] = vec_json(ic.net->v);
      n["beta"] = format_double(ic.net->beta);
      n["c"] = format_double(ic.net->c);
      n["t_scale"] = format_double(ic.net->t_scale);
      c["net"] = n;
    } else {
      c["net"] = nullptr;
    }
    inner.push_back(c);
  }
  j["inner"] = inner;
  if (m.mlr_coefficients)
    j["mlr_coefficients"] = vec_json(*m.mlr_coefficients);
  else
    j["mlr_coefficients"] = nullptr;
  j["condition_estimate"] = format_double(m.condition_estimate);
  return j;
}

inline RegressionModel json_model(const ojson& j) {
  RegressionModel m;
  m.technique = parse_technique(j.at("technique").get<std::string>());
  m.n_components = j.at("n_components").get<int>();
  m.x_scaling = json_scaling(j.at("x_scaling"));
  m.y_scaling = json_scaling(j.at("y_scaling"));
  m.x_weights = json_mat(j.at("x_weights"));
  m.x_loadings = json_mat(j.at("x_loadings"));
  m.y_loadings = json_vec(j.at("y_loadings"));
  for (const auto& c : j.at("inner")) {
    InnerComponent ic;
    ic.b = parse_double(c.at("b").get<std::string>());
    ic.poly = json_vec(c.at("poly"));
    if (!c.at("net").is_null()) {
      const auto& n = c.at("net");
      NnInnerNet net;
      net.a = json_vec(n.at("a"));
      net.b = json_vec(n.at("b"));
      net.v = json_vec(n.at("v"));
      net.beta = parse_double(n.at("beta").get<std::string>());
      net.c = parse_double(n.at("c").get<std::string>());
      net.t_scale = parse_double(n.at("t_scale").get<std::string>());
      ic.net = std::move(net);
    }
    m.inner.push_back(std::move(ic));
  }
  if (!j.at("mlr_coefficients").is_null())
    m.mlr_coefficients = json_vec(j.at("mlr_coefficients"));
  m.condition_estimate = parse_double(j.at("condition_estimate").get<std::string>());
  return m;
}

inline ojson fit_report_json(const FitReport& r) {
  ojson j;
  j["technique"] = to_string(r.technique);
  j["n_components"] = r.n_components;
  j["train_rmse"] = format_double(r.train_rmse);
  if (r.validation_rmse)
    j["validation_rmse"] = format_double(*r.validation_rmse);
  else
    j["validation_rmse"] = nullptr;
  ojson xe = ojson::array(), ye = ojson::array();
  for (double v : r.x_explained) xe.push_back(format_double(v));
  for (double v : r.y_explained) ye.push_back(format_double(v));
  j["x_explained"] = xe;
  j["y_explained"] = ye;
  return j;
}

inline FitReport json_fit_report(const ojson& j) {
  FitReport r;
  r.technique = parse_technique(j.at("technique").get<std::string>());
  r.n_components = j.at("n_components").get<int>();
  r.train_rmse = parse_double(j.at("train_rmse").get<std::string>());
  if (!j.at("validation_rmse").is_null())
    r.validation_rmse = parse_double(j.at("validation_rmse").get<std::string>());
  for (const auto& v : j.at("x_explained"))
    r.x_explained.push_back(parse_double(v.get<std::string>()));
  for (const auto& v : j.at("y_explained"))
    r.y_explained.push_back(parse_double(v.get<std::string>()));
  return r;
}

inline ojson model_key_json(const ModelKey& k) {
  ojson j;
  j["target"] = to_string(k.target);
  j["suite"] = to_string(k.suite);
  j["region"] = to_string(k.region);
  j["technique"] = to_string(k.technique);
  return j;
}

inline ModelKey json_model_key(const ojson& j) {
  ModelKey k;
  k.target = parse_vs_target(j.at("target").get<std::string>());
  k.suite = parse_suite(j.at("suite").get<std::string>());
  k.region = parse_region(j.at("region").get<std::string>());
  k.technique = parse_technique(j.at("technique").get<std::string>());
  return k;
}

inline ojson bank_json(const VirtualSensorBank& bank) {
  ojson j;
  ojson manifest;
  manifest["dataset_id"] = bank.manifest.dataset_id;
  manifest["split_seed"] = bank.manifest.split_seed;
  manifest["config_hash"] = bank.manifest.config_hash;
  j["manifest"] = manifest;
  ojson entries = ojson::array();
  for (const auto& [key, entry] : bank.models) {
    ojson e;
    e["key"] = model_key_json(key);
    e["model"] = model_json(entry.model);
    e["report"] = fit_report_json(entry.report);
    entries.push_back(std::move(e));
  }
  j["entries"] = entries;
  ojson errors = ojson::array();
  for (const auto& [key, message] : bank.errors) {
    ojson e;
    e["key"] = model_key_json(key);
    e["message"] = message;
    errors.push_back(std::move(e));
  }
  j["errors"] = errors;
  return j;
}

inline VirtualSensorBank json_bank(const ojson& j) {
  VirtualSensorBank bank;
  const auto& manifest = j.at("manifest");
  bank.manifest.dataset_id = manifest.at("dataset_id").get<std::string>();
  bank.manifest.split_seed = manifest.at("split_seed").get<std::uint64_t>();
  bank.manifest.config_hash = manifest.at("config_hash").get<std::string>();
  for (const auto& e : j.at("entries")) {
    BankEntry entry;
    entry.model = json_model(e.at("model"));
    entry.report = json_fit_report(e.at("report"));
    bank.models.emplace(json_model_key(e.at("key")), std::move(entry));
  }
  for (const auto& e : j.at("errors"))
    bank.errors.emplace(json_model_key(e.at("key")), e.at("message").get<std::string>());
  return bank;
}

}  // namespace detail

inline void save_model_bundle(const VirtualSensorBank& finv, const VirtualSensorBank& g,
                              const std::filesystem::path& file) {
  ojson j;
  j["format"] = kBundleFormat;
  j["version"] = kBundleVersion;
  j["finv"] = detail::bank_json(finv);
  j["g"] = detail::bank_json(g);
  const auto tmp = file.string() + ".tmp";
  detail::write_text(tmp, j.dump() + "\n");
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw data_error("cannot move bundle into place at " + file.string());
}

inline std::pair<VirtualSensorBank, VirtualSensorBank> load_model_bundle(
    const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw data_error("cannot open bundle " + file.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw bundle_integrity_error("bundle " + file.string() +
                                 " is truncated or corrupt: " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || !j.at("format").is_string() ||
      j.at("format").get<std::string>() != kBundleFormat)
    throw bundle_integrity_error("bundle " + file.string() +
                                 " lacks the expected format marker");
  if (!j.contains("version") || !j.at("version").is_number_integer())
    throw bundle_integrity_error("bundle " + file.string() + " lacks a version tag");
  const int version = j.at("version").get<int>();
  if (version != kBundleVersion)
    throw unsupported_version_error("bundle " + file.string() + " has version " +
                                    std::to_string(version) + ", supported version is " +
                                    std::to_string(kBundleVersion));
  try {
    return {detail::json_bank(j.at("finv")), detail::json_bank(j.at("g"))};
  } catch (const nlohmann::json::exception& e) {
    throw bundle_integrity_error("bundle " + file.string() +
                                 " is structurally incomplete: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar: what the simulator actually held per wafer, for
// test oracles. Not consumed by the pipeline itself.
// ---------------------------------------------------------------------------

struct TruthSidecar {
  std::uint64_t table_seed = 0;
  double noise_scale = 1.0;
  double drift_scale = 0.0;
  std::uint64_t base_seed = 0;
  FaultScenario fault;
  std::vector<std::string> wafer_ids;
  std::vector<std::array<double, 7>> achieved;  // derived targets per wafer
};

namespace detail {

inline ojson fault_json(const FaultScenario& f) {
  ojson j;
  j["kind"] = to_string(f.kind);
  j["factor"] = to_string(f.factor);
  j["delta"] = format_double(f.delta);
  j["suite"] = to_string(f.suite);
  j["channel"] = f.channel;
  j["gain"] = format_double(f.gain);
  j["slope"] = format_double(f.slope);
  j["value"] = format_double(f.value);
  j["onset_wafer"] = f.onset_wafer;
  return j;
}

inline FaultScenario json_fault(const ojson& j) {
  FaultScenario f;
  f.kind = parse_fault_kind(j.at("kind").get<std::string>());
  f.factor = parse_recipe_factor(j.at("factor").get<std::string>());
  f.delta = parse_double(j.at("delta").get<std::string>());
  f.suite = parse_suite(j.at("suite").get<std::string>());
  f.channel = j.at("channel").get<std::string>();
  f.gain = parse_double(j.at("gain").get<std::string>());
  f.slope = parse_double(j.at("slope").get<std::string>());
  f.value = parse_double(j.at("value").get<std::string>());
  f.onset_wafer = j.at("onset_wafer").get<int>();
  return f;
}

}  // namespace detail

inline void write_truth_sidecar(const std::filesystem::path& file,
                                const GroundTruth& truth,
                                const std::vector<WaferRecord>& wafers,
                                std::uint64_t base_seed, const FaultScenario& fault) {
  ojson j;
  j["format"] = "etchfdc-truth";
  j["version"] = 1;
  j["table_seed"] = truth.config.table_seed;
  j["noise_scale"] = format_double(truth.config.noise_scale);
  j["drift_scale"] = format_double(truth.config.drift_scale);
  j["base_seed"] = base_seed;
  j["fault"] = detail::fault_json(fault);
  ojson rows = ojson::array();
  for (std::size_t i = 0; i < wafers.size(); ++i) {
    ojson w;
    w["id"] = wafers[i].wafer_id;
    w["seed"] = base_seed + i;
    const Recipe ach =
        achieved_recipe(wafers[i].actual_recipe, truth, base_seed + std::uint64_t(i));
    ojson targets = ojson::array();
    for (double v : derive_recipe_targets(ach)) targets.push_back(format_double(v));
    w["achieved"] = targets;
    rows.push_back(std::move(w));
  }
  j["wafers"] = rows;
  detail::write_text(file, j.dump(1) + "\n");
}

inline TruthSidecar read_truth_sidecar(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw data_error("cannot open sidecar " + file.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("sidecar " + file.string() + " is not valid JSON: " + e.what());
  }
  TruthSidecar s;
  try {
    s.table_seed = j.at("table_seed").get<std::uint64_t>();
    s.noise_scale = parse_double(j.at("noise_scale").get<std::string>());
    s.drift_scale = parse_double(j.at("drift_scale").get<std::string>());
    s.base_seed = j.at("base_seed").get<std::uint64_t>();
    s.fault = detail::json_fault(j.at("fault"));
    for (const auto& w : j.at("wafers")) {
      s.wafer_ids.push_back(w.at("id").get<std::string>());
      std::array<double, 7> t{};
      const auto& a = w.at("achieved");
      if (a.size() != 7) throw data_error("sidecar wafer row needs 7 achieved values");
      for (std::size_t i = 0; i < 7; ++i)
        t[i] = parse_double(a.at(i).get<std::string>());
      s.achieved.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error("sidecar " + file.string() + " is incomplete: " + e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Fault reports
// ---------------------------------------------------------------------------

inline ojson fault_report_to_json(const FaultReport& r) {
  ojson j;
  j["wafer_id"] = r.wafer_id;
  j["classification"] = to_string(r.classification);
  if (r.suite)
    j["suite"] = to_string(*r.suite);
  else
    j["suite"] = nullptr;
  ojson targets = ojson::array();
  for (RecipeTarget t : r.targets) targets.push_back(to_string(t));
  j["targets"] = targets;
  ojson findings = ojson::array();
  for (const auto& f : r.findings) {
    ojson e;
    e["target"] = to_string(f.target);
    e["kind"] = to_string(f.kind);
    if (f.suite)
      e["suite"] = to_string(*f.suite);
    else
      e["suite"] = nullptr;
    findings.push_back(std::move(e));
  }
  j["findings"] = findings;
  ojson evidence = ojson::array();
  for (const auto& row : r.evidence) {
    ojson e;
    e["target"] = to_string(row.target);
    e["suite"] = to_string(row.suite);
    e["estimate"] = row.estimate;
    e["residual"] = row.residual;
    evidence.push_back(std::move(e));
  }
  j["evidence"] = evidence;
  ojson pairwise = ojson::array();
  for (const auto& row : r.pairwise) {
    ojson e;
    e["target"] = to_string(row.target);
    e["a"] = to_string(row.a);
    e["b"] = to_string(row.b);
    e["delta"] = row.delta;
    pairwise.push_back(std::move(e));
  }
  j["pairwise"] = pairwise;
  ojson quality = ojson::array();
  for (const auto& q : r.quality) {
    ojson e;
    e["parameter"] = to_string(q.parameter);
    e["dies"] = q.dies;
    quality.push_back(std::move(e));
  }
  j["quality"] = quality;
  j["notes"] = r.notes;
  return j;
}

inline std::string render_fault_report(const FaultReport& r) {
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  std::string out = "wafer " + r.wafer_id + ": " + to_string(r.classification);
  if (r.suite) out += " (suite " + std::string(to_string(*r.suite)) + ")";
  out += '\n';
  for (const auto& f : r.findings) {
    out += "  " + std::string(to_string(f.target)) + ": " + to_string(f.kind);
    if (f.suite) out += " (" + std::string(to_string(*f.suite)) + ")";
    out += '\n';
  }
  for (const auto& q : r.quality) {
    out += "  " + std::string(to_string(q.parameter)) + " out of bounds on dies";
    for (std::size_t i = 0; i < q.dies.size(); ++i)
      out += (i ? "," : " ") + std::to_string(q.dies[i]);
    out += '\n';
  }
  if (!r.evidence.empty()) {
    out += "  estimates (residual vs nominal):\n";
    RecipeTarget last = r.evidence.front().target;
    std::string line;
    for (const auto& row : r.evidence) {
      if (line.empty() || row.target != last) {
        if (!line.empty()) out += line + '\n';
        last = row.target;
        line = "    " + std::string(to_string(row.target)) + ":";
      }
      line += " " + std::string(to_string(row.suite)) + "=" + num(row.estimate) + " (" +
              num(row.residual) + ")";
    }
    if (!line.empty()) out += line + '\n';
  }
  for (const auto& n : r.notes) out += "  note: " + n + '\n';
  return out;
}

}  // namespace etchfdc
