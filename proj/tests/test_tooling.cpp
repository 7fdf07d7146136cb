#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "etchfdc/csv.hpp"
#include "etchfdc/gasel.hpp"
#include "etchfdc/persist.hpp"
#include "etchfdc/pipeline.hpp"
#include "etchfdc/simulate.hpp"

using namespace etchfdc;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("etchfdc_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Eigen::MatrixXd random_matrix(detail::Rng& rng, int rows, int cols) {
  Eigen::MatrixXd X(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
  return X;
}

/// 12-wafer two-factor design, noiseless, splits assigned. The three fixed
/// factors make five of the setpoint targets degenerate on purpose.
const std::vector<WaferRecord>& twelve_wafers() {
  static const std::vector<WaferRecord> records = [] {
    GroundTruthConfig cfg;
    cfg.noise_scale = 0.0;
    const GroundTruth truth = make_ground_truth(cfg);
    DesignSpec spec;
    spec.n_factors = 2;
    spec.total_wafers = 12;
    std::vector<WaferRecord> recs = simulate_dataset(
        scale_design_to_recipes(central_composite_design(spec), spec), truth,
        fault_none(), 300);
    const std::vector<Split> splits = assign_splits(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].split = splits[i];
    return recs;
  }();
  return records;
}

}  // namespace

// ---------------------------------------------------------------------------
// Column masks
// ---------------------------------------------------------------------------

TEST_CASE("mask and column-name views convert both ways") {
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  const std::vector<bool> mask = {true, false, false, true};
  const std::vector<std::string> picked = mask_to_columns(mask, names);
  REQUIRE(picked == std::vector<std::string>{"a", "d"});
  REQUIRE(columns_to_mask(picked, names) == mask);
  REQUIRE_THROWS_WITH(columns_to_mask({"z"}, names),
                      ContainsSubstring("unknown column 'z'"));
  REQUIRE_THROWS_AS(mask_to_columns({true}, names), std::invalid_argument);

  FeatureMatrix m;
  m.wafer_ids = {"w000", "w001"};
  m.column_names = names;
  m.values.resize(2, 4);
  m.values << 1, 2, 3, 4, 5, 6, 7, 8;
  const FeatureMatrix cut = apply_column_mask(m, mask);
  REQUIRE(cut.column_names == picked);
  REQUIRE(cut.values.rows() == 2);
  REQUIRE(cut.values.cols() == 2);
  REQUIRE(cut.values(1, 0) == 5);
  REQUIRE(cut.values(1, 1) == 8);
}

// ---------------------------------------------------------------------------
// Fitness
// ---------------------------------------------------------------------------

TEST_CASE("fitness scores masked fits and routes failures to infinity") {
  detail::Rng rng(31);
  const Eigen::MatrixXd X_tr = random_matrix(rng, 16, 6);
  const Eigen::VectorXd y_tr = X_tr.col(0) + 0.5 * X_tr.col(1);
  const Eigen::MatrixXd X_val = random_matrix(rng, 8, 6);
  const Eigen::VectorXd y_val = X_val.col(0) + 0.5 * X_val.col(1);

  Chromosome good;
  good.mask = {true, true, false, false, false, false};
  const double f = fitness(good, X_tr, y_tr, X_val, y_val, Technique::LinearPls, 4);
  REQUIRE(std::isfinite(f));
  REQUIRE(f <= 1e-8);

  Chromosome thin;
  thin.mask = {true, false, false, false, false, false};
  REQUIRE_THROWS_AS(fitness(thin, X_tr, y_tr, X_val, y_val, Technique::LinearPls, 4),
                    std::invalid_argument);
  Chromosome wrong_len;
  wrong_len.mask = {true, true};
  REQUIRE_THROWS_AS(fitness(wrong_len, X_tr, y_tr, X_val, y_val, Technique::LinearPls, 4),
                    std::invalid_argument);

  const Eigen::VectorXd y_flat = Eigen::VectorXd::Constant(16, 4.0);
  REQUIRE(fitness(good, X_tr, y_flat, X_val, y_val, Technique::LinearPls, 4) ==
          std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Evolution
// ---------------------------------------------------------------------------

namespace {

struct SelectionProblem {
  Eigen::MatrixXd X_tr, X_val;
  Eigen::VectorXd y_tr, y_val;
};

/// Five informative columns among thirty; the target is their exact sum.
SelectionProblem informative_problem() {
  detail::Rng rng(77);
  SelectionProblem p;
  p.X_tr = random_matrix(rng, 40, 30);
  p.X_val = random_matrix(rng, 20, 30);
  p.y_tr = p.X_tr.leftCols(5).rowwise().sum();
  p.y_val = p.X_val.leftCols(5).rowwise().sum();
  return p;
}

GaConfig small_ga(std::uint64_t seed) {
  GaConfig c;
  c.population_size = 40;
  c.generations = 25;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("evolve finds the informative columns and never regresses") {
  const SelectionProblem p = informative_problem();
  Chromosome everything;
  everything.mask.assign(30, true);
  const double all_cols = fitness(everything, p.X_tr, p.y_tr, p.X_val, p.y_val,
                                  Technique::LinearPls, 5);

  int recalled = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GaResult res = evolve(p.X_tr, p.y_tr, p.X_val, p.y_val,
                                Technique::LinearPls, 5, small_ga(seed));
    REQUIRE(res.history.size() == 25);
    REQUIRE(res.best.fitness.has_value());
    REQUIRE(*res.best.fitness <= all_cols + 1e-12);
    REQUIRE(res.best.n_vars() >= 2);
    REQUIRE(res.evaluations > 0);
    for (std::size_t g = 0; g < res.history.size(); ++g) {
      REQUIRE(res.history[g].generation == int(g) + 1);
      REQUIRE(res.history[g].best_ever_fitness <= res.history[g].best_fitness + 1e-12);
      if (g > 0)
        REQUIRE(res.history[g].best_ever_fitness <=
                res.history[g - 1].best_ever_fitness + 1e-12);
    }
    for (int j = 0; j < 5; ++j)
      if (res.best.mask[std::size_t(j)]) ++recalled;
  }
  REQUIRE(recalled >= 12);  // mean recall of the 5 planted columns >= 0.8
}

TEST_CASE("evolve is deterministic per seed and honors degenerate limits") {
  const SelectionProblem p = informative_problem();
  const GaResult a = evolve(p.X_tr, p.y_tr, p.X_val, p.y_val, Technique::LinearPls, 5,
                            small_ga(9));
  const GaResult b = evolve(p.X_tr, p.y_tr, p.X_val, p.y_val, Technique::LinearPls, 5,
                            small_ga(9));
  REQUIRE(a.best.mask == b.best.mask);
  REQUIRE(a.evaluations == b.evaluations);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    REQUIRE(a.history[i].best_ever_fitness == b.history[i].best_ever_fitness);

  GaConfig frozen = small_ga(4);
  frozen.generations = 0;
  const GaResult init_only = evolve(p.X_tr, p.y_tr, p.X_val, p.y_val,
                                    Technique::LinearPls, 5, frozen);
  REQUIRE(init_only.history.empty());
  REQUIRE(init_only.best.fitness.has_value());

  GaConfig bad = small_ga(1);
  bad.population_size = 1;
  REQUIRE_THROWS_AS(evolve(p.X_tr, p.y_tr, p.X_val, p.y_val, Technique::LinearPls, 5, bad),
                    config_error);
  GaConfig hungry = small_ga(1);
  hungry.min_vars = 31;
  REQUIRE_THROWS_WITH(
      evolve(p.X_tr, p.y_tr, p.X_val, p.y_val, Technique::LinearPls, 5, hungry),
      ContainsSubstring("min_vars"));
  REQUIRE_THROWS_AS(evolve(p.X_tr, p.y_tr, p.X_val.leftCols(20), p.y_val,
                           Technique::LinearPls, 5, small_ga(1)),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

TEST_CASE("trace files round-trip every double bit for bit") {
  TempDir dir("traces");
  WaferRecord rec;
  rec.wafer_id = "w004";
  SensorTrace a;
  a.wafer_id = "w004";
  a.suite = SensorSuite::Machine;
  a.channel = "Pressure";
  a.samples = {{0.0, 2.378414230005442}, {1.0, 1.0 / 3.0}, {2.0, -1.25e-17}};
  SensorTrace b = a;
  b.channel = "BiasDc";
  b.samples = {{0.0, 210.0}, {1.0, 1e300}, {2.0, 0.1}};
  rec.traces = {a, b};

  write_trace_csv(dir.path, rec, SensorSuite::Machine);
  const auto back =
      read_trace_csv(dir.path / "w004_machine.csv", "w004", SensorSuite::Machine);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].channel == "Pressure");
  REQUIRE(back[1].channel == "BiasDc");
  REQUIRE(back[0].wafer_id == "w004");
  REQUIRE(back[0].suite == SensorSuite::Machine);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(back[t].samples[i].time == rec.traces[t].samples[i].time);
      REQUIRE(back[t].samples[i].value == rec.traces[t].samples[i].value);
    }

  REQUIRE_THROWS_WITH(write_trace_csv(dir.path, rec, SensorSuite::Oes),
                      ContainsSubstring("no oes traces"));
}

TEST_CASE("trace reader pins errors to file and line") {
  TempDir dir("trace_errors");
  const auto file = dir.path / "bad.csv";
  const auto expect_error = [&](const std::string& content, const std::string& needle) {
    detail::write_text(file, content);
    REQUIRE_THROWS_WITH(read_trace_csv(file, "w000", SensorSuite::Machine),
                        ContainsSubstring(needle));
  };
  expect_error("", "empty trace file");
  expect_error("t,s\n1,2\n", "expected header time_s");
  expect_error("time_s,ch\n1,2,3\n", "expected 2 fields, got 3");
  expect_error("time_s,ch\n1,abc\n", "bad number 'abc' in column ch");
  expect_error("time_s,ch\n1,abc\n", "bad.csv:2");
  expect_error("time_s,ch\n\"1\",2\n", "quoted fields are not supported");
  expect_error("time_s,ch\n", "no samples");
  REQUIRE_THROWS_WITH(read_trace_csv(dir.path / "absent.csv", "w000", SensorSuite::Machine),
                      ContainsSubstring("cannot open"));
}

// ---------------------------------------------------------------------------
// Manifest and dataset directory
// ---------------------------------------------------------------------------

TEST_CASE("manifest rows carry recipes, splits, and optional wafer state") {
  TempDir dir("manifest");
  const auto file = dir.path / "manifest.csv";

  WaferRecord with_state = twelve_wafers()[0];
  with_state.traces.clear();
  WaferRecord stateless = twelve_wafers()[1];
  stateless.traces.clear();
  stateless.wafer_state.reset();
  write_manifest_csv(file, {with_state, stateless});

  const auto back = read_manifest_csv(file);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].wafer_id == with_state.wafer_id);
  REQUIRE(back[0].split == with_state.split);
  REQUIRE(derive_recipe_targets(back[0].nominal_recipe) ==
          derive_recipe_targets(with_state.nominal_recipe));
  REQUIRE(derive_recipe_targets(back[1].actual_recipe) ==
          derive_recipe_targets(stateless.actual_recipe));
  REQUIRE(back[0].wafer_state.has_value());
  REQUIRE(back[0].wafer_state->lwr_per_die == with_state.wafer_state->lwr_per_die);
  REQUIRE(back[0].wafer_state->oxide_loss_per_die ==
          with_state.wafer_state->oxide_loss_per_die);
  REQUIRE_FALSE(back[1].wafer_state.has_value());

  // blanking one die of an otherwise-present state must be rejected
  std::string text = slurp(file);
  const std::string needle = "," + format_double(with_state.wafer_state->lwr_per_die[0]);
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  text.erase(pos + 1, needle.size() - 1);
  detail::write_text(file, text);
  REQUIRE_THROWS_WITH(read_manifest_csv(file), ContainsSubstring("partially filled"));

  detail::write_text(file, "nope\n1\n");
  REQUIRE_THROWS_WITH(read_manifest_csv(file), ContainsSubstring("unexpected manifest header"));
}

TEST_CASE("dataset directories round-trip and name their gaps") {
  TempDir dir("dataset");
  const auto data = dir.path / "data";
  std::vector<WaferRecord> two = {twelve_wafers()[0], twelve_wafers()[1]};
  two[1].wafer_state.reset();
  write_dataset(data, two);
  REQUIRE(fs::exists(data / "manifest.csv"));
  REQUIRE(fs::exists(data / "w000_machine.csv"));
  REQUIRE(fs::exists(data / "w001_rfm.csv"));

  const auto back = read_dataset(data);
  REQUIRE(back.size() == 2);
  for (std::size_t w = 0; w < 2; ++w) {
    REQUIRE(back[w].traces.size() == two[w].traces.size());
    for (std::size_t t = 0; t < back[w].traces.size(); ++t) {
      REQUIRE(back[w].traces[t].channel == two[w].traces[t].channel);
      REQUIRE(back[w].traces[t].suite == two[w].traces[t].suite);
      for (std::size_t i = 0; i < back[w].traces[t].samples.size(); ++i)
        REQUIRE(back[w].traces[t].samples[i].value ==
                two[w].traces[t].samples[i].value);
    }
  }

  fs::remove(data / "w001_oes.csv");
  REQUIRE_THROWS_WITH(read_dataset(data),
                      ContainsSubstring("w001 is missing its oes trace file"));
  REQUIRE_THROWS_WITH(read_dataset(dir.path / "nowhere"),
                      ContainsSubstring("no manifest"));
}

// ---------------------------------------------------------------------------
// Feature matrices, column lists, GA history
// ---------------------------------------------------------------------------

TEST_CASE("feature matrices round-trip exactly") {
  TempDir dir("features");
  const auto file = dir.path / "features_machine_al.csv";
  FeatureMatrix m;
  m.wafer_ids = {"w000", "w001"};
  m.column_names = {"Pressure|al|avg", "Pressure|al|sigma", "BiasDc|al|avg"};
  m.values.resize(2, 3);
  m.values << 9.125, 0.03125, 210.5, 1.0 / 7.0, 2.5e-13, -4.0;
  write_feature_csv(file, m);

  const FeatureMatrix back = read_feature_csv(file);
  REQUIRE(back.wafer_ids == m.wafer_ids);
  REQUIRE(back.column_names == m.column_names);
  REQUIRE((back.values.array() == m.values.array()).all());

  FeatureMatrix torn = m;
  torn.wafer_ids.pop_back();
  REQUIRE_THROWS_WITH(write_feature_csv(dir.path / "x.csv", torn),
                      ContainsSubstring("shape does not match"));

  detail::write_text(file, "id,a\nw000,1\n");
  REQUIRE_THROWS_WITH(read_feature_csv(file), ContainsSubstring("expected header wafer_id"));
  detail::write_text(file, "wafer_id,a\nw000,1,2\n");
  REQUIRE_THROWS_WITH(read_feature_csv(file), ContainsSubstring("expected 2 fields"));
}

TEST_CASE("column lists and GA history have plain text forms") {
  TempDir dir("lists");
  const auto cols = dir.path / "columns.txt";
  write_column_list(cols, {"Pressure|al|avg", "S1V1|ox|sigma"});
  REQUIRE(slurp(cols) == "Pressure|al|avg\nS1V1|ox|sigma\n");
  REQUIRE(read_column_list(cols) ==
          std::vector<std::string>{"Pressure|al|avg", "S1V1|ox|sigma"});

  const auto hist = dir.path / "history.csv";
  write_ga_history_csv(hist, {{1, 0.5, 0.75, 0.5, 3}, {2, 0.25, 0.5, 0.25, 2}});
  REQUIRE(slurp(hist) ==
          "generation,best,mean,best_ever,best_ever_n_vars\n"
          "1,0.5,0.75,0.5,3\n"
          "2,0.25,0.5,0.25,2\n");
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

namespace {

RunConfig exercised_config() {
  RunConfig c;
  c.dataset_dir = "dd";
  c.out_dir = "oo";
  c.seed = 7;
  c.doe.n_factors = 3;
  c.doe.total_wafers = 20;
  c.doe.axial_alpha = 1.5;
  c.doe.center = make_recipe(10.0, 300.0, 140.0, 30.0, 45.0);
  c.doe.step_sizes = {1.0, 25.0, 15.0, 6.0, 9.0};
  c.truth.table_seed = 99;
  c.truth.noise_scale = 0.5;
  c.truth.drift_scale = 0.25;
  c.metrics.set(SensorSuite::Machine, EtchRegion::Al, {MetricKind::Max, MetricKind::Avg});
  c.technique = Technique::PolyPls;
  c.max_lv = 5;
  c.fit.poly_degree = 3;
  c.fit.nn_hidden = 4;
  c.fit.nn.epochs = 77;
  c.fit.nn.learning_rate = 0.125;
  c.fit.nn.patience = 9;
  c.fit.nn.seed = 3;
  c.tolerances.base[0] = 5.0;
  c.tolerances.k = 2.5;
  c.bounds.lwr_hi = 0.25;
  c.ga.population_size = 10;
  c.ga.generations = 6;
  c.ga.crossover_rate = 0.75;
  c.ga.mutation_rate = 0.02;
  c.ga.tournament = 2;
  c.ga.elitism = 1;
  c.ga.min_vars = 3;
  c.ga.penalty_weight = 0.001;
  c.ga.seed = 12;
  c.ga_target = vs_oxide_loss(12);
  c.ga_suite = SensorSuite::Rfm;
  c.fault = fault_sensor_gain(SensorSuite::Oes, "OES1B00", 1.25, 4);
  return c;
}

}  // namespace

TEST_CASE("run configuration survives a full JSON round trip") {
  const RunConfig c = exercised_config();
  const ojson j1 = run_config_to_json(c);
  const RunConfig c2 = parse_run_config(j1);
  const ojson j2 = run_config_to_json(c2);
  REQUIRE(j1.dump() == j2.dump());
  REQUIRE(config_hash(c) == config_hash(c2));

  const std::string h = config_hash(c);
  REQUIRE(h.size() == 16);
  REQUIRE(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  RunConfig other = c;
  other.seed = 8;
  REQUIRE(config_hash(other) != h);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  auto throws_with = [](ojson j, const std::string& needle) {
    REQUIRE_THROWS_WITH(parse_run_config(j), ContainsSubstring(needle));
  };
  throws_with(ojson{{"frobs", 1}}, "unknown config key 'frobs'");
  throws_with(ojson{{"seed", "x"}}, "seed");
  throws_with(ojson{{"seed", -1}}, "non-negative");
  throws_with(ojson{{"max_lv", 1.5}}, "must be an integer");
  throws_with(ojson{{"max_lv", 0}}, "max_lv must be >= 1");
  throws_with(ojson{{"technique", "ridge"}}, "unknown technique");
  throws_with(ojson{{"tol_base", "1,2"}}, "tol_base needs 7 values");
  throws_with(ojson{{"doe_center", "1,2"}}, "doe_center needs 5 values");
  throws_with(ojson{{"doe_steps", "1,x"}}, "bad number 'x'");
  throws_with(ojson{{"metrics_machine_al", "median"}}, "median");
  throws_with(ojson{{"metrics_machine", "avg"}}, "unknown config key");
  throws_with(ojson{{"ga_population", 1}}, "population_size");
  throws_with(ojson{{"ga_target", "volume"}}, "unknown target");
  throws_with(ojson{{"fault_kind", "sensor_gain"}}, "fault_channel required");
  throws_with(ojson::array(), "config root must be a JSON object");

  TempDir dir("config");
  const auto file = dir.path / "run.json";
  detail::write_text(file, "{not json");
  REQUIRE_THROWS_WITH(load_run_config(file), ContainsSubstring("not valid JSON"));
  REQUIRE_THROWS_WITH(load_run_config(dir.path / "missing.json"),
                      ContainsSubstring("cannot open config"));

  save_run_config(file, exercised_config());
  const RunConfig loaded = load_run_config(file);
  REQUIRE(config_hash(loaded) == config_hash(exercised_config()));
}

// ---------------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------------

namespace {

bool same_predictions(const RegressionModel& a, const RegressionModel& b) {
  detail::Rng rng(9);
  Eigen::MatrixXd X(3, a.n_features());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = rng.uniform(-2.0, 2.0);
  return (predict(a, X).array() == predict(b, X).array()).all();
}

}  // namespace

TEST_CASE("model bundles restore every technique bit for bit") {
  TempDir dir("bundle");
  const auto file = dir.path / "bundle.json";

  VirtualSensorBank finv =
      train_finv_bank(twelve_wafers(), {SensorSuite::Machine}, {EtchRegion::TiN},
                      Technique::PolyPls, 4);
  REQUIRE(finv.models.size() == 2);  // only pressure and top power vary here
  REQUIRE(finv.errors.size() == 5);
  finv.manifest = {"dataset-a", 42, "0123456789abcdef"};

  detail::Rng rng(55);
  VirtualSensorBank g;
  g.manifest = finv.manifest;
  {
    const Eigen::MatrixXd X = random_matrix(rng, 12, 4);
    const Eigen::VectorXd y = X.col(0) - 2.0 * X.col(3);
    BankEntry e{fit_mlr(X, y), make_fit_report(fit_mlr(X, y), X, y)};
    g.models.emplace(ModelKey{vs_lwr(1), SensorSuite::Machine, EtchRegion::TiN,
                              Technique::Mlr},
                     std::move(e));
  }
  {
    const Eigen::MatrixXd X = random_matrix(rng, 20, 4);
    const Eigen::VectorXd y =
        (X.col(0) + X.col(1)).array().square().matrix() + 0.2 * X.col(2);
    NnTrainConfig nn;
    nn.epochs = 120;
    BankEntry e;
    e.model = fit_nnpls(X, y, 2, 3, nn);
    e.report = make_fit_report(e.model, X, y);
    g.models.emplace(ModelKey{vs_oxide_loss(2), SensorSuite::Machine, EtchRegion::TiN,
                              Technique::NnPls},
                     std::move(e));
  }
  {
    Eigen::MatrixXd X = random_matrix(rng, 10, 5);
    X.col(2).setConstant(3.0);  // exercise the zero-variance flags
    const Eigen::VectorXd y = X.col(0) + X.col(4);
    BankEntry e;
    e.model = fit_pls(X, y, 2);
    e.report = make_fit_report(e.model, X, y);
    g.models.emplace(ModelKey{vs_lwr(3), SensorSuite::Rfm, EtchRegion::Ox,
                              Technique::LinearPls},
                     std::move(e));
  }

  save_model_bundle(finv, g, file);
  const auto [finv2, g2] = load_model_bundle(file);
  REQUIRE(finv2.manifest.dataset_id == "dataset-a");
  REQUIRE(finv2.manifest.split_seed == 42);
  REQUIRE(finv2.manifest.config_hash == "0123456789abcdef");
  REQUIRE(finv2.errors == finv.errors);
  REQUIRE(finv2.models.size() == finv.models.size());
  REQUIRE(g2.models.size() == g.models.size());

  for (const auto& [key, entry] : finv.models) {
    const BankEntry& back = finv2.models.at(key);
    REQUIRE(back.model.technique == entry.model.technique);
    REQUIRE(back.model.n_components == entry.model.n_components);
    REQUIRE(back.report.validation_rmse == entry.report.validation_rmse);
    REQUIRE(same_predictions(entry.model, back.model));
  }
  for (const auto& [key, entry] : g.models) {
    const BankEntry& back = g2.models.at(key);
    REQUIRE(back.model.x_scaling.zero_variance == entry.model.x_scaling.zero_variance);
    REQUIRE(same_predictions(entry.model, back.model));
  }
}

TEST_CASE("bundle loading refuses foreign, future, or broken files") {
  TempDir dir("bundle_err");
  const auto file = dir.path / "bundle.json";
  VirtualSensorBank finv =
      train_finv_bank(twelve_wafers(), {SensorSuite::Machine}, {EtchRegion::TiN},
                      Technique::LinearPls, 3);
  VirtualSensorBank g = finv;
  save_model_bundle(finv, g, file);
  const std::string good = slurp(file);

  std::string future = good;
  const auto vpos = future.find("\"version\":1");
  REQUIRE(vpos != std::string::npos);
  future.replace(vpos, 11, "\"version\":2");
  detail::write_text(file, future);
  REQUIRE_THROWS_AS(load_model_bundle(file), unsupported_version_error);

  std::string foreign = good;
  const auto fpos = foreign.find(kBundleFormat);
  REQUIRE(fpos != std::string::npos);
  foreign.replace(fpos, std::string(kBundleFormat).size(), "something-else4");
  detail::write_text(file, foreign);
  REQUIRE_THROWS_AS(load_model_bundle(file), bundle_integrity_error);

  detail::write_text(file, good.substr(0, good.size() / 2));
  REQUIRE_THROWS_AS(load_model_bundle(file), bundle_integrity_error);

  detail::write_text(file, "{\"format\":\"etchfdc-bundle\",\"version\":1}\n");
  REQUIRE_THROWS_AS(load_model_bundle(file), bundle_integrity_error);

  REQUIRE_THROWS_WITH(load_model_bundle(dir.path / "absent.json"),
                      ContainsSubstring("cannot open bundle"));
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar
// ---------------------------------------------------------------------------

TEST_CASE("truth sidecar reproduces the achieved recipes exactly") {
  TempDir dir("sidecar");
  const auto file = dir.path / "ground_truth.json";
  const GroundTruth truth = make_ground_truth();
  std::vector<WaferRecord> wafers = {twelve_wafers()[0], twelve_wafers()[1]};
  const FaultScenario fault = fault_setpoint_offset(RecipeFactor::Pressure, 6.0, 2);
  write_truth_sidecar(file, truth, wafers, 42, fault);

  const TruthSidecar s = read_truth_sidecar(file);
  REQUIRE(s.table_seed == truth.config.table_seed);
  REQUIRE(s.noise_scale == truth.config.noise_scale);
  REQUIRE(s.base_seed == 42);
  REQUIRE(s.fault.kind == FaultKind::SetpointOffset);
  REQUIRE(s.fault.delta == 6.0);
  REQUIRE(s.fault.onset_wafer == 2);
  REQUIRE(s.wafer_ids == std::vector<std::string>{"w000", "w001"});
  REQUIRE(s.achieved.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    REQUIRE(s.achieved[i] == derive_recipe_targets(achieved_recipe(
                                 wafers[i].actual_recipe, truth, 42 + i)));

  detail::write_text(file, "{}");
  REQUIRE_THROWS_WITH(read_truth_sidecar(file), ContainsSubstring("incomplete"));
  detail::write_text(file, "nope");
  REQUIRE_THROWS_WITH(read_truth_sidecar(file), ContainsSubstring("not valid JSON"));
}

// ---------------------------------------------------------------------------
// Pipeline commands
// ---------------------------------------------------------------------------

TEST_CASE("assign_splits hits the reference proportions and interleaves") {
  const auto count = [](const std::vector<Split>& v, Split s) {
    return std::count(v.begin(), v.end(), s);
  };
  const auto s70 = assign_splits(70);
  REQUIRE(count(s70, Split::Train) == 35);
  REQUIRE(count(s70, Split::Validation) == 23);
  REQUIRE(count(s70, Split::Test) == 12);
  REQUIRE(s70[0] == Split::Train);
  REQUIRE(s70[1] == Split::Validation);
  REQUIRE(s70[2] == Split::Test);

  const auto s43 = assign_splits(43);
  REQUIRE(count(s43, Split::Train) == 22);
  REQUIRE(count(s43, Split::Validation) == 14);
  REQUIRE(count(s43, Split::Test) == 7);

  const auto s20 = assign_splits(20);
  REQUIRE(count(s20, Split::Train) == 10);
  REQUIRE(count(s20, Split::Validation) == 7);
  REQUIRE(count(s20, Split::Test) == 3);
}

TEST_CASE("exit_code_guard maps exception families to exit codes") {
  std::ostringstream err;
  REQUIRE(exit_code_guard(err, [] { return kExitOk; }) == 0);
  REQUIRE(exit_code_guard(err, [] { return kExitFault; }) == 1);
  REQUIRE(exit_code_guard(err, []() -> int { throw config_error("bad knob"); }) == 2);
  REQUIRE_THAT(err.str(), ContainsSubstring("config error: bad knob"));
  REQUIRE(exit_code_guard(err, []() -> int { throw data_error("bad rows"); }) == 3);
  REQUIRE_THAT(err.str(), ContainsSubstring("error: bad rows"));
}

namespace {

/// One simulated-and-pretreated 43-wafer workspace shared by the command
/// tests; later commands layer onto the same directories.
struct PipelineSandbox {
  TempDir dir{"pipeline"};
  RunConfig config;
  std::string simulate_log;

  PipelineSandbox() {
    config.dataset_dir = (dir.path / "data").string();
    config.out_dir = (dir.path / "out").string();
    config.truth.noise_scale = 0.0;
    config.doe.total_wafers = 43;
    config.seed = 11;
    std::ostringstream log;
    cmd_simulate(config, log);
    cmd_pretreat(config, log);
    simulate_log = log.str();
  }
};

PipelineSandbox& sandbox() {
  static PipelineSandbox s;
  return s;
}

void ensure_trained() {
  if (!fs::exists(bundle_path(sandbox().config))) {
    std::ostringstream log;
    cmd_train(sandbox().config, log);
  }
}

}  // namespace

TEST_CASE("cmd_simulate writes a complete, reproducible dataset") {
  const auto& sb = sandbox();
  const fs::path data = sb.config.dataset_dir;
  REQUIRE_THAT(sb.simulate_log,
               ContainsSubstring("simulated 43 wafers (train/validation/test = 22/14/7)"));
  REQUIRE(fs::exists(data / "manifest.csv"));
  REQUIRE(fs::exists(data / "ground_truth.json"));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(data)) ++entries;
  REQUIRE(entries == 1 + 43 * 3 + 1);

  RunConfig rerun = sb.config;
  rerun.dataset_dir = (sb.dir.path / "data_rerun").string();
  std::ostringstream log;
  cmd_simulate(rerun, log);
  REQUIRE(slurp(data / "manifest.csv") ==
          slurp(fs::path(rerun.dataset_dir) / "manifest.csv"));
  REQUIRE(slurp(data / "w000_machine.csv") ==
          slurp(fs::path(rerun.dataset_dir) / "w000_machine.csv"));
  REQUIRE(slurp(data / "ground_truth.json") ==
          slurp(fs::path(rerun.dataset_dir) / "ground_truth.json"));
}

TEST_CASE("cmd_pretreat emits one feature matrix per suite and region") {
  const auto& sb = sandbox();
  for (SensorSuite s : kSensorSuites)
    for (EtchRegion r : kEtchRegions)
      REQUIRE(fs::exists(fs::path(sb.config.out_dir) / feature_file_name(s, r)));
  REQUIRE_THAT(sb.simulate_log,
               ContainsSubstring("features_machine_tin.csv: 43 wafers x 60 features"));

  const FeatureMatrix m =
      read_feature_csv(fs::path(sb.config.out_dir) / "features_machine_tin.csv");
  REQUIRE(m.wafer_ids.size() == 43);
  REQUIRE(m.column_names.size() == 60);
  REQUIRE(m.wafer_ids[0] == "w000");

  RunConfig filtered = sb.config;
  filtered.out_dir = (sb.dir.path / "out_filtered").string();
  std::ostringstream log;
  cmd_pretreat(filtered, log, SensorSuite::Oes, EtchRegion::Al);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(filtered.out_dir)) ++files;
  REQUIRE(files == 1);
  REQUIRE(fs::exists(fs::path(filtered.out_dir) / "features_oes_al.csv"));

  RunConfig missing = sb.config;
  missing.dataset_dir = (sb.dir.path / "void").string();
  REQUIRE_THROWS_WITH(cmd_pretreat(missing, log), ContainsSubstring("no manifest"));
}

TEST_CASE("cmd_train builds both banks and reports the model grid") {
  std::ostringstream log;
  cmd_train(sandbox().config, log);
  REQUIRE(fs::exists(bundle_path(sandbox().config)));
  REQUIRE_THAT(log.str(), ContainsSubstring("validation RMSE ranking"));
  REQUIRE_THAT(log.str(),
               ContainsSubstring("bundle: 63 setpoint + 576 wafer-state models"));

  RunConfig missing = sandbox().config;
  missing.out_dir = (sandbox().dir.path / "out_empty").string();
  std::ostringstream err_log;
  REQUIRE_THROWS_WITH(cmd_train(missing, err_log),
                      ContainsSubstring("run pretreat first"));
}

TEST_CASE("cmd_detect scores test wafers and writes paired reports") {
  ensure_trained();
  std::ostringstream log;
  const std::vector<FaultReport> reports = cmd_detect(sandbox().config, log, {});
  REQUIRE(reports.size() == 7);
  for (const auto& rep : reports) {
    // exact models on clean data: never a setpoint finding, but a genuinely
    // out-of-spec corner wafer may still be a quality fault
    REQUIRE(rep.findings.empty());
    REQUIRE((rep.classification == FaultClass::NoFault ||
             rep.classification == FaultClass::WaferQualityFault));
    REQUIRE_FALSE(rep.suite.has_value());
    const auto base = fs::path(sandbox().config.out_dir) / ("report_" + rep.wafer_id);
    REQUIRE(fs::exists(base.string() + ".json"));
    REQUIRE(fs::exists(base.string() + ".txt"));
  }
  REQUIRE_THAT(log.str(), ContainsSubstring("wafer "));

  const std::vector<FaultReport> one = cmd_detect(sandbox().config, log, {"w000"});
  REQUIRE(one.size() == 1);
  REQUIRE(one[0].wafer_id == "w000");
  REQUIRE_THROWS_WITH(cmd_detect(sandbox().config, log, {"nope"}),
                      ContainsSubstring("unknown wafer id 'nope'"));
}

TEST_CASE("cmd_ga_select evolves a column subset and logs its artifacts") {
  ensure_trained();
  RunConfig c = sandbox().config;
  c.ga.population_size = 12;
  c.ga.generations = 4;
  c.ga.seed = 5;
  c.max_lv = 4;
  std::ostringstream log;
  const GaResult res = cmd_ga_select(c, log);
  REQUIRE(res.history.size() == 4);
  REQUIRE(res.best.fitness.has_value());
  REQUIRE(std::isfinite(*res.best.fitness));

  const auto cols_file =
      fs::path(c.out_dir) / "ga_pressure_machine_columns.txt";
  const auto hist_file =
      fs::path(c.out_dir) / "ga_pressure_machine_history.csv";
  REQUIRE(fs::exists(cols_file));
  REQUIRE(fs::exists(hist_file));
  const auto chosen = read_column_list(cols_file);
  REQUIRE(int(chosen.size()) == res.best.n_vars());
  REQUIRE_THAT(log.str(), ContainsSubstring("best validation rmse"));

  RunConfig mlr = c;
  mlr.technique = Technique::Mlr;
  REQUIRE_THROWS_WITH(cmd_ga_select(mlr, log),
                      ContainsSubstring("needs a latent technique"));
}
