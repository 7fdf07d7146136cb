#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/etchfdc.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> technique;
  std::optional<std::string> suite;
  std::optional<std::string> region;
  std::optional<std::string> target;
  std::optional<std::string> out;
};

void add_common_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_path, "JSON run configuration");
  cmd->add_option("--seed", ov.seed, "override the run seed");
  cmd->add_option("--technique", ov.technique,
                  "override the regression technique (mlr|pcr|linearpls|polypls|nnpls)");
  cmd->add_option("--suite", ov.suite, "restrict to one sensor suite (machine|oes|rfm)");
  cmd->add_option("--region", ov.region, "restrict to one etch region (al|tin|ox)");
  cmd->add_option("--target", ov.target,
                  "virtual-sensor target (a recipe target, lwr_dieNN, or oxide_dieNN)");
  cmd->add_option("--out", ov.out, "override the output directory");
}

etchfdc::RunConfig resolve_config(const Overrides& ov, bool seed_into_ga) {
  etchfdc::RunConfig c = ov.config_path.empty()
                             ? etchfdc::RunConfig{}
                             : etchfdc::load_run_config(ov.config_path);
  if (ov.seed) {
    c.seed = *ov.seed;
    if (seed_into_ga) c.ga.seed = *ov.seed;
  }
  if (ov.technique) c.technique = etchfdc::parse_technique(*ov.technique);
  if (ov.out) c.out_dir = *ov.out;
  if (ov.target) c.ga_target = etchfdc::parse_vs_target(*ov.target);
  if (ov.suite) c.ga_suite = etchfdc::parse_suite(*ov.suite);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual-sensor fault detection and classification toolkit"};
  app.require_subcommand(1);

  Overrides ov;
  std::vector<std::string> wafer_ids;

  CLI::App* simulate = app.add_subcommand(
      "simulate", "design the experiment and write a simulated dataset");
  add_common_options(simulate, ov);
  CLI::App* pretreat = app.add_subcommand(
      "pretreat", "summarize traces into per-(suite, region) feature matrices");
  add_common_options(pretreat, ov);
  CLI::App* train =
      app.add_subcommand("train", "train both virtual-sensor banks into a bundle");
  add_common_options(train, ov);
  CLI::App* detect = app.add_subcommand(
      "detect", "classify wafers against the trained bundle (default: test split)");
  add_common_options(detect, ov);
  detect->add_option("wafer_ids", wafer_ids, "wafer ids to examine");
  CLI::App* ga = app.add_subcommand(
      "ga-select", "evolve a feature-column subset for one target");
  add_common_options(ga, ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return etchfdc::kExitConfig;
  }

  return etchfdc::exit_code_guard(std::cerr, [&]() -> int {
    if (simulate->parsed()) {
      etchfdc::cmd_simulate(resolve_config(ov, false), std::cout);
      return etchfdc::kExitOk;
    }
    if (pretreat->parsed()) {
      std::optional<etchfdc::SensorSuite> only_suite;
      std::optional<etchfdc::EtchRegion> only_region;
      if (ov.suite) only_suite = etchfdc::parse_suite(*ov.suite);
      if (ov.region) only_region = etchfdc::parse_region(*ov.region);
      etchfdc::cmd_pretreat(resolve_config(ov, false), std::cout, only_suite,
                            only_region);
      return etchfdc::kExitOk;
    }
    if (train->parsed()) {
      etchfdc::cmd_train(resolve_config(ov, false), std::cout);
      return etchfdc::kExitOk;
    }
    if (detect->parsed()) {
      const auto reports =
          etchfdc::cmd_detect(resolve_config(ov, false), std::cout, wafer_ids);
      for (const auto& r : reports)
        if (r.classification != etchfdc::FaultClass::NoFault)
          return etchfdc::kExitFault;
      return etchfdc::kExitOk;
    }
    etchfdc::cmd_ga_select(resolve_config(ov, true), std::cout);
    return etchfdc::kExitOk;
  });
}
