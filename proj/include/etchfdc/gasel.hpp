#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "etchfdc/common.hpp"
#include "etchfdc/pretreat.hpp"
#include "etchfdc/regress.hpp"

namespace etchfdc {

// ---------------------------------------------------------------------------
// Chromosomes
// ---------------------------------------------------------------------------

/// Column-inclusion mask with a cached validation RMSE.
struct Chromosome {
  std::vector<bool> mask;
  std::optional<double> fitness;

  int n_vars() const { return int(std::count(mask.begin(), mask.end(), true)); }
};

struct GaConfig {
  int population_size = 50;
  int generations = 40;
  double crossover_rate = 0.8;
  double mutation_rate = 0.01;  // per bit
  int tournament = 3;
  int elitism = 2;
  int min_vars = 2;
  double penalty_weight = 0.0;  // score surcharge per selected column
  std::uint64_t seed = 1;
};

inline void validate(const GaConfig& c) {
  if (c.population_size < 2)
    throw config_error("ga: population_size must be >= 2");
  if (c.generations < 0) throw config_error("ga: generations must be >= 0");
  if (c.crossover_rate < 0.0 || c.crossover_rate > 1.0)
    throw config_error("ga: crossover_rate outside [0,1]");
  if (c.mutation_rate < 0.0 || c.mutation_rate > 1.0)
    throw config_error("ga: mutation_rate outside [0,1]");
  if (c.tournament < 1) throw config_error("ga: tournament size must be >= 1");
  if (c.elitism < 0) throw config_error("ga: elitism must be >= 0");
  if (c.population_size < 2 * c.elitism)
    throw config_error("ga: population_size must be >= 2*elitism");
  if (c.min_vars < 1) throw config_error("ga: min_vars must be >= 1");
  if (c.penalty_weight < 0.0) throw config_error("ga: penalty_weight must be >= 0");
}

// ---------------------------------------------------------------------------
// Column masking
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd mask_columns(const Eigen::MatrixXd& X,
                                    const std::vector<bool>& mask) {
  if (int(mask.size()) != X.cols())
    throw std::invalid_argument("mask length " + std::to_string(mask.size()) +
                                " does not match " + std::to_string(X.cols()) +
                                " columns");
  const int kept = int(std::count(mask.begin(), mask.end(), true));
  Eigen::MatrixXd out(X.rows(), kept);
  int j = 0;
  for (int c = 0; c < X.cols(); ++c)
    if (mask[std::size_t(c)]) out.col(j++) = X.col(c);
  return out;
}

}  // namespace detail

inline std::vector<std::string> mask_to_columns(
    const std::vector<bool>& mask, const std::vector<std::string>& column_names) {
  if (mask.size() != column_names.size())
    throw std::invalid_argument("mask length does not match column names");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(column_names[i]);
  return out;
}

inline std::vector<bool> columns_to_mask(const std::vector<std::string>& selected,
                                         const std::vector<std::string>& column_names) {
  std::vector<bool> mask(column_names.size(), false);
  for (const auto& name : selected) {
    const auto it = std::find(column_names.begin(), column_names.end(), name);
    if (it == column_names.end())
      throw data_error("column filter names unknown column '" + name + "'");
    mask[std::size_t(it - column_names.begin())] = true;
  }
  return mask;
}

inline FeatureMatrix apply_column_mask(const FeatureMatrix& m,
                                       const std::vector<bool>& mask) {
  FeatureMatrix out;
  out.wafer_ids = m.wafer_ids;
  out.column_names = mask_to_columns(mask, m.column_names);
  out.values = detail::mask_columns(m.values, mask);
  return out;
}

// ---------------------------------------------------------------------------
// Fitness
// ---------------------------------------------------------------------------

/// Validation RMSE of the technique fit on the masked columns, with the
/// latent cap clamped to what the masked shape supports. Any fit failure
/// maps to +inf so the search routes around it.
inline double fitness(const Chromosome& chrom, const Eigen::MatrixXd& X_tr,
                      const Eigen::VectorXd& y_tr, const Eigen::MatrixXd& X_val,
                      const Eigen::VectorXd& y_val, Technique technique, int max_lv,
                      int min_vars = 2, const FitOptions& opt = {}) {
  const int nv = chrom.n_vars();
  if (nv < min_vars)
    throw std::invalid_argument("fitness: mask selects " + std::to_string(nv) +
                                " columns, below min_vars " +
                                std::to_string(min_vars));
  const Eigen::MatrixXd Xm_tr = detail::mask_columns(X_tr, chrom.mask);
  const Eigen::MatrixXd Xm_val = detail::mask_columns(X_val, chrom.mask);
  const int lv = std::clamp(max_lv, 1, detail::latent_bound(Xm_tr));
  try {
    const SelectionResult sel =
        select_latent_dim(Xm_tr, y_tr, Xm_val, y_val, technique, lv, opt);
    const double v = *sel.reports[std::size_t(sel.best_n_lv - 1)].validation_rmse;
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

// ---------------------------------------------------------------------------
// Evolution
// ---------------------------------------------------------------------------

struct GaHistoryRow {
  int generation = 0;  // 1-based
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double best_ever_fitness = 0.0;
  int best_ever_n_vars = 0;
};

struct GaResult {
  Chromosome best;  // best ever seen
  std::vector<GaHistoryRow> history;  // one row per generation
  int evaluations = 0;  // model fits (cache misses)
};

namespace detail {

inline void repair_mask(std::vector<bool>& mask, int min_vars, Rng& rng) {
  int nv = int(std::count(mask.begin(), mask.end(), true));
  while (nv < min_vars) {
    std::vector<std::size_t> off;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) off.push_back(i);
    mask[off[rng.index(off.size())]] = true;
    ++nv;
  }
}

}  // namespace detail

/// Tournament GA over column masks. Selection, elitism, and the best-ever
/// record compare by score = fitness + penalty_weight * n_vars; the default
/// zero penalty makes scores plain validation RMSEs. History has exactly
/// config.generations rows, one per post-variation population.
inline GaResult evolve(const Eigen::MatrixXd& X_tr, const Eigen::VectorXd& y_tr,
                       const Eigen::MatrixXd& X_val, const Eigen::VectorXd& y_val,
                       Technique technique, int max_lv, const GaConfig& config,
                       const FitOptions& opt = {}) {
  validate(config);
  const int n_cols = int(X_tr.cols());
  if (n_cols < config.min_vars)
    throw config_error("ga: min_vars " + std::to_string(config.min_vars) +
                       " exceeds the " + std::to_string(n_cols) + " columns");
  if (X_val.cols() != X_tr.cols())
    throw std::invalid_argument("ga: train/validation column mismatch");

  detail::Rng rng(config.seed);
  std::map<std::vector<bool>, double> cache;
  GaResult res;

  const auto evaluate = [&](Chromosome& c) {
    if (c.fitness) return;
    const auto it = cache.find(c.mask);
    if (it != cache.end()) {
      c.fitness = it->second;
      return;
    }
    const double f = fitness(c, X_tr, y_tr, X_val, y_val, technique, max_lv,
                             config.min_vars, opt);
    cache.emplace(c.mask, f);
    c.fitness = f;
    ++res.evaluations;
  };
  const auto score = [&](const Chromosome& c) {
    return *c.fitness + config.penalty_weight * c.n_vars();
  };

  std::vector<Chromosome> pop(std::size_t(config.population_size));
  for (auto& c : pop) {
    c.mask.resize(std::size_t(n_cols));
    for (std::size_t i = 0; i < c.mask.size(); ++i) c.mask[i] = rng.bernoulli(0.5);
    detail::repair_mask(c.mask, config.min_vars, rng);
    evaluate(c);
  }

  const auto update_best = [&]() {
    for (const auto& c : pop)
      if (!res.best.fitness || score(c) < score(res.best)) res.best = c;
  };
  update_best();

  const auto tournament = [&]() -> const Chromosome& {
    std::size_t winner = rng.index(pop.size());
    for (int i = 1; i < config.tournament; ++i) {
      const std::size_t rival = rng.index(pop.size());
      if (score(pop[rival]) < score(pop[winner])) winner = rival;
    }
    return pop[winner];
  };

  for (int gen = 1; gen <= config.generations; ++gen) {
    std::vector<Chromosome> next;
    next.reserve(pop.size());
    if (config.elitism > 0) {
      std::vector<std::size_t> order(pop.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return score(pop[a]) < score(pop[b]);
      });
      for (int e = 0; e < config.elitism; ++e) next.push_back(pop[order[std::size_t(e)]]);
    }
    while (int(next.size()) < config.population_size) {
      const Chromosome& pa = tournament();
      const Chromosome& pb = tournament();
      Chromosome child;
      child.mask.resize(std::size_t(n_cols));
      if (rng.bernoulli(config.crossover_rate)) {
        for (std::size_t i = 0; i < child.mask.size(); ++i)
          child.mask[i] = rng.bernoulli(0.5) ? pa.mask[i] : pb.mask[i];
      } else {
        child.mask = pa.mask;
      }
      for (std::size_t i = 0; i < child.mask.size(); ++i)
        if (rng.bernoulli(config.mutation_rate)) child.mask[i] = !child.mask[i];
      detail::repair_mask(child.mask, config.min_vars, rng);
      evaluate(child);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    update_best();

    GaHistoryRow row;
    row.generation = gen;
    row.best_fitness = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto& c : pop) {
      row.best_fitness = std::min(row.best_fitness, score(c));
      sum += score(c);
    }
    row.mean_fitness = sum / double(pop.size());
    row.best_ever_fitness = score(res.best);
    row.best_ever_n_vars = res.best.n_vars();
    res.history.push_back(row);
  }
  return res;
}

}  // namespace etchfdc
