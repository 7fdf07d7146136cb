#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "etchfdc/core.hpp"

namespace etchfdc {

/// Shape of a central composite design: 2^k factorial corners at +/-1,
/// 2k axial points at +/-alpha, and center replicates filling the budget.
struct DesignSpec {
  int n_factors = 5;
  Recipe center = make_recipe(9.0, 350.0, 150.0, 40.0, 60.0);
  std::vector<double> step_sizes = {2.0, 30.0, 20.0, 8.0, 10.0};  // per factor
  double axial_alpha = 0.0;  // 0 selects the rotatable default (2^k)^(1/4)
  int total_wafers = 70;
};

struct DesignPoint {
  std::vector<double> coded_levels;  // each in {-alpha, -1, 0, +1, +alpha}
  int replicate_index = 0;           // 0 except for repeated center points
};

inline double resolve_axial_alpha(const DesignSpec& spec) {
  if (spec.axial_alpha == 0.0)
    return std::pow(std::exp2(double(spec.n_factors)), 0.25);
  return spec.axial_alpha;
}

inline int minimum_ccd_wafers(int n_factors) {
  return (1 << n_factors) + 2 * n_factors + 1;
}

/// Full CCD point list in deterministic order: the 2^k factorial block
/// (first factor slowest), then axial pairs factor by factor (-alpha before
/// +alpha), then center replicates.
inline std::vector<DesignPoint> central_composite_design(const DesignSpec& spec) {
  const int k = spec.n_factors;
  if (k < 2) throw std::invalid_argument("central_composite_design: n_factors must be >= 2");
  const double alpha = resolve_axial_alpha(spec);
  if (!(alpha > 1.0))
    throw std::invalid_argument(
        "central_composite_design: axial_alpha must be > 1 for five distinct levels");
  const int min_wafers = minimum_ccd_wafers(k);
  if (spec.total_wafers < min_wafers)
    throw std::invalid_argument("central_composite_design: total_wafers " +
                                std::to_string(spec.total_wafers) + " below minimum " +
                                std::to_string(min_wafers) + " for k=" + std::to_string(k));

  std::vector<DesignPoint> points;
  points.reserve(spec.total_wafers);

  for (int idx = 0; idx < (1 << k); ++idx) {
    DesignPoint p;
    p.coded_levels.resize(k);
    for (int f = 0; f < k; ++f)
      p.coded_levels[f] = (idx >> (k - 1 - f)) & 1 ? 1.0 : -1.0;
    points.push_back(std::move(p));
  }

  for (int f = 0; f < k; ++f) {
    for (double sign : {-1.0, 1.0}) {
      DesignPoint p;
      p.coded_levels.assign(k, 0.0);
      p.coded_levels[f] = sign * alpha;
      points.push_back(std::move(p));
    }
  }

  const int n_centers = spec.total_wafers - (1 << k) - 2 * k;
  for (int rep = 0; rep < n_centers; ++rep) {
    DesignPoint p;
    p.coded_levels.assign(k, 0.0);
    p.replicate_index = rep;
    points.push_back(std::move(p));
  }

  return points;
}

/// Maps coded design points onto physical recipes: factor = center + level*step.
/// Factors beyond the recipe's five stay at center. Throws std::range_error if
/// a scaled factor leaves its physical range (pressure > 0, flows/powers >= 0).
inline std::vector<Recipe> scale_design_to_recipes(const std::vector<DesignPoint>& points,
                                                   const DesignSpec& spec) {
  const int k = spec.n_factors;
  if (k > int(kRecipeFactors.size()))
    throw std::invalid_argument("scale_design_to_recipes: at most 5 recipe factors");
  if (int(spec.step_sizes.size()) < k)
    throw std::invalid_argument("scale_design_to_recipes: step_sizes shorter than n_factors");

  std::vector<Recipe> recipes;
  recipes.reserve(points.size());
  for (const auto& p : points) {
    Recipe r = spec.center;
    for (int f = 0; f < k; ++f) {
      const RecipeFactor rf = kRecipeFactors[f];
      const double value = factor_value(spec.center, rf) + p.coded_levels[f] * spec.step_sizes[f];
      const bool bad = rf == RecipeFactor::Pressure ? !(value > 0.0) : value < 0.0;
      if (bad)
        throw std::range_error(std::string("scale_design_to_recipes: factor ") +
                               to_string(rf) + " scaled to " + format_double(value) +
                               ", outside physical range");
      r = with_factor(r, rf, value);
    }
    recipes.push_back(r);
  }
  return recipes;
}

}  // namespace etchfdc
