#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etchfdc/common.hpp"
#include "etchfdc/pretreat.hpp"

namespace etchfdc {

/// OLS design matrix is (numerically) rank deficient. Expected for the full
/// pretreated feature set, whose channels are heavily collinear.
class collinearity_error : public data_error {
public:
  using data_error::data_error;
};

enum class Technique { Mlr = 0, Pcr, LinearPls, PolyPls, NnPls };

inline constexpr std::array<Technique, 5> kTechniques = {
    Technique::Mlr, Technique::Pcr, Technique::LinearPls, Technique::PolyPls,
    Technique::NnPls};

inline const char* to_string(Technique t) {
  switch (t) {
    case Technique::Mlr: return "mlr";
    case Technique::Pcr: return "pcr";
    case Technique::LinearPls: return "linearpls";
    case Technique::PolyPls: return "polypls";
    case Technique::NnPls: return "nnpls";
  }
  return "?";
}

inline Technique parse_technique(std::string_view s) {
  for (Technique t : kTechniques)
    if (s == to_string(t)) return t;
  throw config_error("unknown technique: '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Inner relations
// ---------------------------------------------------------------------------

/// One-input one-output net with h sigmoid hidden units and a linear bypass:
/// net(t) = beta*s + sum_j v_j * sigmoid(a_j*s + b_j) + c, where s = t/t_scale.
/// t_scale is frozen at fit time, not trained.
struct NnInnerNet {
  Eigen::VectorXd a, b, v;
  double beta = 0.0;
  double c = 0.0;
  double t_scale = 1.0;
};

inline double nn_eval(const NnInnerNet& net, double t) {
  const double s = t / net.t_scale;
  double y = net.beta * s + net.c;
  for (Eigen::Index j = 0; j < net.a.size(); ++j)
    y += net.v(j) / (1.0 + std::exp(-(net.a(j) * s + net.b(j))));
  return y;
}

/// Trainable parameters as a flat vector: [a; b; v; beta; c].
inline Eigen::VectorXd nn_pack(const NnInnerNet& net) {
  const Eigen::Index h = net.a.size();
  Eigen::VectorXd p(3 * h + 2);
  p.segment(0, h) = net.a;
  p.segment(h, h) = net.b;
  p.segment(2 * h, h) = net.v;
  p(3 * h) = net.beta;
  p(3 * h + 1) = net.c;
  return p;
}

inline NnInnerNet nn_unpack(const Eigen::VectorXd& p, double t_scale) {
  if ((p.size() - 2) % 3 != 0 || p.size() < 5)
    throw std::invalid_argument("nn_unpack: flat parameter size " +
                                std::to_string(p.size()) + " is not 3h+2");
  const Eigen::Index h = (p.size() - 2) / 3;
  NnInnerNet net;
  net.a = p.segment(0, h);
  net.b = p.segment(h, h);
  net.v = p.segment(2 * h, h);
  net.beta = p(3 * h);
  net.c = p(3 * h + 1);
  net.t_scale = t_scale;
  return net;
}

/// Analytic gradient of the summed squared error sum_i (u_i - net(t_i))^2
/// with respect to the packed parameters (same layout as nn_pack).
inline Eigen::VectorXd nn_inner_gradient(const NnInnerNet& net,
                                         const Eigen::VectorXd& t,
                                         const Eigen::VectorXd& u) {
  if (t.size() != u.size())
    throw std::invalid_argument("nn_inner_gradient: t/u length mismatch");
  const Eigen::Index h = net.a.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * h + 2);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double s = t(i) / net.t_scale;
    double out = net.beta * s + net.c;
    Eigen::VectorXd sig(h);
    for (Eigen::Index j = 0; j < h; ++j) {
      sig(j) = 1.0 / (1.0 + std::exp(-(net.a(j) * s + net.b(j))));
      out += net.v(j) * sig(j);
    }
    const double e = 2.0 * (out - u(i));
    for (Eigen::Index j = 0; j < h; ++j) {
      const double dsig = sig(j) * (1.0 - sig(j));
      g(j) += e * net.v(j) * dsig * s;      // a_j
      g(h + j) += e * net.v(j) * dsig;      // b_j
      g(2 * h + j) += e * sig(j);           // v_j
    }
    g(3 * h) += e * s;                      // beta
    g(3 * h + 1) += e;                      // c
  }
  return g;
}

struct NnTrainConfig {
  int epochs = 2000;
  double learning_rate = 0.05;
  int patience = 50;        // early-stop stagnation window, in epochs
  std::uint64_t seed = 1;
};

/// Per-component inner mapping from X-score t to y-score. Exactly one of the
/// representations is active, chosen by the model's technique.
struct InnerComponent {
  double b = 0.0;                    // LinearPls coefficient / Pcr score coefficient
  Eigen::VectorXd poly;              // PolyPls coefficients, constant term first
  std::optional<NnInnerNet> net;     // NnPls
};

inline double inner_eval(const InnerComponent& ic, Technique tech, double t) {
  switch (tech) {
    case Technique::Pcr:
    case Technique::LinearPls:
      return ic.b * t;
    case Technique::PolyPls: {
      double acc = 0.0;
      for (Eigen::Index i = ic.poly.size() - 1; i >= 0; --i) acc = acc * t + ic.poly(i);
      return acc;
    }
    case Technique::NnPls:
      return nn_eval(*ic.net, t);
    case Technique::Mlr:
      break;
  }
  throw std::logic_error("inner_eval: technique has no inner relation");
}

// ---------------------------------------------------------------------------
// Model and report types
// ---------------------------------------------------------------------------

/// A fitted single-target model. Latent techniques store per-component weight
/// and loading columns; MLR stores a dense coefficient vector. All stored
/// quantities live in autoscaled space; predict applies and inverts scaling.
struct RegressionModel {
  Technique technique = Technique::LinearPls;
  StandardizeParams x_scaling, y_scaling;
  int n_components = 0;
  Eigen::MatrixXd x_weights;    // features x components (W)
  Eigen::MatrixXd x_loadings;   // features x components (P)
  Eigen::VectorXd y_loadings;   // per component (Q); 1.0 throughout for one target
  std::vector<InnerComponent> inner;
  std::optional<Eigen::VectorXd> mlr_coefficients;
  double condition_estimate = 0.0;   // MLR only

  Eigen::Index n_features() const { return x_scaling.means.size(); }
};

struct FitReport {
  Technique technique = Technique::LinearPls;
  int n_components = 0;
  double train_rmse = 0.0;
  std::optional<double> validation_rmse;
  std::vector<double> x_explained;   // fraction of scaled-X variance per component
  std::vector<double> y_explained;   // fraction of scaled-y variance per component
};

inline double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size())
    throw std::invalid_argument("rmse: length mismatch (" +
                                std::to_string(predicted.size()) + " vs " +
                                std::to_string(actual.size()) + ")");
  if (predicted.size() == 0)
    throw std::invalid_argument("rmse: empty vectors");
  return std::sqrt((predicted - actual).squaredNorm() / double(predicted.size()));
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

inline void check_xy(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size())
    throw std::invalid_argument("fit: X has " + std::to_string(X.rows()) +
                                " rows but y has " + std::to_string(y.size()));
  if (X.rows() < 2) throw std::invalid_argument("fit: need at least 2 rows");
}

inline int latent_bound(const Eigen::MatrixXd& X) {
  return int(std::min(X.rows() - 1, X.cols()));
}

inline void check_n_components(const Eigen::MatrixXd& X, int n, const char* what) {
  if (n < 1 || n > latent_bound(X))
    throw std::invalid_argument(std::string(what) + ": n_components " +
                                std::to_string(n) + " outside 1..min(rows-1, cols) = " +
                                std::to_string(latent_bound(X)));
}

struct ScaledProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  StandardizeParams xp, yp;
};

inline ScaledProblem autoscale_problem(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y) {
  ScaledProblem sp;
  auto [Xs, xp] = standardize(X);
  auto [Ys, yp] = standardize(Eigen::MatrixXd(y));
  sp.X = std::move(Xs);
  sp.y = Ys.col(0);
  sp.xp = std::move(xp);
  sp.yp = std::move(yp);
  return sp;
}

/// Least-squares polynomial of u on t, constant term first.
inline Eigen::VectorXd polyfit(const Eigen::VectorXd& t, const Eigen::VectorXd& u,
                               int degree) {
  Eigen::MatrixXd V(t.size(), degree + 1);
  V.col(0).setOnes();
  for (int d = 1; d <= degree; ++d) V.col(d) = V.col(d - 1).cwiseProduct(t);
  return V.colPivHouseholderQr().solve(u);
}

inline NnInnerNet train_inner_net(const Eigen::VectorXd& t, const Eigen::VectorXd& u,
                                  int hidden, const NnTrainConfig& cfg, Rng& rng) {
  const Eigen::Index n = t.size();
  NnInnerNet net;
  net.t_scale = std::sqrt((t.array() - t.mean()).square().sum() / double(n - 1));
  if (net.t_scale <= 0.0) net.t_scale = 1.0;
  net.a.resize(hidden);
  net.b.resize(hidden);
  net.v.resize(hidden);
  for (int j = 0; j < hidden; ++j) net.a(j) = rng.uniform(-0.5, 0.5);
  for (int j = 0; j < hidden; ++j) net.b(j) = rng.uniform(-0.5, 0.5);
  // output weights start a tenth of that so the bypass dominates at epoch 0
  for (int j = 0; j < hidden; ++j) net.v(j) = rng.uniform(-0.05, 0.05);
  const Eigen::VectorXd s = t / net.t_scale;
  const double smean = s.mean(), umean = u.mean();
  const double svar = (s.array() - smean).square().sum();
  net.beta = svar > 0.0 ? ((s.array() - smean) * (u.array() - umean)).sum() / svar : 0.0;
  net.c = umean - net.beta * smean;

  std::vector<Eigen::Index> tr_idx, val_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    (n >= 8 && i % 4 == 3 ? val_idx : tr_idx).push_back(i);
  auto take = [&](const std::vector<Eigen::Index>& idx, const Eigen::VectorXd& v) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out(Eigen::Index(i)) = v(idx[i]);
    return out;
  };
  const Eigen::VectorXd t_tr = take(tr_idx, t), u_tr = take(tr_idx, u);
  const Eigen::VectorXd t_val = take(val_idx, t), u_val = take(val_idx, u);

  auto val_mse = [&](const NnInnerNet& m) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t_val.size(); ++i) {
      const double e = u_val(i) - nn_eval(m, t_val(i));
      acc += e * e;
    }
    return acc / double(t_val.size());
  };

  Eigen::VectorXd theta = nn_pack(net);
  Eigen::VectorXd best_theta = theta;
  double best_val = val_idx.empty() ? 0.0 : val_mse(net);
  int stale = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const NnInnerNet cur = nn_unpack(theta, net.t_scale);
    const Eigen::VectorXd g = nn_inner_gradient(cur, t_tr, u_tr) / double(t_tr.size());
    theta -= cfg.learning_rate * g;
    if (!val_idx.empty()) {
      const double v = val_mse(nn_unpack(theta, net.t_scale));
      if (v < best_val) {
        best_val = v;
        best_theta = theta;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return nn_unpack(val_idx.empty() ? theta : best_theta, net.t_scale);
}

struct NipalsOptions {
  Technique technique = Technique::LinearPls;
  int poly_degree = 2;
  int nn_hidden = 3;
  NnTrainConfig nn;
};

/// NIPALS outer loop with a pluggable inner relation; one y column, so the
/// weight iteration settles immediately but the contract loop stays in place.
inline RegressionModel fit_nipals(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  int n_lv, const NipalsOptions& opt) {
  check_xy(X, y);
  check_n_components(X, n_lv, "fit_pls");
  auto sp = autoscale_problem(X, y);
  if (sp.yp.zero_variance[0])
    throw data_error("fit_pls: degenerate target (y has zero variance)");
  const double x_ref = sp.X.norm();
  if (x_ref <= 0.0) throw data_error("fit_pls: X has no variance");

  RegressionModel m;
  m.technique = opt.technique;
  m.x_scaling = sp.xp;
  m.y_scaling = sp.yp;
  m.x_weights.resize(X.cols(), n_lv);
  m.x_loadings.resize(X.cols(), n_lv);
  m.y_loadings.resize(n_lv);
  Rng rng(opt.nn.seed);

  Eigen::MatrixXd E = sp.X;
  Eigen::VectorXd f = sp.y;
  int kept = 0;
  for (int k = 0; k < n_lv; ++k) {
    const Eigen::VectorXd& u = f;
    Eigen::VectorXd w = E.transpose() * u;
    if (w.norm() <= 1e-12 * x_ref * std::max(u.norm(), 1.0)) break;  // rank spent
    w /= w.norm();
    Eigen::VectorXd t = E * w;
    for (int iter = 0;; ++iter) {
      Eigen::VectorXd w_next = E.transpose() * u;
      w_next /= w_next.norm();
      const double delta = (w_next - w).norm() / w.norm();
      w = w_next;
      t = E * w;
      if (delta <= 1e-10) break;
      if (iter >= 500)
        throw std::runtime_error("fit_pls: weight iteration did not converge at component " +
                                 std::to_string(k + 1));
    }
    const double tt = t.squaredNorm();
    if (tt <= 1e-24 * x_ref * x_ref) break;

    InnerComponent ic;
    Eigen::VectorXd u_hat;
    switch (opt.technique) {
      case Technique::LinearPls:
        ic.b = t.dot(u) / tt;
        u_hat = ic.b * t;
        break;
      case Technique::PolyPls: {
        ic.poly = polyfit(t, u, opt.poly_degree);
        u_hat.resize(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i)
          u_hat(i) = inner_eval(ic, Technique::PolyPls, t(i));
        break;
      }
      case Technique::NnPls: {
        ic.net = train_inner_net(t, u, opt.nn_hidden, opt.nn, rng);
        u_hat.resize(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) u_hat(i) = nn_eval(*ic.net, t(i));
        break;
      }
      default:
        throw std::logic_error("fit_nipals: unsupported technique");
    }

    const Eigen::VectorXd p = E.transpose() * t / tt;
    E.noalias() -= t * p.transpose();
    f -= u_hat;
    m.x_weights.col(kept) = w;
    m.x_loadings.col(kept) = p;
    m.y_loadings(kept) = 1.0;
    m.inner.push_back(std::move(ic));
    ++kept;
  }
  if (kept == 0) throw data_error("fit_pls: no extractable component (X'y is zero)");
  m.n_components = kept;
  m.x_weights.conservativeResize(Eigen::NoChange, kept);
  m.x_loadings.conservativeResize(Eigen::NoChange, kept);
  m.y_loadings.conservativeResize(kept);
  return m;
}

}  // namespace detail

inline RegressionModel fit_mlr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  detail::check_xy(X, y);
  if (X.rows() <= X.cols())
    throw std::invalid_argument("fit_mlr: need rows > columns, got " +
                                std::to_string(X.rows()) + "x" + std::to_string(X.cols()));
  auto sp = detail::autoscale_problem(X, y);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sp.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double cond = smin > 0.0 ? smax / smin
                                 : std::numeric_limits<double>::infinity();
  const double rank_tol = double(std::max(X.rows(), X.cols())) *
                          std::numeric_limits<double>::epsilon() * smax;
  if (smax <= 0.0 || smin <= rank_tol || cond > 1e10)
    throw collinearity_error("fit_mlr: design matrix is collinear (condition estimate " +
                             format_double(cond) + ")");
  RegressionModel m;
  m.technique = Technique::Mlr;
  m.x_scaling = sp.xp;
  m.y_scaling = sp.yp;
  m.mlr_coefficients = svd.solve(sp.y);
  m.condition_estimate = cond;
  return m;
}

inline RegressionModel fit_pcr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               int n_components) {
  detail::check_xy(X, y);
  detail::check_n_components(X, n_components, "fit_pcr");
  auto sp = detail::autoscale_problem(X, y);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sp.X.transpose() * sp.X);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("fit_pcr: eigendecomposition failed");
  const Eigen::Index nc = X.cols();

  RegressionModel m;
  m.technique = Technique::Pcr;
  m.x_scaling = sp.xp;
  m.y_scaling = sp.yp;
  m.n_components = n_components;
  m.x_weights.resize(nc, n_components);
  m.x_loadings.resize(nc, n_components);
  m.y_loadings = Eigen::VectorXd::Ones(n_components);
  const double lambda_max = std::max(eig.eigenvalues()(nc - 1), 0.0);
  for (int k = 0; k < n_components; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(nc - 1 - k);  // descending variance
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;  // deterministic sign
    const Eigen::VectorXd t = sp.X * v;
    const double tt = t.squaredNorm();
    InnerComponent ic;
    // null-direction scores get coefficient 0 instead of a 0/0 blowup
    if (tt > 1e-12 * lambda_max) ic.b = t.dot(sp.y) / tt;
    m.x_weights.col(k) = v;
    m.x_loadings.col(k) = v;
    m.inner.push_back(std::move(ic));
  }
  return m;
}

inline RegressionModel fit_pls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               int n_lv) {
  detail::NipalsOptions opt;
  opt.technique = Technique::LinearPls;
  return detail::fit_nipals(X, y, n_lv, opt);
}

inline RegressionModel fit_polypls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   int n_lv, int degree = 2) {
  if (degree < 1)
    throw std::invalid_argument("fit_polypls: degree must be >= 1, got " +
                                std::to_string(degree));
  detail::NipalsOptions opt;
  opt.technique = Technique::PolyPls;
  opt.poly_degree = degree;
  return detail::fit_nipals(X, y, n_lv, opt);
}

inline RegressionModel fit_nnpls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 int n_lv, int hidden = 3,
                                 const NnTrainConfig& cfg = {}) {
  if (hidden < 1)
    throw std::invalid_argument("fit_nnpls: hidden must be >= 1, got " +
                                std::to_string(hidden));
  detail::NipalsOptions opt;
  opt.technique = Technique::NnPls;
  opt.nn_hidden = hidden;
  opt.nn = cfg;
  return detail::fit_nipals(X, y, n_lv, opt);
}

// ---------------------------------------------------------------------------
// Prediction and reporting
// ---------------------------------------------------------------------------

/// Forward pass. n_components_override (latent techniques only) truncates to
/// the first k components, which NIPALS extracts greedily, so the truncated
/// model equals a model fit with the smaller n_lv.
inline Eigen::VectorXd predict(const RegressionModel& m, const Eigen::MatrixXd& X_new,
                               std::optional<int> n_components_override = {}) {
  if (X_new.cols() != m.n_features())
    throw std::invalid_argument("predict: expected " + std::to_string(m.n_features()) +
                                " columns, got " + std::to_string(X_new.cols()));
  Eigen::MatrixXd E = apply_standardize(X_new, m.x_scaling);
  Eigen::VectorXd ys = Eigen::VectorXd::Zero(X_new.rows());
  if (m.technique == Technique::Mlr) {
    ys = E * (*m.mlr_coefficients);
  } else {
    const int k_use = n_components_override.value_or(m.n_components);
    if (k_use < 1 || k_use > m.n_components)
      throw std::invalid_argument("predict: component override " + std::to_string(k_use) +
                                  " outside 1.." + std::to_string(m.n_components));
    for (int k = 0; k < k_use; ++k) {
      const Eigen::VectorXd t = E * m.x_weights.col(k);
      E.noalias() -= t * m.x_loadings.col(k).transpose();
      for (Eigen::Index i = 0; i < t.size(); ++i)
        ys(i) += inner_eval(m.inner[std::size_t(k)], m.technique, t(i)) * m.y_loadings(k);
    }
  }
  return (ys.array() * m.y_scaling.scales(0) + m.y_scaling.means(0)).matrix();
}

/// Recomputes the per-component variance story and training error of a fitted
/// model on its training data (plus optionally a validation set).
inline FitReport make_fit_report(const RegressionModel& m, const Eigen::MatrixXd& X_tr,
                                 const Eigen::VectorXd& y_tr,
                                 const Eigen::MatrixXd* X_val = nullptr,
                                 const Eigen::VectorXd* y_val = nullptr) {
  FitReport r;
  r.technique = m.technique;
  r.n_components = m.n_components;
  r.train_rmse = rmse(predict(m, X_tr), y_tr);
  if (X_val && y_val) r.validation_rmse = rmse(predict(m, *X_val), *y_val);
  if (m.technique == Technique::Mlr) return r;

  Eigen::MatrixXd E = apply_standardize(X_tr, m.x_scaling);
  Eigen::VectorXd f = apply_standardize(Eigen::MatrixXd(y_tr), m.y_scaling).col(0);
  const double x_total = E.squaredNorm();
  const double y_total = f.squaredNorm();
  for (int k = 0; k < m.n_components; ++k) {
    const double ex_before = E.squaredNorm();
    const double fy_before = f.squaredNorm();
    const Eigen::VectorXd t = E * m.x_weights.col(k);
    E.noalias() -= t * m.x_loadings.col(k).transpose();
    for (Eigen::Index i = 0; i < t.size(); ++i)
      f(i) -= inner_eval(m.inner[std::size_t(k)], m.technique, t(i)) * m.y_loadings(k);
    r.x_explained.push_back(x_total > 0 ? (ex_before - E.squaredNorm()) / x_total : 0.0);
    r.y_explained.push_back(y_total > 0 ? (fy_before - f.squaredNorm()) / y_total : 0.0);
  }
  return r;
}

/// Drops trailing components; valid only for the nested (latent) techniques.
inline RegressionModel truncate_model(RegressionModel m, int k) {
  if (m.technique == Technique::Mlr)
    throw std::invalid_argument("truncate_model: MLR has no components");
  if (k < 1 || k > m.n_components)
    throw std::invalid_argument("truncate_model: k " + std::to_string(k) +
                                " outside 1.." + std::to_string(m.n_components));
  m.n_components = k;
  m.x_weights.conservativeResize(Eigen::NoChange, k);
  m.x_loadings.conservativeResize(Eigen::NoChange, k);
  m.y_loadings.conservativeResize(k);
  m.inner.resize(std::size_t(k));
  return m;
}

struct FitOptions {
  int poly_degree = 2;
  int nn_hidden = 3;
  NnTrainConfig nn;
};

/// Technique dispatch for the latent family.
inline RegressionModel fit_latent(Technique tech, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, int n_lv,
                                  const FitOptions& opt = {}) {
  switch (tech) {
    case Technique::Pcr: return fit_pcr(X, y, n_lv);
    case Technique::LinearPls: return fit_pls(X, y, n_lv);
    case Technique::PolyPls: return fit_polypls(X, y, n_lv, opt.poly_degree);
    case Technique::NnPls: return fit_nnpls(X, y, n_lv, opt.nn_hidden, opt.nn);
    case Technique::Mlr: break;
  }
  throw config_error("fit_latent: MLR has no latent dimension");
}

struct SelectionResult {
  int best_n_lv = 0;
  std::vector<FitReport> reports;   // one per candidate n_lv, ascending
  RegressionModel model;            // truncated to best_n_lv
};

/// Fits once at max_lv and scores every truncation on the validation set.
/// Best is the smallest n_lv whose validation RMSE is within 1% of the
/// minimum. Rank exhaustion caps the candidate list at what was extractable.
inline SelectionResult select_latent_dim(const Eigen::MatrixXd& X_tr,
                                         const Eigen::VectorXd& y_tr,
                                         const Eigen::MatrixXd& X_val,
                                         const Eigen::VectorXd& y_val,
                                         Technique technique, int max_lv,
                                         const FitOptions& opt = {}) {
  if (X_val.rows() < 1 || X_val.rows() != y_val.size())
    throw std::invalid_argument("select_latent_dim: bad validation set shape");
  detail::check_n_components(X_tr, max_lv, "select_latent_dim");

  SelectionResult res;
  RegressionModel full = fit_latent(technique, X_tr, y_tr, max_lv, opt);
  const FitReport full_report = make_fit_report(full, X_tr, y_tr);
  for (int k = 1; k <= full.n_components; ++k) {
    FitReport r;
    r.technique = technique;
    r.n_components = k;
    r.train_rmse = rmse(predict(full, X_tr, k), y_tr);
    r.validation_rmse = rmse(predict(full, X_val, k), y_val);
    r.x_explained.assign(full_report.x_explained.begin(),
                         full_report.x_explained.begin() + k);
    r.y_explained.assign(full_report.y_explained.begin(),
                         full_report.y_explained.begin() + k);
    res.reports.push_back(std::move(r));
  }
  double best_val = std::numeric_limits<double>::infinity();
  for (const auto& r : res.reports) best_val = std::min(best_val, *r.validation_rmse);
  for (const auto& r : res.reports)
    if (*r.validation_rmse <= best_val * 1.01 + 1e-15) {
      res.best_n_lv = r.n_components;
      break;
    }
  res.model = truncate_model(std::move(full), res.best_n_lv);
  return res;
}

}  // namespace etchfdc
