#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "etchfdc/regress.hpp"

using namespace etchfdc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

// ---------------------------------------------------------------------------
// Plain-array reference implementations, kept free of the library's linear
// algebra so the two sides can disagree.
// ---------------------------------------------------------------------------

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major

Mat to_rows(const Eigen::MatrixXd& X) {
  Mat out(std::size_t(X.rows()), Vec(std::size_t(X.cols())));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out[std::size_t(i)][std::size_t(j)] = X(i, j);
  return out;
}

struct OracleScaling {
  Vec mean, scale;
};

OracleScaling oracle_fit_scaling(const Mat& X) {
  const std::size_t n = X.size(), m = X[0].size();
  OracleScaling s{Vec(m, 0.0), Vec(m, 0.0)};
  for (const auto& row : X)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += row[j];
  for (std::size_t j = 0; j < m; ++j) s.mean[j] /= double(n);
  for (const auto& row : X)
    for (std::size_t j = 0; j < m; ++j)
      s.scale[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
  for (std::size_t j = 0; j < m; ++j) {
    s.scale[j] = std::sqrt(s.scale[j] / double(n - 1));
    if (s.scale[j] <= 0.0) s.scale[j] = 1.0;
  }
  return s;
}

Mat oracle_apply_scaling(const Mat& X, const OracleScaling& s) {
  Mat out = X;
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = (row[j] - s.mean[j]) / s.scale[j];
  return out;
}

struct OraclePls {
  OracleScaling xs;
  double ymean = 0.0, yscale = 1.0;
  Mat w, p;   // per component, length m
  Vec b;      // inner slope per component
};

OraclePls oracle_fit_pls(const Mat& X, const Vec& y, int n_lv) {
  const std::size_t n = X.size(), m = X[0].size();
  OraclePls o;
  o.xs = oracle_fit_scaling(X);
  Mat E = oracle_apply_scaling(X, o.xs);
  for (double v : y) o.ymean += v;
  o.ymean /= double(n);
  double ss = 0.0;
  for (double v : y) ss += (v - o.ymean) * (v - o.ymean);
  o.yscale = std::sqrt(ss / double(n - 1));
  Vec f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = (y[i] - o.ymean) / o.yscale;

  for (int k = 0; k < n_lv; ++k) {
    Vec w(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) w[j] += E[i][j] * f[i];
    double wn = 0.0;
    for (double v : w) wn += v * v;
    wn = std::sqrt(wn);
    if (wn <= 1e-12) break;
    for (double& v : w) v /= wn;

    Vec t(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) t[i] += E[i][j] * w[j];
    double tt = 0.0, ty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      tt += t[i] * t[i];
      ty += t[i] * f[i];
    }
    const double b = ty / tt;

    Vec p(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) p[j] += E[i][j] * t[i];
    for (double& v : p) v /= tt;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) E[i][j] -= t[i] * p[j];
      f[i] -= b * t[i];
    }
    o.w.push_back(std::move(w));
    o.p.push_back(std::move(p));
    o.b.push_back(b);
  }
  return o;
}

double oracle_predict_pls(const OraclePls& o, Vec row) {
  for (std::size_t j = 0; j < row.size(); ++j)
    row[j] = (row[j] - o.xs.mean[j]) / o.xs.scale[j];
  double ys = 0.0;
  for (std::size_t k = 0; k < o.b.size(); ++k) {
    double t = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) t += row[j] * o.w[k][j];
    for (std::size_t j = 0; j < row.size(); ++j) row[j] -= t * o.p[k][j];
    ys += o.b[k] * t;
  }
  return ys * o.yscale + o.ymean;
}

/// Gaussian elimination with partial pivoting on the autoscaled normal
/// equations; returns predictions for the rows of X_new.
Vec oracle_mlr_predict(const Mat& X, const Vec& y, const Mat& X_new) {
  const std::size_t n = X.size(), m = X[0].size();
  const OracleScaling xs = oracle_fit_scaling(X);
  const Mat Xs = oracle_apply_scaling(X, xs);
  double ymean = 0.0;
  for (double v : y) ymean += v;
  ymean /= double(n);
  double ss = 0.0;
  for (double v : y) ss += (v - ymean) * (v - ymean);
  const double yscale = std::sqrt(ss / double(n - 1));

  Mat A(m, Vec(m + 1, 0.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t i = 0; i < n; ++i) A[a][b] += Xs[i][a] * Xs[i][b];
    for (std::size_t i = 0; i < n; ++i) A[a][m] += Xs[i][a] * (y[i] - ymean) / yscale;
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double factor = A[r][col] / A[col][col];
      for (std::size_t c = col; c <= m; ++c) A[r][c] -= factor * A[col][c];
    }
  }
  Vec beta(m);
  for (std::size_t j = 0; j < m; ++j) beta[j] = A[j][m] / A[j][j];

  Vec out;
  for (const auto& row : X_new) {
    double ys = 0.0;
    for (std::size_t j = 0; j < m; ++j) ys += (row[j] - xs.mean[j]) / xs.scale[j] * beta[j];
    out.push_back(ys * yscale + ymean);
  }
  return out;
}

/// Dominant eigenvector of Xs'Xs by power iteration.
Vec oracle_top_eigenvector(const Mat& X) {
  const std::size_t n = X.size(), m = X[0].size();
  const Mat Xs = oracle_apply_scaling(X, oracle_fit_scaling(X));
  Mat C(m, Vec(m, 0.0));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t i = 0; i < n; ++i) C[a][b] += Xs[i][a] * Xs[i][b];
  Vec v(m, 1.0 / std::sqrt(double(m)));
  for (int iter = 0; iter < 2000; ++iter) {
    Vec next(m, 0.0);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) next[a] += C[a][b] * v[b];
    double nn = 0.0;
    for (double x : next) nn += x * x;
    nn = std::sqrt(nn);
    for (double& x : next) x /= nn;
    v = std::move(next);
  }
  return v;
}

Eigen::MatrixXd random_matrix(detail::Rng& rng, int rows, int cols) {
  Eigen::MatrixXd X(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) X(i, j) = rng.uniform(-2.0, 2.0);
  return X;
}

Eigen::VectorXd random_vector(detail::Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(-2.0, 2.0);
  return v;
}

/// Training scores of a fitted latent model, recovered via its stored
/// weights/loadings.
Eigen::MatrixXd model_scores(const RegressionModel& m, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd E = apply_standardize(X, m.x_scaling);
  Eigen::MatrixXd T(X.rows(), m.n_components);
  for (int k = 0; k < m.n_components; ++k) {
    T.col(k) = E * m.x_weights.col(k);
    E.noalias() -= T.col(k) * m.x_loadings.col(k).transpose();
  }
  return T;
}

}  // namespace

// ---------------------------------------------------------------------------
// rmse
// ---------------------------------------------------------------------------

TEST_CASE("rmse computes the root mean squared difference") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 1, 4, 3;
  REQUIRE_THAT(rmse(a, b), WithinAbs(2.0 / std::sqrt(3.0), 1e-12));
  Eigen::VectorXd empty(0);
  REQUIRE_THROWS_AS(rmse(empty, empty), std::invalid_argument);
  REQUIRE_THROWS_AS(rmse(a, empty), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// MLR
// ---------------------------------------------------------------------------

TEST_CASE("fit_mlr matches normal-equation least squares") {
  detail::Rng rng(101);
  const Eigen::MatrixXd X = random_matrix(rng, 12, 4);
  const Eigen::VectorXd y = random_vector(rng, 12);
  const Eigen::MatrixXd X_new = random_matrix(rng, 5, 4);

  const RegressionModel m = fit_mlr(X, y);
  const Eigen::VectorXd pred = predict(m, X_new);
  Vec yv(y.data(), y.data() + y.size());
  const Vec expected = oracle_mlr_predict(to_rows(X), yv, to_rows(X_new));
  for (int i = 0; i < 5; ++i)
    REQUIRE_THAT(pred(i), WithinAbs(expected[std::size_t(i)], 1e-8));
}

TEST_CASE("fit_mlr recovers an exact affine relationship") {
  detail::Rng rng(7);
  const Eigen::MatrixXd X = random_matrix(rng, 10, 3);
  const Eigen::VectorXd y = 2.0 * X.col(0) - X.col(1) + 0.5 * X.col(2) +
                            Eigen::VectorXd::Constant(10, 3.0);
  const RegressionModel m = fit_mlr(X, y);
  const Eigen::MatrixXd X_new = random_matrix(rng, 4, 3);
  const Eigen::VectorXd expected = 2.0 * X_new.col(0) - X_new.col(1) +
                                   0.5 * X_new.col(2) +
                                   Eigen::VectorXd::Constant(4, 3.0);
  REQUIRE_THAT(rmse(predict(m, X_new), expected), WithinAbs(0.0, 1e-9));
  REQUIRE(m.condition_estimate >= 1.0);
}

TEST_CASE("fit_mlr rejects collinear and underdetermined designs") {
  detail::Rng rng(5);
  Eigen::MatrixXd X = random_matrix(rng, 10, 3);
  const Eigen::VectorXd y = random_vector(rng, 10);
  Eigen::MatrixXd Xd(10, 4);
  Xd << X, X.col(0);  // duplicated column
  REQUIRE_THROWS_AS(fit_mlr(Xd, y), collinearity_error);
  REQUIRE_THROWS_AS(fit_mlr(random_matrix(rng, 4, 4), random_vector(rng, 4)),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Linear PLS
// ---------------------------------------------------------------------------

TEST_CASE("fit_pls agrees with the plain-array reference implementation") {
  detail::Rng rng(202);
  for (int trial = 0; trial < 5; ++trial) {
    const int rows = 8 + int(rng.index(5));
    const int cols = 3 + int(rng.index(3));
    const int n_lv = 2 + int(rng.index(std::size_t(cols - 1)));
    const Eigen::MatrixXd X = random_matrix(rng, rows, cols);
    const Eigen::VectorXd y = random_vector(rng, rows);
    const Eigen::MatrixXd X_new = random_matrix(rng, 4, cols);

    const RegressionModel m = fit_pls(X, y, n_lv);
    REQUIRE(m.n_components == n_lv);
    const OraclePls o =
        oracle_fit_pls(to_rows(X), Vec(y.data(), y.data() + y.size()), n_lv);
    REQUIRE(o.b.size() == std::size_t(n_lv));
    const Eigen::VectorXd pred = predict(m, X_new);
    const Mat rows_new = to_rows(X_new);
    for (int i = 0; i < 4; ++i)
      REQUIRE_THAT(pred(i), WithinAbs(oracle_predict_pls(o, rows_new[std::size_t(i)]),
                                      1e-9));
  }
}

TEST_CASE("PLS training scores are pairwise orthogonal") {
  detail::Rng rng(303);
  const Eigen::MatrixXd X = random_matrix(rng, 10, 6);
  const Eigen::VectorXd y = random_vector(rng, 10);
  const RegressionModel m = fit_pls(X, y, 5);
  const Eigen::MatrixXd T = model_scores(m, X);
  for (int a = 0; a < T.cols(); ++a)
    for (int b = a + 1; b < T.cols(); ++b)
      REQUIRE_THAT(std::abs(T.col(a).dot(T.col(b))),
                   WithinAbs(0.0, 1e-8 * T.col(a).norm() * T.col(b).norm()));
}

TEST_CASE("full-component PLS and PCR reproduce MLR on full-rank data") {
  detail::Rng rng(404);
  const Eigen::MatrixXd X = random_matrix(rng, 9, 5);
  const Eigen::VectorXd y = random_vector(rng, 9);
  const Eigen::MatrixXd X_new = random_matrix(rng, 4, 5);
  const Eigen::VectorXd mlr = predict(fit_mlr(X, y), X_new);
  const Eigen::VectorXd pls = predict(fit_pls(X, y, 5), X_new);
  const Eigen::VectorXd pcr = predict(fit_pcr(X, y, 5), X_new);
  for (int i = 0; i < 4; ++i) {
    REQUIRE_THAT(pls(i), WithinAbs(mlr(i), 1e-6));
    REQUIRE_THAT(pcr(i), WithinAbs(mlr(i), 1e-6));
  }
}

TEST_CASE("fit_pls guards degenerate inputs") {
  detail::Rng rng(1);
  const Eigen::MatrixXd X = random_matrix(rng, 6, 3);
  REQUIRE_THROWS_AS(fit_pls(X, Eigen::VectorXd::Constant(6, 2.0), 2), data_error);
  REQUIRE_THROWS_AS(fit_pls(X, random_vector(rng, 6), 0), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_pls(X, random_vector(rng, 6), 6), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_pls(X, random_vector(rng, 5), 2), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_pls(Eigen::MatrixXd::Zero(6, 3), random_vector(rng, 6), 2),
                    data_error);
}

TEST_CASE("rank-deficient X stops component extraction early") {
  detail::Rng rng(21);
  const Eigen::MatrixXd T = random_matrix(rng, 12, 2);
  const Eigen::MatrixXd A = random_matrix(rng, 2, 5);
  const Eigen::MatrixXd X = T * A;  // rank 2
  const Eigen::VectorXd y = T.col(0) - 0.5 * T.col(1);
  const RegressionModel m = fit_pls(X, y, 5);
  REQUIRE(m.n_components <= 3);
  REQUIRE_THAT(rmse(predict(m, X), y), WithinAbs(0.0, 1e-8));
}

// ---------------------------------------------------------------------------
// PCR
// ---------------------------------------------------------------------------

TEST_CASE("first PCR direction is the dominant principal axis") {
  detail::Rng rng(505);
  const Eigen::MatrixXd X = random_matrix(rng, 14, 4);
  const Eigen::VectorXd y = random_vector(rng, 14);
  const RegressionModel m = fit_pcr(X, y, 2);
  const Vec top = oracle_top_eigenvector(to_rows(X));
  double dot = 0.0;
  for (int j = 0; j < 4; ++j) dot += m.x_weights(j, 0) * top[std::size_t(j)];
  REQUIRE_THAT(std::abs(dot), WithinAbs(1.0, 1e-6));
  REQUIRE_THAT(m.x_weights.col(0).norm(), WithinAbs(1.0, 1e-12));
  // deterministic sign: the largest-magnitude entry is positive
  Eigen::Index imax = 0;
  m.x_weights.col(0).cwiseAbs().maxCoeff(&imax);
  REQUIRE(m.x_weights(imax, 0) > 0.0);
}

TEST_CASE("PCR components capture decreasing X variance") {
  detail::Rng rng(606);
  const Eigen::MatrixXd X = random_matrix(rng, 16, 5);
  const Eigen::VectorXd y = random_vector(rng, 16);
  const FitReport r = make_fit_report(fit_pcr(X, y, 4), X, y);
  for (std::size_t k = 1; k < r.x_explained.size(); ++k)
    REQUIRE(r.x_explained[k] <= r.x_explained[k - 1] + 1e-9);
}

// ---------------------------------------------------------------------------
// Polynomial PLS
// ---------------------------------------------------------------------------

TEST_CASE("degree-1 polynomial PLS equals linear PLS") {
  detail::Rng rng(707);
  const Eigen::MatrixXd X = random_matrix(rng, 10, 4);
  const Eigen::VectorXd y = random_vector(rng, 10);
  const Eigen::MatrixXd X_new = random_matrix(rng, 5, 4);
  const Eigen::VectorXd a = predict(fit_pls(X, y, 3), X_new);
  const Eigen::VectorXd b = predict(fit_polypls(X, y, 3, 1), X_new);
  for (int i = 0; i < 5; ++i) REQUIRE_THAT(a(i), WithinAbs(b(i), 1e-9));
  REQUIRE_THROWS_AS(fit_polypls(X, y, 3, 0), std::invalid_argument);
}

TEST_CASE("quadratic inner relation captures a squared score response") {
  // balanced two-level columns keep every covariance of X with t^2 at
  // exactly zero, so the first weight vector recovers t itself
  const auto balanced_xy = [](int n, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    X.resize(n, 4);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 4; ++j) X(i, j) = (i & (1 << j)) ? 1.0 : -1.0;
    const Eigen::VectorXd t = X.col(0) + X.col(1);
    y = t.array().square().matrix() + 0.3 * t;
  };
  Eigen::MatrixXd X, X_new;
  Eigen::VectorXd y, y_new;
  balanced_xy(48, X, y);
  balanced_xy(16, X_new, y_new);

  const double quad = rmse(predict(fit_polypls(X, y, 2, 2), X_new), y_new);
  const double lin = rmse(predict(fit_pls(X, y, 2), X_new), y_new);
  REQUIRE(quad < 0.5 * lin);
}

// ---------------------------------------------------------------------------
// Neural-network inner relation
// ---------------------------------------------------------------------------

TEST_CASE("nn_pack and nn_unpack are inverses") {
  NnInnerNet net;
  net.a = Eigen::VectorXd::LinSpaced(3, -1.0, 1.0);
  net.b = Eigen::VectorXd::LinSpaced(3, 0.1, 0.3);
  net.v = Eigen::VectorXd::LinSpaced(3, -0.2, 0.2);
  net.beta = 0.7;
  net.c = -0.1;
  net.t_scale = 2.5;
  const NnInnerNet back = nn_unpack(nn_pack(net), net.t_scale);
  REQUIRE(back.a.isApprox(net.a));
  REQUIRE(back.b.isApprox(net.b));
  REQUIRE(back.v.isApprox(net.v));
  REQUIRE(back.beta == net.beta);
  REQUIRE(back.c == net.c);
  REQUIRE(back.t_scale == net.t_scale);
  REQUIRE_THROWS_AS(nn_unpack(Eigen::VectorXd::Zero(6), 1.0), std::invalid_argument);
}

TEST_CASE("analytic inner-net gradient matches central differences") {
  detail::Rng rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + int(rng.index(3));
    const int n = 4 + int(rng.index(6));
    NnInnerNet net;
    net.a = random_vector(rng, h);
    net.b = random_vector(rng, h);
    net.v = random_vector(rng, h) * 0.5;
    net.beta = rng.uniform(-1.0, 1.0);
    net.c = rng.uniform(-1.0, 1.0);
    net.t_scale = rng.uniform(0.5, 2.0);
    const Eigen::VectorXd t = random_vector(rng, n);
    const Eigen::VectorXd u = random_vector(rng, n);

    const Eigen::VectorXd g = nn_inner_gradient(net, t, u);
    Eigen::VectorXd theta = nn_pack(net);
    Eigen::VectorXd fd(theta.size());
    auto sse = [&](const Eigen::VectorXd& th) {
      const NnInnerNet m = nn_unpack(th, net.t_scale);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = u(i) - nn_eval(m, t(i));
        acc += e * e;
      }
      return acc;
    };
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double eps = 1e-6 * std::max(1.0, std::abs(theta(j)));
      Eigen::VectorXd hi = theta, lo = theta;
      hi(j) += eps;
      lo(j) -= eps;
      fd(j) = (sse(hi) - sse(lo)) / (2.0 * eps);
    }
    REQUIRE((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("fit_nnpls is deterministic per seed") {
  detail::Rng rng(111);
  const Eigen::MatrixXd X = random_matrix(rng, 20, 4);
  const Eigen::VectorXd y =
      (X.col(0) + X.col(1)).array().square().matrix() + 0.5 * X.col(2);
  const Eigen::MatrixXd X_new = random_matrix(rng, 6, 4);
  NnTrainConfig cfg;
  cfg.epochs = 200;
  const Eigen::VectorXd a = predict(fit_nnpls(X, y, 2, 3, cfg), X_new);
  const Eigen::VectorXd b = predict(fit_nnpls(X, y, 2, 3, cfg), X_new);
  REQUIRE((a.array() == b.array()).all());
  REQUIRE_THROWS_AS(fit_nnpls(X, y, 2, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Truncation, reports, latent-dimension selection
// ---------------------------------------------------------------------------

TEST_CASE("truncated models equal component-override prediction") {
  detail::Rng rng(212);
  const Eigen::MatrixXd X = random_matrix(rng, 12, 5);
  const Eigen::VectorXd y = random_vector(rng, 12);
  const Eigen::MatrixXd X_new = random_matrix(rng, 4, 5);
  const RegressionModel full = fit_pls(X, y, 4);
  for (int k = 1; k <= 4; ++k) {
    const RegressionModel cut = truncate_model(full, k);
    REQUIRE(cut.n_components == k);
    REQUIRE((predict(cut, X_new).array() == predict(full, X_new, k).array()).all());
    // greedy extraction: truncation equals a model fit directly at k
    REQUIRE(predict(cut, X_new).isApprox(predict(fit_pls(X, y, k), X_new), 1e-10));
  }
  REQUIRE_THROWS_AS(truncate_model(full, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(truncate_model(full, 5), std::invalid_argument);
  REQUIRE_THROWS_AS(truncate_model(fit_mlr(X, y), 1), std::invalid_argument);
  REQUIRE_THROWS_AS(predict(full, X_new, 5), std::invalid_argument);
}

TEST_CASE("fit reports track cumulative explained variance") {
  detail::Rng rng(313);
  const Eigen::MatrixXd X = random_matrix(rng, 14, 5);
  const Eigen::VectorXd y = random_vector(rng, 14);
  const Eigen::MatrixXd Xv = random_matrix(rng, 5, 5);
  const Eigen::VectorXd yv = random_vector(rng, 5);
  const RegressionModel m = fit_pls(X, y, 4);
  const FitReport r = make_fit_report(m, X, y, &Xv, &yv);
  REQUIRE(r.validation_rmse.has_value());
  REQUIRE(r.x_explained.size() == 4);
  double x_total = 0.0, y_total = 0.0;
  for (double v : r.x_explained) x_total += v;
  for (double v : r.y_explained) {
    REQUIRE(v >= -1e-9);
    y_total += v;
  }
  REQUIRE(x_total <= 1.0 + 1e-9);
  REQUIRE(y_total <= 1.0 + 1e-9);
  const FitReport mlr_report = make_fit_report(fit_mlr(X, y), X, y);
  REQUIRE(mlr_report.x_explained.empty());
}

TEST_CASE("select_latent_dim prefers the smallest near-optimal dimension") {
  // orthogonal Walsh columns: y depends on exactly one of them, so one
  // component is already exact and parsimony must pick it
  Eigen::MatrixXd X(8, 4);
  for (int i = 0; i < 8; ++i) {
    int cols[4] = {1, 2, 3, 4};
    for (int j = 0; j < 4; ++j)
      X(i, j) = __builtin_parity(unsigned(i) & unsigned(cols[j])) ? -1.0 : 1.0;
  }
  const Eigen::VectorXd y = 2.0 * X.col(2);
  const Eigen::MatrixXd Xv = X.topRows(4);
  const Eigen::VectorXd yv = y.head(4);
  const SelectionResult sel = select_latent_dim(X, y, Xv, yv, Technique::LinearPls, 3);
  REQUIRE(sel.best_n_lv == 1);
  REQUIRE(sel.model.n_components == 1);
  REQUIRE_THAT(*sel.reports[0].validation_rmse, WithinAbs(0.0, 1e-9));
  REQUIRE(int(sel.reports.size()) >= 1);
  for (std::size_t k = 0; k < sel.reports.size(); ++k)
    REQUIRE(sel.reports[k].n_components == int(k) + 1);
}

TEST_CASE("select_latent_dim candidates stop at the extractable rank") {
  detail::Rng rng(414);
  const Eigen::MatrixXd T = random_matrix(rng, 16, 2);
  Eigen::MatrixXd X = T * random_matrix(rng, 2, 6);
  const Eigen::VectorXd y = T.col(0) + 2.0 * T.col(1);
  const Eigen::MatrixXd Xv = X.topRows(6);
  const Eigen::VectorXd yv = y.head(6);
  const SelectionResult sel = select_latent_dim(X, y, Xv, yv, Technique::LinearPls, 6);
  REQUIRE(int(sel.reports.size()) <= 3);
  REQUIRE_THAT(*sel.reports.back().validation_rmse, WithinAbs(0.0, 1e-7));
  REQUIRE_THROWS_AS(
      select_latent_dim(X, y, Eigen::MatrixXd(0, 6), Eigen::VectorXd(0),
                        Technique::LinearPls, 3),
      std::invalid_argument);
}

TEST_CASE("fit_latent dispatches on technique and rejects MLR") {
  detail::Rng rng(515);
  const Eigen::MatrixXd X = random_matrix(rng, 10, 4);
  const Eigen::VectorXd y = random_vector(rng, 10);
  for (Technique t : {Technique::Pcr, Technique::LinearPls, Technique::PolyPls,
                      Technique::NnPls}) {
    const RegressionModel m = fit_latent(t, X, y, 2);
    REQUIRE(m.technique == t);
  }
  REQUIRE_THROWS_AS(fit_latent(Technique::Mlr, X, y, 2), config_error);
}

TEST_CASE("technique names round-trip") {
  for (Technique t : kTechniques) REQUIRE(parse_technique(to_string(t)) == t);
  REQUIRE_THROWS_AS(parse_technique("ridge"), config_error);
}
