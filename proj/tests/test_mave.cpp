#include <gtest/gtest.h>

#include <random>

#include "drma/mave.hpp"
#include "drma/simulation.hpp"
#include "oracles.hpp"

using namespace drma;

namespace {

Dataset make_data(Eigen::Index n, Eigen::Index p, std::uint64_t seed, const std::function<double(const VectorXd&)>& f,
                  double noise = 0.0) {
  std::mt19937_64 gen(seed);
  MatrixXd x = oracle::gaussian_matrix(n, p, gen);
  VectorXd e = oracle::gaussian_matrix(n, 1, gen).col(0);
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = f(x.row(i).transpose()) + noise * e(i);
  return Dataset(x, y);
}

} // namespace

TEST(MaveFit, NoiselessQuadraticRecovery) {
  VectorXd beta(3);
  beta << 1.0, 2.0, -1.0;
  beta.normalize();
  auto d = make_data(200, 3, 1, [&](const VectorXd& v) { return std::pow(beta.dot(v), 2); });
  auto fit = mave_fit(d, 1, MaveConfig{});
  EXPECT_LT(largest_principal_angle(fit.directions, beta), 0.05);
  EXPECT_NEAR((fit.directions.transpose() * fit.directions)(0, 0), 1.0, 1e-8);
}

TEST(MaveFit, RssNonIncreasingAndOrthonormal) {
  auto d = make_data(120, 4, 2, [](const VectorXd& v) { return v(0) + 0.5 * v(1) * v(1); }, 0.5);
  for (Eigen::Index k = 1; k <= 3; ++k) {
    auto fit = mave_fit(d, k, MaveConfig{});
    for (std::size_t i = 1; i < fit.rss_history.size(); ++i) EXPECT_LE(fit.rss_history[i], fit.rss_history[i - 1]);
    EXPECT_LT((fit.directions.transpose() * fit.directions - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GE(fit.rss, 0.0);
    for (Eigen::Index c = 0; c < k; ++c) {
      Eigen::Index arg;
      fit.directions.col(c).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(fit.directions(arg, c), 0.0);
    }
  }
}

TEST(MaveFit, FullDimensionAndNesting) {
  auto d = make_data(150, 3, 3, [](const VectorXd& v) { return std::sin(v(0)) + v(1); }, 0.3);
  auto full = mave_fit(d, 3, MaveConfig{});
  EXPECT_LT((full.directions - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
  auto one = mave_fit(d, 1, MaveConfig{});
  EXPECT_LE(full.rss, one.rss);
}

TEST(MaveFit, PureNoiseRss) {
  // single draws spread about 0.87 to 0.96; the average over draws is checked
  double ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = make_data(200, 3, seed, [](const VectorXd&) { return 0.0; }, 1.0);
    auto fit = mave_fit(d, 1, MaveConfig{});
    const double var = (d.y().array() - d.y().mean()).square().mean();
    ratio += fit.rss / 200.0 / var / 10.0;
  }
  EXPECT_NEAR(ratio, 1.0, 0.1);
}

TEST(MaveRss, LeaveOneOutExactOnLinearData) {
  VectorXd beta(3);
  beta << 0.6, -0.8, 0.0;
  auto d = make_data(80, 3, 12, [&](const VectorXd& v) { return 2.0 + beta.dot(v); });
  for (Eigen::Index k : {1, 2}) {
    MatrixXd basis = MatrixXd::Identity(3, k);
    if (k == 1) basis.col(0) = beta;
    EXPECT_LT(mave_cv_rss(d, basis, 0.3), 1e-8) << k;
  }
}

TEST(MaveFit, Validation) {
  auto d = make_data(50, 3, 5, [](const VectorXd& v) { return v(0); });
  EXPECT_THROW(mave_fit(d, 0, MaveConfig{}), error);
  EXPECT_THROW(mave_fit(d, 4, MaveConfig{}), error);
  MaveConfig bad;
  bad.max_outer_iterations = 0;
  EXPECT_THROW(mave_fit(d, 1, bad), error);
  bad = MaveConfig{};
  bad.tolerance = 0.0;
  EXPECT_THROW(mave_fit(d, 1, bad), error);
}

TEST(MaveRss, LinearDataInterpolates) {
  auto d = make_data(100, 3, 6, [](const VectorXd& v) { return v(0) - 2.0 * v(2); });
  auto fit = mave_fit(d, 1, MaveConfig{});
  EXPECT_LT(mave_rss(d, fit, MaveConfig{}), 1e-6 * 100);
  EXPECT_NEAR(mave_rss(d, fit, MaveConfig{}), fit.rss, 1e-9);
}

TEST(MaveRss, LinearInWeights) {
  auto d = make_data(40, 2, 7, [](const VectorXd& v) { return v(0) * v(1); }, 0.2);
  auto fit = mave_fit(d, 1, MaveConfig{});
  MatrixXd w = mave_weights(d, fit.directions, fit.h);
  const double base = mave_weighted_rss(d, fit.directions, fit.local_intercepts, fit.local_slopes, w);
  EXPECT_NEAR(mave_weighted_rss(d, fit.directions, fit.local_intercepts, fit.local_slopes, 2.0 * w), 2.0 * base,
              1e-12 * base);
}

TEST(MaveRss, ThreePointBruteForce) {
  MatrixXd x(3, 2);
  x << 0.0, 0.0, 0.3, 0.1, 0.5, -0.2;
  VectorXd y(3);
  y << 1.0, 0.2, 0.7;
  Dataset d(x, y);
  MatrixXd b(2, 1);
  b << 0.6, 0.8;
  VectorXd a(3);
  a << 0.9, 0.4, 0.5;
  MatrixXd slopes(3, 1);
  slopes << 1.0, -0.5, 2.0;
  const double h = 1.0;
  // normalized 15/16 quartic weights on z = x b
  VectorXd z = x * b;
  double brute = 0.0;
  for (int j = 0; j < 3; ++j) {
    double total = 0.0;
    double w[3];
    for (int i = 0; i < 3; ++i) {
      double u = (z(i) - z(j)) / h;
      w[i] = std::abs(u) < 1 ? 0.9375 * std::pow(1 - u * u, 2) : 0.0;
      total += w[i];
    }
    for (int i = 0; i < 3; ++i) {
      double r = y(i) - a(j) - slopes(j, 0) * (z(i) - z(j));
      brute += w[i] / total * r * r;
    }
  }
  MatrixXd weights = mave_weights(d, b, h);
  EXPECT_NEAR(mave_weighted_rss(d, b, a, slopes, weights), brute, 1e-14);
}

TEST(MaveBic, DirectArithmetic) {
  auto bic = mave_bic({100.0, 99.9, 99.8}, 100, 1.5);
  for (int k = 1; k <= 3; ++k) {
    const double h = 1.5 * std::pow(100.0, -1.0 / (4.0 + k));
    const double rss = 100.0 - 0.1 * (k - 1);
    const double expected = std::log(rss / 100.0) + std::log(100.0) * k / std::min(100.0 * std::pow(h, k), 10.0);
    EXPECT_NEAR(bic.bic[k - 1], expected, 1e-14);
  }
  EXPECT_EQ(smallest_argmin(bic.bic), 1);
  EXPECT_FALSE(bic.clamped);

  auto drop = mave_bic({100.0, 10.0, 9.9}, 100, 1.5);
  EXPECT_GT(smallest_argmin(drop.bic), 1);

  EXPECT_EQ(smallest_argmin({2.0, 2.0, 3.0}), 1);
  EXPECT_EQ(smallest_argmin({3.0, 1.0, 1.0}), 2);
  EXPECT_THROW(smallest_argmin({}), error);

  auto clamped = mave_bic({0.0, 1.0}, 100, 1.5);
  EXPECT_TRUE(clamped.clamped);
  EXPECT_TRUE(std::isfinite(clamped.bic[0]));
}

TEST(MaveEstimate, OneDimensionalInput) {
  auto d = make_data(30, 1, 8, [](const VectorXd& v) { return v(0); }, 0.1);
  auto est = mave_estimate(d, MaveConfig{});
  EXPECT_EQ(est.q_hat, 1);
  EXPECT_EQ(est.directions.rows(), 1);
}

TEST(MaveEstimate, SingleIndexAndReproducible) {
  VectorXd beta(4);
  beta << 1, 1, 0, 0;
  beta.normalize();
  auto d = make_data(150, 4, 9, [&](const VectorXd& v) { return beta.dot(v); }, 0.5);
  auto a = mave_estimate(d, MaveConfig{});
  auto b = mave_estimate(d, MaveConfig{});
  EXPECT_EQ(a.q_hat, 1);
  EXPECT_LT(largest_principal_angle(a.directions, beta), 0.3);
  EXPECT_EQ(a.directions, b.directions);
  EXPECT_EQ(a.criterion_values, b.criterion_values);
  EXPECT_EQ(a.method, "MAVE");
}

TEST(MaveSelect, TwoIndexSignal) {
  auto d = make_data(200, 4, 10, [](const VectorXd& v) { return v(0) + 2.0 * v(3) * v(3); }, 0.3);
  auto sel = mave_select_q(d, MaveConfig{});
  EXPECT_EQ(sel.q_hat, 2);
  EXPECT_EQ(sel.fits.size(), 4u);
  EXPECT_EQ(sel.bic.size(), 4u);
}

TEST(Opg, RecoversSingleIndex) {
  VectorXd beta(3);
  beta << 0.0, 1.0, 1.0;
  beta.normalize();
  auto d = make_data(200, 3, 11, [&](const VectorXd& v) { return std::tanh(beta.dot(v)); }, 0.1);
  MatrixXd opg = opg_directions(d, MaveConfig{});
  EXPECT_LT(largest_principal_angle(opg.leftCols(1), beta), 0.2);
}

TEST(MaveSelect, Study3AlternativeMajorityTwo) {
  StudySpec spec;
  spec.study = Study::study3;
  spec.a = 1.0;
  int two = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    auto g = generate(spec, derive_seed(5, static_cast<std::uint64_t>(rep), stream_tag::data));
    auto [z, rec] = standardize_columns(g.data);
    two += mave_estimate(z, MaveConfig{}).q_hat == 2;
  }
  std::printf("q_hat = 2 in %d of %d replicates\n", two, reps);
  EXPECT_GT(two, reps / 2);
}
