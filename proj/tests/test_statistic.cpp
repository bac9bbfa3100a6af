#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "drma/statistic.hpp"
#include "oracles.hpp"

using namespace drma;

namespace {

// composite Simpson on [a, b] with an even number of panels
template <class F>
double simpson(F f, double a, double b, int panels) {
  const double step = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * step);
  return s * step / 3.0;
}

MatrixXd column(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

} // namespace

TEST(Kernel, Examples) {
  KernelSpec k(1);
  EXPECT_DOUBLE_EQ(k(0.0), 0.9375);
  EXPECT_DOUBLE_EQ(k(0.5), 0.52734375);
  EXPECT_DOUBLE_EQ(k(1.0), 0.0);
  EXPECT_DOUBLE_EQ(k(-1.5), 0.0);
  EXPECT_DOUBLE_EQ(kernel_eval(k, VectorXd::Constant(1, 0.5)), 0.52734375);
}

TEST(Kernel, ArityMismatch) {
  KernelSpec k(2);
  EXPECT_THROW(k(VectorXd::Zero(3)), error);
  EXPECT_THROW(k(0.1), error);
  EXPECT_THROW(KernelSpec(0), error);
}

TEST(Kernel, ConstantsMatchClosedForm) {
  for (int q = 1; q <= 8; ++q)
    EXPECT_NEAR(KernelSpec(q).normalizing_constant(), oracle::quartic_constant(q), 1e-12 * oracle::quartic_constant(q));
  EXPECT_NEAR(KernelSpec(2).normalizing_constant(), 3.0 / std::numbers::pi, 1e-14);
}

TEST(Kernel, IntegratesToOne) {
  const double area[] = {0.0, 2.0, 2.0 * std::numbers::pi, 4.0 * std::numbers::pi};
  EXPECT_NEAR(simpson([](double u) { return KernelSpec(1)(u); }, -1.0, 1.0, 2000), 1.0, 1e-6);
  for (int q = 2; q <= 3; ++q) {
    KernelSpec k(q);
    // radial shells: surface measure of the unit sphere times r^{q-1}
    double radial = simpson([&](double r) { return std::pow(r, q - 1) * k.from_squared_norm(r * r); }, 0.0, 1.0, 2000);
    EXPECT_NEAR(area[q] * radial, 1.0, 1e-6);
  }
  // a direct Cartesian midpoint sum in the plane
  KernelSpec k2(2);
  const int m = 800;
  double total = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Eigen::Vector2d u(-1.0 + (i + 0.5) * 2.0 / m, -1.0 + (j + 0.5) * 2.0 / m);
      total += k2(u);
    }
  EXPECT_NEAR(total * 4.0 / (m * m), 1.0, 1e-4);
}

TEST(Kernel, NonNegativeSymmetricCompact) {
  std::mt19937_64 gen(1);
  for (int q = 1; q <= 4; ++q) {
    KernelSpec k(q);
    for (int rep = 0; rep < 200; ++rep) {
      VectorXd u = 0.8 * oracle::gaussian_matrix(q, 1, gen).col(0);
      EXPECT_GE(k(u), 0.0);
      EXPECT_EQ(k(u), k(VectorXd(-u)));
      if (u.norm() >= 1.0) {
        EXPECT_EQ(k(u), 0.0);
      }
    }
  }
}

TEST(Bandwidth, Rule) {
  EXPECT_NEAR(bandwidth_rule(100, 1), 0.5971608, 1e-7);
  EXPECT_DOUBLE_EQ(bandwidth_rule(100, 8), 1.5 * std::pow(100.0, -1.0 / 12.0));
  EXPECT_DOUBLE_EQ(bandwidth_rule(100, 1, 2.0), 2.0 * std::pow(100.0, -0.2));
  EXPECT_THROW(bandwidth_rule(100, 1, 0.0), error);
  EXPECT_THROW(bandwidth_rule(1, 1), error);
  EXPECT_THROW(bandwidth_rule(10, 0), error);
}

TEST(Statistic, TwoPointHandValues) {
  VectorXd e(2);
  e << 1, 2;
  MatrixXd z = column({0.3, 0.3});
  KernelSpec k(1);
  EXPECT_DOUBLE_EQ(v_n_statistic(e, z, 1.0, k), 1.875);
  EXPECT_DOUBLE_EQ(var_hat_statistic(e, z, 1.0, k), 7.03125);
  auto r = t_n_statistic(e, z, 1.0, k);
  EXPECT_DOUBLE_EQ(r.t_n, 1.0);
  EXPECT_DOUBLE_EQ(r.t_n_squared, 1.0);
  EXPECT_FALSE(r.degenerate);
}

TEST(Statistic, ZeroResidualsDegenerate) {
  MatrixXd z = column({0.0, 0.1, 0.2, 0.3});
  VectorXd e = VectorXd::Zero(4);
  KernelSpec k(1);
  EXPECT_EQ(v_n_statistic(e, z, 1.0, k), 0.0);
  EXPECT_EQ(var_hat_statistic(e, z, 1.0, k), 0.0);
  auto r = t_n_statistic(e, z, 1.0, k);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.t_n, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  auto zr = zheng_statistic(e, z);
  EXPECT_TRUE(zr.degenerate);
  EXPECT_EQ(zr.p_value, 1.0);
}

TEST(Statistic, BruteForceOracle) {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<int> nd(2, 30), qd(1, 4);
  std::uniform_real_distribution<double> hd(0.4, 2.5);
  int compared = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n = nd(gen), q = qd(gen);
    const double h = hd(gen);
    VectorXd e = oracle::gaussian_matrix(n, 1, gen).col(0);
    MatrixXd z = oracle::gaussian_matrix(n, q, gen);
    auto brute = oracle::brute_statistics(e, z, h);
    KernelSpec k(q);
    const double vn = v_n_statistic(e, z, h, k);
    const double var = var_hat_statistic(e, z, h, k);
    EXPECT_NEAR(vn, brute.v_n, 1e-12 * std::max(1.0, std::abs(brute.v_n)));
    EXPECT_NEAR(var, brute.var_hat, 1e-12 * std::max(1.0, brute.var_hat));
    if (brute.var_hat > 0.0) {
      ++compared;
      auto r = t_n_statistic(e, z, h, k);
      EXPECT_NEAR(r.t_n, brute.t_n, 1e-12 * std::max(1.0, std::abs(brute.t_n)));
      const double nn = n;
      const double via_vn = std::sqrt((nn - 1.0) / nn) * nn * std::sqrt(h) * vn / std::sqrt(var);
      if (q == 1) EXPECT_NEAR(r.t_n, via_vn, 1e-10 * std::max(1.0, std::abs(r.t_n)));
      EXPECT_NEAR(r.t_n_squared, r.t_n * r.t_n, 1e-12 * std::max(1.0, r.t_n_squared));
      EXPECT_NEAR(r.p_value, std::erfc(std::abs(r.t_n) / std::sqrt(2.0)), 1e-10);
    }
  }
  EXPECT_GT(compared, 100);
}

TEST(Statistic, ZhengOracle) {
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 20; ++rep) {
    VectorXd e = oracle::gaussian_matrix(15, 1, gen).col(0);
    MatrixXd x = oracle::gaussian_matrix(15, 2, gen);
    const double h = 1.5 * std::pow(15.0, -1.0 / 6.0);
    auto brute = oracle::brute_statistics(e, x, h);
    auto r = zheng_statistic(e, x);
    EXPECT_DOUBLE_EQ(r.h, h);
    EXPECT_NEAR(r.v_n, brute.v_n, 1e-12 * std::max(1.0, std::abs(brute.v_n)));
    EXPECT_NEAR(r.var_hat, brute.var_hat, 1e-12 * std::max(1.0, brute.var_hat));
    if (brute.var_hat > 0.0) EXPECT_NEAR(r.t_n, brute.t_n, 1e-12 * std::max(1.0, std::abs(brute.t_n)));
  }
  // p = 1: identical to the index statistic with B = 1
  VectorXd e = oracle::gaussian_matrix(20, 1, gen).col(0);
  MatrixXd x = oracle::gaussian_matrix(20, 1, gen);
  auto a = zheng_statistic(e, x, 0.7);
  auto b = t_n_statistic(e, x, 0.7, KernelSpec(1));
  EXPECT_EQ(a.t_n, b.t_n);
  EXPECT_EQ(a.v_n, b.v_n);
}

TEST(Statistic, Invariances) {
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 25, p = 4, q = 1 + rep % 3;
    VectorXd e = oracle::gaussian_matrix(n, 1, gen).col(0);
    MatrixXd x = oracle::gaussian_matrix(n, p, gen);
    MatrixXd b = oracle::random_orthogonal(p, gen).leftCols(q);
    const double h = 1.2;
    KernelSpec k(q);
    auto base = t_n_statistic(e, x * b, h, k);

    // permutation of the sample
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    VectorXd ep(n);
    MatrixXd xp(n, p);
    for (int i = 0; i < n; ++i) {
      ep(i) = e(perm[i]);
      xp.row(i) = x.row(perm[i]);
    }
    auto permuted = t_n_statistic(ep, xp * b, h, k);
    EXPECT_NEAR(permuted.v_n, base.v_n, 1e-12);
    EXPECT_NEAR(permuted.var_hat, base.var_hat, 1e-12);
    EXPECT_NEAR(permuted.t_n, base.t_n, 1e-12);

    // residual sign flip
    auto flipped = t_n_statistic(-e, x * b, h, k);
    EXPECT_NEAR(flipped.t_n, base.t_n, 1e-12);
    EXPECT_NEAR(flipped.var_hat, base.var_hat, 1e-12);

    // B -> B C for orthogonal C (C = -1 when q = 1)
    MatrixXd c = q == 1 ? MatrixXd::Constant(1, 1, -1.0) : oracle::random_orthogonal(q, gen);
    auto rotated = t_n_statistic(e, x * b * c, h, k);
    EXPECT_NEAR(rotated.t_n, base.t_n, 1e-10);
    EXPECT_NEAR(rotated.v_n, base.v_n, 1e-10);
  }
}

TEST(Statistic, InputValidation) {
  KernelSpec k(1);
  EXPECT_THROW(t_n_statistic(VectorXd::Ones(3), MatrixXd::Zero(2, 1), 1.0, k), error);
  EXPECT_THROW(t_n_statistic(VectorXd::Ones(3), MatrixXd::Zero(3, 2), 1.0, k), error);
  EXPECT_THROW(t_n_statistic(VectorXd::Ones(3), MatrixXd::Zero(3, 1), 0.0, k), error);
  EXPECT_THROW(t_n_statistic(VectorXd::Ones(1), MatrixXd::Zero(1, 1), 1.0, k), error);
}

TEST(ChiSquare, TailAndQuantile) {
  EXPECT_NEAR(chi2_1_upper_tail(3.8415), 0.05, 1e-5);
  EXPECT_NEAR(chi2_1_quantile_upper(0.05), 3.841458820694124, 1e-10);
  EXPECT_NEAR(chi2_1_upper_tail(chi2_1_quantile_upper(0.01)), 0.01, 1e-12);
  EXPECT_EQ(chi2_1_upper_tail(0.0), 1.0);
  EXPECT_EQ(chi2_1_quantile_upper(1.0), 0.0);
  EXPECT_THROW(chi2_1_quantile_upper(0.0), error);
}

TEST(SizeAdjust, Divisor) {
  EXPECT_NEAR(2.0 / mave_size_adjust(2.0, 100), 1.100475, 1e-6);
  EXPECT_EQ(mave_size_adjust(0.0, 100), 0.0);
  EXPECT_NEAR(mave_size_adjust(3.0, 100000000), 3.0, 1e-5);
  EXPECT_THROW(mave_size_adjust(1.0, 0), error);

  TestResult r;
  r.t_n = 2.5;
  r.n = 100;
  auto adj = size_adjusted(r);
  EXPECT_TRUE(adj.size_adjusted);
  EXPECT_EQ(adj.t_n_unadjusted, 2.5);
  EXPECT_NEAR(adj.t_n, 2.5 / 1.100475, 1e-5);
  EXPECT_NEAR(adj.p_value, chi2_1_upper_tail(adj.t_n * adj.t_n), 1e-15);
}

TEST(Smoother, HandInstance) {
  VectorXd e(3), z(3);
  e << 1, 2, 3;
  z << 0, 0.5, 2;
  auto s = nw_residual_smoother(e, z, 1.0);
  EXPECT_DOUBLE_EQ(s.conditional_mean(0), 2.0);
  EXPECT_DOUBLE_EQ(s.conditional_mean(1), 1.0);
  EXPECT_FALSE(s.defined[2]);
  EXPECT_TRUE(std::isnan(s.conditional_mean(2)));
  EXPECT_DOUBLE_EQ(s.density(0), 0.52734375 / 2.0);
}

TEST(Smoother, ConstantResidualsAndOracle) {
  std::mt19937_64 gen(12);
  VectorXd z = oracle::gaussian_matrix(30, 1, gen).col(0);
  auto c = nw_residual_smoother(VectorXd::Constant(30, 0.7), z, 0.5);
  for (Eigen::Index i = 0; i < 30; ++i)
    if (c.defined[static_cast<std::size_t>(i)]) EXPECT_NEAR(c.conditional_mean(i), 0.7, 1e-14);
  VectorXd e = oracle::gaussian_matrix(30, 1, gen).col(0);
  auto s = nw_residual_smoother(e, z, 0.8);
  for (Eigen::Index i = 0; i < 30; ++i)
    if (s.defined[static_cast<std::size_t>(i)])
      EXPECT_NEAR(s.conditional_mean(i), oracle::brute_loo_mean(e, z, i, 0.8), 1e-12);
}
