#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "flowcryst/basedist.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/error.hpp"
#include "support.hpp"

using namespace flowcryst;
using namespace testing_support;

TEST(LengthPriorFit, ConstantDataFloorsScale) {
  const double e = std::exp(1.0);
  const LengthPrior p = fit_length_prior({{e, e, e}, {e, e, e}, {e, e, e}});
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(p.loc[k], 1.0, 1e-15);
    EXPECT_EQ(p.scale[k], kScaleFloor);
  }
}

TEST(LengthPriorFit, PopulationStd) {
  const double e2 = std::exp(2.0);
  const LengthPrior p = fit_length_prior({{1.0, 1.0, 1.0}, {e2, e2, e2}});
  EXPECT_NEAR(p.loc[0], 1.0, 1e-15);
  EXPECT_NEAR(p.scale[0], 1.0, 1e-15);
}

TEST(LengthPriorFit, ClosedFormAndLikelihoodOptimality) {
  Rng rng(31);
  std::lognormal_distribution<double> draw(1.4, 0.15);
  std::vector<Eigen::Vector3d> data;
  for (int i = 0; i < 500; ++i) data.emplace_back(draw(rng), draw(rng), draw(rng));
  const LengthPrior p = fit_length_prior(data);
  for (int k = 0; k < 3; ++k) {
    double mean = 0.0, sq = 0.0;
    for (const auto& v : data) mean += std::log(v[k]);
    mean /= static_cast<double>(data.size());
    for (const auto& v : data) sq += std::pow(std::log(v[k]) - mean, 2);
    EXPECT_NEAR(p.loc[k], mean, 1e-12);
    EXPECT_NEAR(p.scale[k], std::sqrt(sq / static_cast<double>(data.size())), 1e-12);
  }
  const double best = length_log_likelihood(p, data);
  for (double f : {0.9, 1.1}) {
    LengthPrior q = p;
    q.loc *= f;
    EXPECT_LT(length_log_likelihood(q, data), best);
    q = p;
    q.scale *= f;
    EXPECT_LT(length_log_likelihood(q, data), best);
  }
}

TEST(LengthPriorFit, Errors) {
  try {
    fit_length_prior({{1, 1, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
  try {
    fit_length_prior({{1, 1, 1}, {1, 0, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Data);
  }
}

TEST(SampleBase, LogLengthMeanAndUniformity) {
  Rng rng(77);
  LengthPrior prior = test_prior(4.0, 0.3);
  const int draws = 100000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::vector<int> bins(10, 0);
  for (int i = 0; i < draws; ++i) {
    const BaseSample s = sample_base(1, Mode::CSP, prior, rng);
    EXPECT_FALSE(s.a0.has_value());
    for (int k = 0; k < 3; ++k) sum[k] += std::log(s.l0[k]);
    ++bins[static_cast<std::size_t>(s.f0(0, 0) * 10)];
  }
  const double se = 0.3 / std::sqrt(static_cast<double>(draws));
  for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(sum[k] / draws - prior.loc[k]), 3 * se);
  double chi2 = 0.0;
  for (int b : bins) chi2 += std::pow(b - draws / 10.0, 2) / (draws / 10.0);
  // Upper 1e-3 quantile of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 27.877);
}

TEST(SampleBase, ModeContractAndDomain) {
  Rng rng(1);
  const BaseSample dng = sample_base(3, Mode::DNG, test_prior(), rng);
  ASSERT_TRUE(dng.a0.has_value());
  EXPECT_EQ(dng.a0->rows(), 3);
  for (int k = 3; k < 6; ++k) EXPECT_TRUE(std::isfinite(dng.l0[k]));
  try {
    sample_base(0, Mode::CSP, test_prior(), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Domain);
  }
}

TEST(AtomCounts, PointMassAndFrequencies) {
  Rng rng(2);
  const AtomCountTable point = count_atoms({4, 4, 4});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_num_atoms(point, rng), 4);

  AtomCountTable t;
  t.counts = {{2, 1.0}, {4, 3.0}};
  AtomCountTable scaled;
  scaled.counts = {{2, 7.0}, {4, 21.0}};
  Rng r1(9), r2(9);
  int fours = 0;
  for (int i = 0; i < 100000; ++i) {
    const int n = sample_num_atoms(t, r1);
    fours += n == 4;
    EXPECT_EQ(n, sample_num_atoms(scaled, r2));
  }
  EXPECT_NEAR(fours / 100000.0, 0.75, 0.01);

  try {
    sample_num_atoms(AtomCountTable{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(BaseDensity, AngleMarginalIsNormalizedAndSymmetric) {
  // Trapezoid quadrature of exp(log p(y)) over a wide grid.
  double integral = 0.0;
  const double lo = -40.0, hi = 40.0;
  const int n = 80000;
  const double h = (hi - lo) / n;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    integral += w * std::exp(angle_base_log_density(lo + i * h));
  }
  EXPECT_NEAR(integral * h, 1.0, 0.01);
  for (double y : {0.3, 1.7, 5.0}) EXPECT_DOUBLE_EQ(angle_base_log_density(y), angle_base_log_density(-y));
}

TEST(BaseDensity, TranslationAndPermutationInvariant) {
  Rng rng(3);
  const LengthPrior prior = test_prior();
  for (int i = 0; i < 200; ++i) {
    const FlowState s = base_state({}, 4, Mode::DNG, prior, rng);
    const double d0 = base_log_density(s, prior);
    FlowState t = s;
    t.frac = shifted(s.frac, random_shift(rng));
    EXPECT_EQ(base_log_density(t, prior), d0);

    const std::vector<int> order = random_order(4, rng);
    FlowState p = s;
    FracMatrix f(4, 3);
    for (int r = 0; r < 4; ++r) {
      f.row(r) = s.frac.coords().row(order[static_cast<std::size_t>(r)]);
      p.bits.row(r) = s.bits.row(order[static_cast<std::size_t>(r)]);
    }
    p.frac = TorusCloud(f);
    EXPECT_NEAR(base_log_density(p, prior), d0, 1e-12);
  }
}

TEST(BaseDensity, UniformTorusContributesZero) {
  Rng rng(4);
  const LengthPrior prior = test_prior();
  FlowState one = base_state({0}, 1, Mode::CSP, prior, rng);
  FlowState many = one;
  many.kinds = {0, 0, 0};
  many.frac = random_cloud(3, rng);
  EXPECT_DOUBLE_EQ(base_log_density(one, prior), base_log_density(many, prior));
}
