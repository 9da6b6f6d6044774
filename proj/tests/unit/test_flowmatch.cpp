#include <gtest/gtest.h>

#include <cmath>

#include "flowcryst/crystal.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/error.hpp"
#include "flowcryst/flowmatch.hpp"
#include "support.hpp"

using namespace flowcryst;
using namespace testing_support;

TEST(EuclideanField, Examples) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1), one = Eigen::VectorXd::Ones(1);
  EXPECT_DOUBLE_EQ(cond_vf_euclidean(zero, one, 0.0)[0], 1.0);
  EXPECT_DOUBLE_EQ(cond_vf_euclidean(zero, one, 0.5)[0], 2.0);
  EXPECT_EQ(cond_vf_euclidean(one, one, 0.9)[0], 0.0);
  try {
    cond_vf_euclidean(zero, one, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScheduleDomain);
  }
}

TEST(MeanFreeField, SingleAtomIsZero) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(cond_vf_torus_meanfree(random_cloud(1, rng), random_cloud(1, rng)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(MeanFreeField, AlreadyMeanFreeIsUnchanged) {
  const TorusCloud f0((FracMatrix(2, 3) << 0.1, 0.5, 0.5, 0.6, 0.5, 0.5).finished());
  const TorusCloud f1((FracMatrix(2, 3) << 0.3, 0.5, 0.5, 0.4, 0.5, 0.5).finished());
  const TorusTangent v = cond_vf_torus_meanfree(f0, f1);
  EXPECT_NEAR(v(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(v(1, 0), -0.2, 1e-15);
}

TEST(MeanFreeField, ZeroMeanAndTranslationInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 9;
    const TorusCloud f0 = random_cloud(n, rng), f1 = random_cloud(n, rng);
    const TorusTangent v = cond_vf_torus_meanfree(f0, f1);
    EXPECT_LE(v.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::RowVector3d tau = random_shift(rng);
    EXPECT_LE((cond_vf_torus_meanfree(shifted(f0, tau), shifted(f1, tau)) - v).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(cond_vf_torus_meanfree(random_cloud(2, rng), random_cloud(3, rng)), Error);
}

TEST(ConditionalPath, EndpointsAndGeodesicPoint) {
  Rng rng(3);
  const LengthPrior prior = test_prior();
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const FlowState c0 = base_state({}, n, Mode::DNG, prior, rng);
    const FlowState c1 = base_state({}, n, Mode::DNG, prior, rng);
    const PathSample at0 = sample_conditional_path(c0, c1, 0.0);
    EXPECT_EQ(at0.c_t.frac.coords(), c0.frac.coords());
    EXPECT_EQ(at0.c_t.lattice, c0.lattice);
    EXPECT_EQ(at0.c_t.bits, c0.bits);

    const double t = sample_time(rng);
    const PathSample s = sample_conditional_path(c0, c1, t);
    EXPECT_LE(torus_max_distance(s.c_t.frac, torus_exp(c0.frac, t * torus_log(c0.frac, c1.frac))), 1e-12);
    EXPECT_LE((s.c_t.lattice - ((1 - t) * c0.lattice + t * c1.lattice)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(s.target.df.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);

    // One unit of the constant target from c0 reaches c1 up to a global translation.
    const TorusCloud end = torus_exp(c0.frac, s.target.df);
    const TorusTangent gap = torus_log(c1.frac, end);
    EXPECT_LE((gap.rowwise() - gap.row(0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((c0.lattice + s.target.dl - c1.lattice).cwiseAbs().maxCoeff(), 1e-12);
  }
  const FlowState a = base_state({}, 2, Mode::DNG, prior, rng);
  EXPECT_THROW(sample_conditional_path(a, a, 1.0), Error);
}

TEST(ConditionalPath, TargetMatchesDerivativeOfThePath) {
  // Central difference of the geodesic point in t reproduces the (non mean-free)
  // torus velocity and the Euclidean velocity.
  Rng rng(4);
  const LengthPrior prior = test_prior();
  for (int trial = 0; trial < 50; ++trial) {
    const FlowState c0 = base_state({0, 1, 2}, 3, Mode::CSP, prior, rng);
    const FlowState c1 = base_state({0, 1, 2}, 3, Mode::CSP, prior, rng);
    const double t = 0.3, h = 1e-6;
    const PathSample up = sample_conditional_path(c0, c1, t + h);
    const PathSample dn = sample_conditional_path(c0, c1, t - h);
    const TorusTangent dfdt = torus_log(dn.c_t.frac, up.c_t.frac) / (2 * h);
    const PathSample mid = sample_conditional_path(c0, c1, t);
    const TorusTangent centered = dfdt.rowwise() - dfdt.colwise().mean();
    EXPECT_LE((centered - mid.target.df).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(((up.c_t.lattice - dn.c_t.lattice) / (2 * h) - mid.target.dl).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(ConditionalPath, PairwiseSymmetry) {
  Rng rng(5);
  const LengthPrior prior = test_prior();
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 4;
    const FlowState c0 = base_state({0, 1, 2, 3}, n, Mode::CSP, prior, rng);
    const FlowState c1 = base_state({0, 1, 2, 3}, n, Mode::CSP, prior, rng);
    const double t = 0.4;
    const PathSample s = sample_conditional_path(c0, c1, t);

    const std::vector<int> order = random_order(n, rng);
    FlowState p0 = c0, p1 = c1;
    FracMatrix g0(n, 3), g1(n, 3);
    for (int i = 0; i < n; ++i) {
      g0.row(i) = c0.frac.coords().row(order[static_cast<std::size_t>(i)]);
      g1.row(i) = c1.frac.coords().row(order[static_cast<std::size_t>(i)]);
    }
    p0.frac = TorusCloud(g0);
    p1.frac = TorusCloud(g1);
    const PathSample ps = sample_conditional_path(p0, p1, t);
    for (int i = 0; i < n; ++i) {
      EXPECT_LE((ps.target.df.row(i) - s.target.df.row(order[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-15);
    }

    const Eigen::RowVector3d tau = random_shift(rng);
    FlowState t0 = c0, t1 = c1;
    t0.frac = shifted(c0.frac, tau);
    t1.frac = shifted(c1.frac, tau);
    EXPECT_LE((sample_conditional_path(t0, t1, t).target.df - s.target.df).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FmLoss, ZeroAtTargetAndScaleFree) {
  Rng rng(6);
  const LengthPrior prior = test_prior();
  const FlowState c0 = base_state({}, 3, Mode::DNG, prior, rng);
  const FlowState c1 = base_state({}, 3, Mode::DNG, prior, rng);
  const PathSample s = sample_conditional_path(c0, c1, 0.5);
  const LossWeights w{300, 600, 1, 20};
  EXPECT_EQ(fm_loss(s.target, s.target, w, Mode::DNG), 0.0);

  TangentState pred = s.target;
  pred.df.array() += 0.1;
  pred.da.array() -= 0.2;
  pred.dl.array() += 0.3;
  const double base = fm_loss(pred, s.target, w, Mode::DNG);
  EXPECT_GT(base, 0.0);
  const LossWeights doubled{600, 1200, 2, 40};
  EXPECT_NEAR(fm_loss(pred, s.target, doubled, Mode::DNG), base, 1e-15);

  // Oracle: weights divided by their sum, squared errors divided by dimension.
  const double sum = 300 + 600 + 1 + 20;
  const double expect = 300 / sum / (7 * 3) * (0.04 * 21) + 600 / sum / (3 * 3) * (0.01 * 9) + 1 / sum / 6 * (0.09 * 6);
  EXPECT_NEAR(base, expect, 1e-14);
}

TEST(FmLoss, PermutationInvariantAndModeContract) {
  Rng rng(7);
  const LengthPrior prior = test_prior();
  const FlowState c0 = base_state({1, 2, 3}, 3, Mode::CSP, prior, rng);
  const FlowState c1 = base_state({1, 2, 3}, 3, Mode::CSP, prior, rng);
  const PathSample s = sample_conditional_path(c0, c1, 0.2);
  TangentState pred = TangentState::zeros(3, Mode::CSP);
  pred.df = random_frac(3, rng);
  const LossWeights w{0, 1500, 1, 0};
  const double base = fm_loss(pred, s.target, w, Mode::CSP);
  TangentState pp = pred, pt = s.target;
  pp.df.row(0).swap(pp.df.row(2));
  pt.df.row(0).swap(pt.df.row(2));
  EXPECT_NEAR(fm_loss(pp, pt, w, Mode::CSP), base, 1e-15);

  try {
    fm_loss(pred, s.target, LossWeights{1, 1, 1, 0}, Mode::CSP);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Configuration);
  }
  pred.df(0, 0) = std::nan("");
  try {
    fm_loss(pred, s.target, w, Mode::CSP);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Numeric);
  }
}

TEST(SceLoss, Examples) {
  BitsMatrix a1 = encode_atoms({5});
  // a_t and pred chosen so the predicted endpoint is orthogonal to a1.
  BitsMatrix zero = BitsMatrix::Zero(1, kBits);
  EXPECT_NEAR(sce_loss(a1, zero, zero, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(sce_loss(a1, zero, 1e3 * a1, 0.0), 0.0, 1e-300);

  Rng rng(8);
  const LengthPrior prior = test_prior();
  const FlowState c0 = base_state({}, 1, Mode::DNG, prior, rng);
  const BitsMatrix pred = a1 - c0.bits;
  // Endpoint equals a1 and a1 . a1 = 7.
  EXPECT_NEAR(sce_loss(a1, pred, c0.bits, 0.0), std::log1p(std::exp(-7.0)), 1e-14);
}

TEST(SceLoss, GradientMatchesFiniteDifference) {
  Rng rng(9);
  const LengthPrior prior = test_prior();
  const FlowState c0 = base_state({}, 3, Mode::DNG, prior, rng);
  const BitsMatrix a1 = encode_atoms({3, 50, 99});
  BitsMatrix pred = BitsMatrix::Random(3, kBits);
  BitsMatrix grad;
  sce_loss(a1, pred, c0.bits, 0.3, &grad);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < kBits; ++j) {
      BitsMatrix up = pred, dn = pred;
      up(i, j) += 1e-6;
      dn(i, j) -= 1e-6;
      const double fd = (sce_loss(a1, up, c0.bits, 0.3) - sce_loss(a1, dn, c0.bits, 0.3)) / 2e-6;
      EXPECT_NEAR(grad(i, j), fd, 1e-7);
    }
  }
}
