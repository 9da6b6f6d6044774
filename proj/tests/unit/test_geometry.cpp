#include <gtest/gtest.h>

#include <cmath>

#include "flowcryst/error.hpp"
#include "flowcryst/geometry.hpp"
#include "support.hpp"

using namespace flowcryst;
using namespace testing_support;

namespace {

TorusCloud cloud1(double x) { return TorusCloud((FracMatrix(1, 3) << x, x, x).finished()); }

}  // namespace

TEST(Torus, ExpWrapsByFloor) {
  EXPECT_NEAR(torus_exp(cloud1(0.9), FracMatrix::Constant(1, 3, 0.2))(0, 0), 0.1, 1e-15);
  EXPECT_EQ(torus_exp(cloud1(0.5), FracMatrix::Zero(1, 3))(0, 0), 0.5);
  // Oracle: (0.25 - 0.5) mod 1.
  EXPECT_NEAR(torus_exp(cloud1(0.25), FracMatrix::Constant(1, 3, -0.5))(0, 0), std::fmod(0.25 - 0.5 + 1.0, 1.0), 1e-15);
}

TEST(Torus, LogPicksShortestSignedDisplacement) {
  // Oracle: argmin over k in {-1,0,1} of |f1 - f0 + k|, keeping the sign.
  auto oracle = [](double f0, double f1) {
    double best = f1 - f0;
    for (int k : {-1, 1}) {
      if (std::abs(f1 - f0 + k) < std::abs(best)) best = f1 - f0 + k;
    }
    return best;
  };
  EXPECT_NEAR(torus_log(cloud1(0.9), cloud1(0.1))(0, 0), oracle(0.9, 0.1), 1e-15);
  EXPECT_NEAR(torus_log(cloud1(0.9), cloud1(0.1))(0, 0), 0.2, 1e-15);
  EXPECT_EQ(torus_log(cloud1(0.3), cloud1(0.3))(0, 0), 0.0);
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_NEAR(torus_log_scalar(a, b), oracle(a, b), 1e-12);
  }
}

TEST(Torus, AntipodalTieResolvesToPlusHalf) {
  EXPECT_EQ(torus_log(cloud1(0.0), cloud1(0.5))(0, 0), 0.5);
  EXPECT_EQ(torus_log(cloud1(0.5), cloud1(0.0))(0, 0), 0.5);
  EXPECT_EQ(torus_log_scalar(0.75, 0.25), 0.5);
}

TEST(Torus, CanonicalizesOnConstruction) {
  const TorusCloud c((FracMatrix(1, 3) << 1.0 - 1e-17, -0.25, 3.5).finished());
  EXPECT_EQ(c(0, 0), 0.0);
  EXPECT_EQ(c(0, 1), 0.75);
  EXPECT_EQ(c(0, 2), 0.5);
  for (int k = 0; k < 3; ++k) {
    EXPECT_GE(c(0, k), 0.0);
    EXPECT_LT(c(0, k), 1.0);
  }
}

TEST(Torus, ShapeMismatchIsDimensionError) {
  Rng rng(1);
  try {
    torus_log(random_cloud(2, rng), random_cloud(3, rng));
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Dimension);
  }
  EXPECT_THROW(torus_exp(random_cloud(2, rng), FracMatrix::Zero(3, 3)), Error);
}

TEST(Torus, InverseRangeAntisymmetryShift) {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + trial % 6;
    const TorusCloud a = random_cloud(n, rng), b = random_cloud(n, rng);
    const TorusTangent v = torus_log(a, b);
    EXPECT_LE(torus_max_distance(torus_exp(a, v), b), 1e-12);
    EXPECT_LE(v.cwiseAbs().maxCoeff(), 0.5);
    EXPECT_LE((v + torus_log(b, a)).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::RowVector3d tau = random_shift(rng);
    EXPECT_LE((torus_log(shifted(a, tau), shifted(b, tau)) - v).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Geodesic, TorusMidpointCrossesTheWrap) {
  const TorusCloud m = torus_geodesic(cloud1(0.9), cloud1(0.1), 0.5);
  EXPECT_LE(circ(m(0, 0), 0.0), 1e-15);
}

TEST(Geodesic, Endpoints) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const TorusCloud a = random_cloud(4, rng), b = random_cloud(4, rng);
    EXPECT_LE(torus_max_distance(torus_geodesic(a, b, 0.0), a), 1e-12);
    EXPECT_LE(torus_max_distance(torus_geodesic(a, b, 1.0), b), 1e-12);
  }
  Eigen::VectorXd e0(1), e1(1);
  e0 << 0.0;
  e1 << 4.0;
  EXPECT_DOUBLE_EQ(euclidean_geodesic(e0, e1, 0.25)[0], 1.0);
}

TEST(Geodesic, TimeOutsideUnitIntervalIsDomainError) {
  Rng rng(3);
  const TorusCloud a = random_cloud(2, rng);
  for (double t : {-0.1, 1.5}) {
    try {
      torus_geodesic(a, a, t);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::Domain);
    }
  }
}

TEST(ProductInner, Examples) {
  const MetricWeights unit{1, 1, 1};
  ProductVector zero{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(6)};
  EXPECT_EQ(product_inner(zero, zero, unit), 0.0);
  ProductVector ones{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(6)};
  EXPECT_DOUBLE_EQ(product_inner(ones, ones, unit), 11.0);
  ProductVector a_only{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  EXPECT_DOUBLE_EQ(product_inner(a_only, a_only, {2, 1, 1}), 2.0);
  ProductVector bad = ones;
  bad.f = Eigen::VectorXd::Ones(4);
  EXPECT_THROW(product_inner(ones, bad, unit), Error);
}
