#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "flowcryst/basedist.hpp"
#include "flowcryst/crystal.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/error.hpp"
#include "flowcryst/geometry.hpp"

namespace testing_support {

using flowcryst::FracMatrix;
using flowcryst::Rng;
using flowcryst::TorusCloud;

inline FracMatrix random_frac(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FracMatrix f(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) f(i, k) = u(rng);
  return f;
}

inline TorusCloud random_cloud(int n, Rng& rng) { return TorusCloud(random_frac(n, rng)); }

inline Eigen::RowVector3d random_shift(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

inline TorusCloud shifted(const TorusCloud& c, const Eigen::RowVector3d& tau) {
  FracMatrix f = c.coords();
  f.rowwise() += tau;
  return TorusCloud(std::move(f));
}

inline std::vector<int> random_order(int n, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Reduced lattice drawn until it passes validation.
inline flowcryst::LatticeParams random_lattice(Rng& rng) {
  std::uniform_real_distribution<double> len(2.0, 12.0), ang(62.0, 118.0);
  for (;;) {
    const flowcryst::LatticeParams l{len(rng), len(rng), len(rng), ang(rng), ang(rng), ang(rng)};
    if (flowcryst::lattice_is_valid(l)) return l;
  }
}

inline flowcryst::LengthPrior test_prior(double length = 5.0, double scale = 0.2) {
  flowcryst::LengthPrior p;
  p.loc.setConstant(std::log(length));
  p.scale.setConstant(scale);
  return p;
}

/// Smallest circular distance between two fractional values.
inline double circ(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

/// State whose atom i is atom order[i] of `s`.
inline flowcryst::FlowState permuted(const flowcryst::FlowState& s, const std::vector<int>& order) {
  flowcryst::FlowState p = s;
  FracMatrix f(s.num_atoms(), 3);
  for (int i = 0; i < s.num_atoms(); ++i) {
    const int j = order[static_cast<std::size_t>(i)];
    f.row(i) = s.frac.coords().row(j);
    if (!s.kinds.empty()) p.kinds[static_cast<std::size_t>(i)] = s.kinds[static_cast<std::size_t>(j)];
    if (s.bits.rows() > 0) p.bits.row(i) = s.bits.row(j);
  }
  p.frac = TorusCloud(std::move(f));
  return p;
}

inline flowcryst::FlowState translated(const flowcryst::FlowState& s, const Eigen::RowVector3d& tau) {
  flowcryst::FlowState p = s;
  p.frac = shifted(s.frac, tau);
  return p;
}

/// Base draw with random species for CSP.
inline flowcryst::FlowState random_state(int n, flowcryst::Mode mode, Rng& rng) {
  std::uniform_int_distribution<int> kind(0, flowcryst::kNumClasses - 1);
  std::vector<int> kinds;
  if (mode == flowcryst::Mode::CSP)
    for (int i = 0; i < n; ++i) kinds.push_back(kind(rng));
  return flowcryst::base_state(kinds, n, mode, test_prior(), rng);
}

}  // namespace testing_support

/// Asserts that `stmt` throws flowcryst::Error with the given code.
#define EXPECT_ERROR_CODE(stmt, expected)                        \
  do {                                                          \
    try {                                                       \
      stmt;                                                     \
      ADD_FAILURE() << "no exception from " #stmt;              \
    } catch (const flowcryst::Error& e) {                       \
      EXPECT_EQ(e.code(), flowcryst::ErrorCode::expected) << e.what(); \
    }                                                           \
  } while (0)
