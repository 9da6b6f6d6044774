#include "flowcryst/crystal.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Slack for angles that come out of acos a hair beyond the reduced range.
constexpr double kNiggliSlack = 1e-6;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double angle_between(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  double c = u.dot(v) / (u.norm() * v.norm());
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c) / kDeg;
}

// Squared z-extent of the third canonical vector divided by c^2.
double third_vector_z2(const LatticeParams& l) {
  const double ca = std::cos(l.alpha * kDeg), cb = std::cos(l.beta * kDeg);
  const double cg = std::cos(l.gamma * kDeg), sg = std::sin(l.gamma * kDeg);
  const double x = cb;
  const double y = (ca - cb * cg) / sg;
  return 1.0 - x * x - y * y;
}

}  // namespace

bool lattice_is_valid(const LatticeParams& l) {
  for (double len : {l.a, l.b, l.c}) {
    if (!(std::isfinite(len) && len > 0.0)) return false;
  }
  for (double ang : {l.alpha, l.beta, l.gamma}) {
    if (!(ang >= kAngleMin - kNiggliSlack && ang <= kAngleMax + kNiggliSlack)) return false;
  }
  return third_vector_z2(l) > 1e-12;
}

void validate_lattice(const LatticeParams& l) {
  for (double len : {l.a, l.b, l.c}) {
    if (!(std::isfinite(len) && len > 0.0)) fail(ErrorCode::Domain, "lattice length must be positive");
  }
  for (double ang : {l.alpha, l.beta, l.gamma}) {
    if (!(ang >= kAngleMin - kNiggliSlack && ang <= kAngleMax + kNiggliSlack)) {
      fail(ErrorCode::NiggliViolation, "lattice angle " + std::to_string(ang) + " outside [60,120]");
    }
  }
  if (!(third_vector_z2(l) > 1e-12)) fail(ErrorCode::DegenerateCell, "angles imply zero cell volume");
}

LatticeParams params_from_matrix(const LatticeMatrix& m) {
  const Eigen::Matrix3d& L = m.cols;
  if (!(std::abs(L.determinant()) > 1e-12)) fail(ErrorCode::DegenerateCell, "singular lattice matrix");
  LatticeParams p;
  p.a = L.col(0).norm();
  p.b = L.col(1).norm();
  p.c = L.col(2).norm();
  p.alpha = angle_between(L.col(1), L.col(2));
  p.beta = angle_between(L.col(0), L.col(2));
  p.gamma = angle_between(L.col(0), L.col(1));
  for (double ang : {p.alpha, p.beta, p.gamma}) {
    if (ang < kAngleMin - kNiggliSlack || ang > kAngleMax + kNiggliSlack) {
      fail(ErrorCode::NiggliViolation,
           "angle " + std::to_string(ang) + " outside [60,120]; input is not a reduced cell");
    }
  }
  return p;
}

LatticeMatrix matrix_from_params(const LatticeParams& l) {
  validate_lattice(l);
  const double ca = std::cos(l.alpha * kDeg), cb = std::cos(l.beta * kDeg);
  const double cg = std::cos(l.gamma * kDeg), sg = std::sin(l.gamma * kDeg);
  LatticeMatrix m;
  m.cols.col(0) << l.a, 0.0, 0.0;
  m.cols.col(1) << l.b * cg, l.b * sg, 0.0;
  const double y = (ca - cb * cg) / sg;
  m.cols.col(2) << l.c * cb, l.c * y, l.c * std::sqrt(third_vector_z2(l));
  return m;
}

Eigen::Matrix3d gram_from_params(const LatticeParams& l) {
  const double ca = std::cos(l.alpha * kDeg), cb = std::cos(l.beta * kDeg);
  const double cg = std::cos(l.gamma * kDeg);
  Eigen::Matrix3d g;
  g << l.a * l.a, l.a * l.b * cg, l.a * l.c * cb,
       l.a * l.b * cg, l.b * l.b, l.b * l.c * ca,
       l.a * l.c * cb, l.b * l.c * ca, l.c * l.c;
  return g;
}

double cell_volume(const LatticeParams& l) {
  return std::abs(matrix_from_params(l).cols.determinant());
}

double angle_to_unconstrained(double degrees) {
  if (!(degrees >= kAngleMin - kAngleClamp && degrees <= kAngleMax + kAngleClamp)) {
    fail(ErrorCode::Domain, "angle " + std::to_string(degrees) + " outside [60,120]");
  }
  const double x = std::clamp(degrees, kAngleMin + kAngleClamp, kAngleMax - kAngleClamp);
  const double p = (x - kAngleMin) / (kAngleMax - kAngleMin);
  return std::log(p / (1.0 - p));
}

double angle_from_unconstrained(double y) {
  if (!std::isfinite(y)) fail(ErrorCode::Domain, "non-finite unconstrained angle");
  return (kAngleMax - kAngleMin) * sigmoid(y) + kAngleMin;
}

LatticeVec lattice_to_flow(const LatticeParams& l) {
  LatticeVec v;
  v << l.a, l.b, l.c, angle_to_unconstrained(l.alpha), angle_to_unconstrained(l.beta),
      angle_to_unconstrained(l.gamma);
  return v;
}

LatticeParams lattice_from_flow(const LatticeVec& v) {
  LatticeParams l;
  l.a = v[0];
  l.b = v[1];
  l.c = v[2];
  l.alpha = angle_from_unconstrained(v[3]);
  l.beta = angle_from_unconstrained(v[4]);
  l.gamma = angle_from_unconstrained(v[5]);
  return l;
}

BitsMatrix encode_atoms(const std::vector<int>& kinds) {
  BitsMatrix bits(static_cast<Eigen::Index>(kinds.size()), kBits);
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const int k = kinds[i];
    if (k < 0 || k >= kNumClasses) fail(ErrorCode::Range, "atom class " + std::to_string(k) + " outside [0,100)");
    for (int j = 0; j < kBits; ++j) bits(static_cast<Eigen::Index>(i), j) = ((k >> j) & 1) ? 1.0 : -1.0;
  }
  return bits;
}

DecodedAtoms decode_atoms(const Eigen::Ref<const Eigen::MatrixXd>& bits) {
  if (bits.cols() != kBits) fail(ErrorCode::Dimension, "atom bits need 7 columns");
  DecodedAtoms out;
  out.kinds.reserve(static_cast<std::size_t>(bits.rows()));
  for (Eigen::Index i = 0; i < bits.rows(); ++i) {
    int k = 0;
    for (int j = 0; j < kBits; ++j) {
      if (bits(i, j) >= 0.0) k |= 1 << j;
    }
    out.kinds.push_back(k);
    if (k >= kNumClasses) out.unused_bit_atoms.push_back(static_cast<int>(i));
  }
  return out;
}

Crystal::Crystal(std::vector<int> kinds_, TorusCloud frac_, LatticeParams lattice_)
    : kinds(std::move(kinds_)), frac(std::move(frac_)), lattice(lattice_) {
  if (static_cast<int>(kinds.size()) != frac.size()) {
    fail(ErrorCode::Dimension, "crystal has " + std::to_string(kinds.size()) + " kinds but " +
                                   std::to_string(frac.size()) + " coordinates");
  }
  for (int k : kinds) {
    if (k < 0 || k >= kNumClasses) fail(ErrorCode::Range, "atom class outside [0,100)");
  }
  validate_lattice(lattice);
}

Crystal apply_symmetry(const Crystal& c, const SymmetryOp& g) {
  const int n = c.num_atoms();
  if (const auto* p = std::get_if<Permutation>(&g)) {
    if (static_cast<int>(p->order.size()) != n) fail(ErrorCode::Dimension, "permutation length differs from atom count");
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> kinds(static_cast<std::size_t>(n));
    FracMatrix f(n, 3);
    for (int i = 0; i < n; ++i) {
      const int src = p->order[static_cast<std::size_t>(i)];
      if (src < 0 || src >= n || seen[static_cast<std::size_t>(src)]) {
        fail(ErrorCode::Domain, "permutation is not a bijection");
      }
      seen[static_cast<std::size_t>(src)] = 1;
      kinds[static_cast<std::size_t>(i)] = c.kinds[static_cast<std::size_t>(src)];
      f.row(i) = c.frac.coords().row(src);
    }
    return Crystal(std::move(kinds), TorusCloud(std::move(f)), c.lattice);
  }
  if (const auto* t = std::get_if<Translation>(&g)) {
    if (!t->tau.allFinite() || t->tau.cwiseAbs().maxCoeff() > 0.5) {
      fail(ErrorCode::Domain, "translation must lie in [-1/2, 1/2]^3");
    }
    FracMatrix f = c.frac.coords().rowwise() + t->tau.transpose();
    return Crystal(c.kinds, TorusCloud(std::move(f)), c.lattice);
  }
  const auto& r = std::get<Rotation>(g);
  if (!(r.q.transpose() * r.q).isApprox(Eigen::Matrix3d::Identity(), 1e-10) ||
      std::abs(r.q.determinant() - 1.0) > 1e-10) {
    fail(ErrorCode::Domain, "rotation must be orthogonal with determinant +1");
  }
  // Lattice parameters are rotation invariant.
  return c;
}

std::vector<int> sorted_composition(const std::vector<int>& kinds) {
  std::vector<int> s = kinds;
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace flowcryst
