#include "flowcryst/basedist.hpp"

#include <cmath>
#include <numbers>

#include "flowcryst/crystal.hpp"
#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_sigmoid(double x) {
  // log(1 / (1 + e^-x)) without overflow.
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

LengthPrior fit_length_prior(const std::vector<Eigen::Vector3d>& lengths) {
  if (lengths.size() < 2) fail(ErrorCode::InsufficientData, "length prior needs at least 2 samples");
  LengthPrior prior;
  const double m = static_cast<double>(lengths.size());
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& v : lengths) {
    if (!(v.minCoeff() > 0.0) || !v.allFinite()) fail(ErrorCode::Data, "lattice lengths must be positive");
    sum += v.array().log().matrix();
  }
  prior.loc = sum / m;
  Eigen::Vector3d ss = Eigen::Vector3d::Zero();
  for (const auto& v : lengths) {
    ss += (v.array().log().matrix() - prior.loc).array().square().matrix();
  }
  prior.scale = (ss / m).array().sqrt().max(kScaleFloor).matrix();
  return prior;
}

double length_log_likelihood(const LengthPrior& prior, const std::vector<Eigen::Vector3d>& lengths) {
  double ll = 0.0;
  for (const auto& v : lengths) {
    for (int k = 0; k < 3; ++k) {
      const double z = (std::log(v[k]) - prior.loc[k]) / prior.scale[k];
      ll += -std::log(v[k]) - std::log(prior.scale[k]) - kHalfLog2Pi - 0.5 * z * z;
    }
  }
  return ll;
}

AtomCountTable count_atoms(const std::vector<int>& sizes) {
  AtomCountTable t;
  for (int n : sizes) t.counts[n] += 1.0;
  return t;
}

int sample_num_atoms(const AtomCountTable& table, Rng& rng) {
  double total = 0.0;
  for (const auto& [n, w] : table.counts) {
    if (!(w >= 0.0)) fail(ErrorCode::Data, "atom count frequencies must be nonnegative");
    total += w;
  }
  if (table.counts.empty() || !(total > 0.0)) fail(ErrorCode::InsufficientData, "empty atom count table");
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  int last = table.counts.begin()->first;
  for (const auto& [n, w] : table.counts) {
    if (w <= 0.0) continue;
    acc += w;
    last = n;
    if (u < acc) return n;
  }
  return last;
}

BaseSample sample_base(int n, Mode mode, const LengthPrior& prior, Rng& rng) {
  if (n < 1) fail(ErrorCode::Domain, "base sample needs n >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(kAngleMin, kAngleMax);

  FracMatrix f(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) f(i, k) = unit(rng);

  LatticeVec l;
  for (int k = 0; k < 3; ++k) l[k] = std::exp(prior.loc[k] + prior.scale[k] * normal(rng));
  for (int k = 3; k < 6; ++k) l[k] = angle_to_unconstrained(angle(rng));

  BaseSample s{std::nullopt, TorusCloud(std::move(f)), l};
  if (mode == Mode::DNG) {
    BitsMatrix a(n, kBits);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < kBits; ++j) a(i, j) = normal(rng);
    s.a0 = std::move(a);
  }
  return s;
}

double angle_base_log_density(double y) {
  if (!std::isfinite(y)) fail(ErrorCode::Domain, "non-finite unconstrained angle");
  // p(y) = sigmoid(y) * sigmoid(-y): uniform density 1/60 times Jacobian 60 s (1 - s).
  return log_sigmoid(y) + log_sigmoid(-y);
}

double base_log_density(const FlowState& state, const LengthPrior& prior) {
  double lp = 0.0;
  // Uniform torus contributes log 1 per coordinate; TorusCloud guarantees the support.
  for (int k = 0; k < 3; ++k) {
    const double x = state.lattice[k];
    if (!(x > 0.0)) fail(ErrorCode::Domain, "lattice length must be positive");
    const double z = (std::log(x) - prior.loc[k]) / prior.scale[k];
    lp += -std::log(x) - std::log(prior.scale[k]) - kHalfLog2Pi - 0.5 * z * z;
  }
  for (int k = 3; k < 6; ++k) lp += angle_base_log_density(state.lattice[k]);
  if (state.mode == Mode::DNG) {
    if (state.bits.rows() != state.num_atoms()) fail(ErrorCode::Dimension, "bits rows differ from atom count");
    lp += -0.5 * state.bits.squaredNorm() - kHalfLog2Pi * static_cast<double>(state.bits.size());
  }
  return lp;
}

}  // namespace flowcryst
