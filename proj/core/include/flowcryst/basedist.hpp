#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <vector>

#include "flowcryst/flowstate.hpp"

namespace flowcryst {

inline constexpr double kScaleFloor = 1e-6;

/// Independent log-normal priors over the three cell lengths.
struct LengthPrior {
  Eigen::Vector3d loc = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
};

/// Maximum-likelihood fit: mean and population standard deviation of the
/// log-lengths per axis, with the scale floored at kScaleFloor.
LengthPrior fit_length_prior(const std::vector<Eigen::Vector3d>& lengths);

double length_log_likelihood(const LengthPrior& prior, const std::vector<Eigen::Vector3d>& lengths);

/// Empirical frequencies of the atom count n.
struct AtomCountTable {
  std::map<int, double> counts;
};

AtomCountTable count_atoms(const std::vector<int>& sizes);
int sample_num_atoms(const AtomCountTable& table, Rng& rng);

struct BaseSample {
  std::optional<BitsMatrix> a0;
  TorusCloud f0;
  LatticeVec l0;
};

/// f0 ~ U[0,1)^{n x 3}; lengths ~ LogNormal(prior); angles ~ U(60,120) mapped
/// to unconstrained space; DNG adds a0 ~ N(0, I) of shape n x 7.
BaseSample sample_base(int n, Mode mode, const LengthPrior& prior, Rng& rng);

/// Log density of one unconstrained angle when the constrained angle is
/// uniform on (60, 120), including the log-Jacobian of the inverse map.
double angle_base_log_density(double y);

/// Sum of component log-densities of the base distribution.
double base_log_density(const FlowState& state, const LengthPrior& prior);

}  // namespace flowcryst
