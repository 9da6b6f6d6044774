#pragma once

#include <Eigen/Core>
#include <vector>

#include "flowcryst/crystal.hpp"
#include "flowcryst/flowstate.hpp"

namespace flowcryst {

/// Cubic ABX3 family with fixed fractional sites: A in {Sr, Ba}, B in
/// {Ti, Zr}, X = O. The cell edge is the pair's reference length times a
/// log-normal factor with log-scale `length_sigma`. Atom order is shuffled.
std::vector<Crystal> perovskite_family(int count, Rng& rng, double length_sigma = 0.02);

/// Two identical atoms in a fixed cube. The displacement of the second atom
/// from the first follows a two-mode wrapped Gaussian; atom order is random,
/// so the displacement law is symmetric under d -> -d.
struct ToyTorusSpec {
  Eigen::Vector3d mode1{0.25, 0.25, 0.5};
  Eigen::Vector3d mode2{0.5, 0.75, 0.0};
  double sigma = 0.05;
  double cell = 6.0;
  int kind = 5;  ///< carbon
};

std::vector<Crystal> toy_torus_dataset(int count, Rng& rng, const ToyTorusSpec& spec = {});

/// Normalized bins x bins histogram of the (x, y) components of the wrapped
/// displacement f[1] - f[0] over two-atom crystals.
Eigen::MatrixXd displacement_histogram(const std::vector<Crystal>& crystals, int bins = 20);

/// Exact bin probabilities of the toy displacement law.
Eigen::MatrixXd toy_target_histogram(const ToyTorusSpec& spec = {}, int bins = 20);

/// Half the L1 distance between two normalized histograms.
double total_variation(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q);

}  // namespace flowcryst
