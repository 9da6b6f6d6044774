#pragma once

#include <Eigen/Core>
#include <optional>
#include <variant>
#include <vector>

#include "flowcryst/geometry.hpp"
#include "flowcryst/state.hpp"

namespace flowcryst {

/// Lengths in Angstrom, angles in degrees.
struct LatticeParams {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  double alpha = 90.0;
  double beta = 90.0;
  double gamma = 90.0;

  bool operator==(const LatticeParams&) const = default;
};

/// Cartesian lattice vectors stored as matrix columns.
struct LatticeMatrix {
  Eigen::Matrix3d cols = Eigen::Matrix3d::Identity();
};

inline constexpr double kAngleMin = 60.0;
inline constexpr double kAngleMax = 120.0;
/// Data angles on the reduced-cell boundary are pulled inward by this much.
inline constexpr double kAngleClamp = 1e-6;

/// Throws if lengths are non-positive, angles leave [60, 120] or the cell
/// has no volume.
void validate_lattice(const LatticeParams& l);
bool lattice_is_valid(const LatticeParams& l);

LatticeParams params_from_matrix(const LatticeMatrix& m);

/// Canonical orientation: first vector along x, second in the xy-plane, third
/// with positive z.
LatticeMatrix matrix_from_params(const LatticeParams& l);

/// Metric tensor L^T L computed directly from the six parameters.
Eigen::Matrix3d gram_from_params(const LatticeParams& l);

double cell_volume(const LatticeParams& l);

double angle_to_unconstrained(double degrees);
double angle_from_unconstrained(double y);

/// Lattice parameters to the flow's Euclidean coordinates (raw lengths,
/// unconstrained angles) and back. The inverse does not validate lengths.
LatticeVec lattice_to_flow(const LatticeParams& l);
LatticeParams lattice_from_flow(const LatticeVec& v);

BitsMatrix encode_atoms(const std::vector<int>& kinds);

struct DecodedAtoms {
  std::vector<int> kinds;
  /// Indices whose decoded class is >= kNumClasses.
  std::vector<int> unused_bit_atoms;
  bool ok() const { return unused_bit_atoms.empty(); }
};

/// Sign-discretize each entry (sign(0) := +1) and read the bits LSB first.
DecodedAtoms decode_atoms(const Eigen::Ref<const Eigen::MatrixXd>& bits);

struct Crystal {
  std::vector<int> kinds;
  TorusCloud frac;
  LatticeParams lattice;

  Crystal() = default;
  Crystal(std::vector<int> kinds, TorusCloud frac, LatticeParams lattice);

  int num_atoms() const { return static_cast<int>(kinds.size()); }
};

struct Permutation {
  std::vector<int> order;  ///< new index i takes old atom order[i]
};
struct Translation {
  Eigen::Vector3d tau = Eigen::Vector3d::Zero();
};
struct Rotation {
  Eigen::Matrix3d q = Eigen::Matrix3d::Identity();
};
using SymmetryOp = std::variant<Permutation, Translation, Rotation>;

Crystal apply_symmetry(const Crystal& c, const SymmetryOp& g);

/// Shared by the matcher and the network: same kinds regardless of order.
std::vector<int> sorted_composition(const std::vector<int>& kinds);

}  // namespace flowcryst
