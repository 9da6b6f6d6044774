#pragma once

#include <Eigen/Core>

namespace flowcryst {

/// Number of atomic classes representable by the model.
inline constexpr int kNumClasses = 100;
/// ceil(log2(kNumClasses)) analog bits per atom.
inline constexpr int kBits = 7;

using FracMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using BitsMatrix = Eigen::Matrix<double, Eigen::Dynamic, kBits>;
/// Flow-space lattice: three raw lengths followed by three unconstrained angles.
using LatticeVec = Eigen::Matrix<double, 6, 1>;

enum class Mode { CSP, DNG };

/// Per-component tangent vectors. `da` has zero rows in CSP mode.
struct TangentState {
  BitsMatrix da;
  FracMatrix df;
  LatticeVec dl = LatticeVec::Zero();

  static TangentState zeros(int n, Mode mode) {
    TangentState s;
    s.da = BitsMatrix::Zero(mode == Mode::DNG ? n : 0, kBits);
    s.df = FracMatrix::Zero(n, 3);
    return s;
  }
  int num_atoms() const { return static_cast<int>(df.rows()); }
};

}  // namespace flowcryst
