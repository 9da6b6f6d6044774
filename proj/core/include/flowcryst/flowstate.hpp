#pragma once

#include <random>
#include <vector>

#include "flowcryst/geometry.hpp"
#include "flowcryst/state.hpp"

namespace flowcryst {

using Rng = std::mt19937_64;

/// A point of the flow's product manifold. In CSP mode `kinds` is the fixed
/// composition and `bits` is empty; in DNG mode `bits` carries the analog
/// atom representation and `kinds` is empty.
struct FlowState {
  Mode mode = Mode::CSP;
  std::vector<int> kinds;
  BitsMatrix bits;
  TorusCloud frac;
  LatticeVec lattice = LatticeVec::Zero();

  int num_atoms() const { return frac.size(); }
};

}  // namespace flowcryst
