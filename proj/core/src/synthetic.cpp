#include "flowcryst/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowcryst/error.hpp"
#include "flowcryst/geometry.hpp"

namespace flowcryst {

namespace {

// Classes are atomic number minus one.
constexpr int kSr = 37, kBa = 55, kTi = 21, kZr = 39, kO = 7;

// Reference cubic edges (angstrom) for SrTiO3, BaTiO3, SrZrO3, BaZrO3.
double reference_edge(int a_site, int b_site) {
  if (a_site == kSr) return b_site == kTi ? 3.905 : 4.10;
  return b_site == kTi ? 4.00 : 4.19;
}

/// Mass of a wrapped normal N(mu, sigma^2) on the interval [lo, hi) of the circle.
double wrapped_normal_mass(double mu, double sigma, double lo, double hi) {
  const double s = sigma * std::sqrt(2.0);
  double mass = 0.0;
  for (int k = -3; k <= 3; ++k) {
    mass += 0.5 * (std::erf((hi + k - mu) / s) - std::erf((lo + k - mu) / s));
  }
  return mass;
}

}  // namespace

std::vector<Crystal> perovskite_family(int count, Rng& rng, double length_sigma) {
  if (count < 0) fail(ErrorCode::Domain, "count must be nonnegative");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const FracMatrix sites = (FracMatrix(5, 3) << 0.0, 0.0, 0.0,  //
                            0.5, 0.5, 0.5,                      //
                            0.5, 0.5, 0.0,                      //
                            0.5, 0.0, 0.5,                      //
                            0.0, 0.5, 0.5)
                               .finished();
  std::vector<Crystal> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    const int a_site = coin(rng) ? kSr : kBa;
    const int b_site = coin(rng) ? kTi : kZr;
    const double edge = reference_edge(a_site, b_site) * std::exp(length_sigma * normal(rng));
    const std::vector<int> kinds = {a_site, b_site, kO, kO, kO};
    std::vector<int> order(5);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    FracMatrix f(5, 3);
    std::vector<int> k(5);
    for (int i = 0; i < 5; ++i) {
      f.row(i) = sites.row(order[static_cast<std::size_t>(i)]);
      k[static_cast<std::size_t>(i)] = kinds[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    out.emplace_back(std::move(k), TorusCloud(std::move(f)), LatticeParams{edge, edge, edge, 90.0, 90.0, 90.0});
  }
  return out;
}

std::vector<Crystal> toy_torus_dataset(int count, Rng& rng, const ToyTorusSpec& spec) {
  if (count < 0) fail(ErrorCode::Domain, "count must be nonnegative");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, spec.sigma);
  std::bernoulli_distribution coin(0.5);
  std::vector<Crystal> out;
  out.reserve(static_cast<std::size_t>(count));
  const LatticeParams cube{spec.cell, spec.cell, spec.cell, 90.0, 90.0, 90.0};
  for (int c = 0; c < count; ++c) {
    const Eigen::Vector3d& mu = coin(rng) ? spec.mode1 : spec.mode2;
    FracMatrix f(2, 3);
    for (int k = 0; k < 3; ++k) {
      const double base = unit(rng);
      const double d = mu[k] + normal(rng);
      f(0, k) = base;
      f(1, k) = base + d;
    }
    if (coin(rng)) f.row(0).swap(f.row(1));
    out.emplace_back(std::vector<int>{spec.kind, spec.kind}, TorusCloud(std::move(f)), cube);
  }
  return out;
}

Eigen::MatrixXd displacement_histogram(const std::vector<Crystal>& crystals, int bins) {
  if (bins < 1) fail(ErrorCode::Domain, "histogram needs at least one bin");
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(bins, bins);
  int used = 0;
  for (const Crystal& c : crystals) {
    if (c.num_atoms() != 2) fail(ErrorCode::Dimension, "displacement histogram needs two-atom crystals");
    const double dx = wrap_unit(c.frac(1, 0) - c.frac(0, 0));
    const double dy = wrap_unit(c.frac(1, 1) - c.frac(0, 1));
    const int ix = std::min(bins - 1, static_cast<int>(dx * bins));
    const int iy = std::min(bins - 1, static_cast<int>(dy * bins));
    h(ix, iy) += 1.0;
    ++used;
  }
  if (used == 0) fail(ErrorCode::InsufficientData, "empty histogram");
  return h / used;
}

Eigen::MatrixXd toy_target_histogram(const ToyTorusSpec& spec, int bins) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(bins, bins);
  // Mixture over the two modes and the two atom orders (d and -d).
  const std::vector<Eigen::Vector3d> centers = {spec.mode1, spec.mode2, -spec.mode1, -spec.mode2};
  for (const auto& mu : centers) {
    for (int i = 0; i < bins; ++i) {
      const double px = wrapped_normal_mass(mu[0], spec.sigma, static_cast<double>(i) / bins,
                                            static_cast<double>(i + 1) / bins);
      for (int j = 0; j < bins; ++j) {
        const double py = wrapped_normal_mass(mu[1], spec.sigma, static_cast<double>(j) / bins,
                                              static_cast<double>(j + 1) / bins);
        h(i, j) += 0.25 * px * py;
      }
    }
  }
  return h;
}

double total_variation(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) fail(ErrorCode::Dimension, "histogram shapes differ");
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace flowcryst
