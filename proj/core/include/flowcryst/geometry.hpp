#pragma once

#include <Eigen/Core>

#include "flowcryst/state.hpp"

namespace flowcryst {

/// x - floor(x), re-wrapped so the result is always in [0, 1).
double wrap_unit(double x);

/// Points on the flat torus [0,1)^{n x 3}. Coordinates are canonicalized on
/// construction, so every stored entry satisfies 0 <= e < 1.
class TorusCloud {
 public:
  TorusCloud() = default;
  explicit TorusCloud(FracMatrix coords);

  const FracMatrix& coords() const { return coords_; }
  int size() const { return static_cast<int>(coords_.rows()); }
  double operator()(int i, int k) const { return coords_(i, k); }

 private:
  FracMatrix coords_;
};

using TorusTangent = FracMatrix;

TorusCloud torus_exp(const TorusCloud& f, const TorusTangent& v);

/// Minimal signed displacement from f0 to f1, entrywise in (-1/2, 1/2].
/// An exact antipodal displacement resolves to +1/2.
TorusTangent torus_log(const TorusCloud& f0, const TorusCloud& f1);

/// Scalar versions of the above, used inside kernels.
double torus_log_scalar(double f0, double f1);

TorusCloud torus_geodesic(const TorusCloud& m0, const TorusCloud& m1, double t);

void check_geodesic_time(double t);

/// Straight-line geodesic (1 - t) m0 + t m1 for the Euclidean factors.
template <typename Derived>
auto euclidean_geodesic(const Eigen::MatrixBase<Derived>& m0, const Eigen::MatrixBase<Derived>& m1,
                        double t) {
  check_geodesic_time(t);
  return ((1.0 - t) * m0 + t * m1).eval();
}

/// Largest entrywise minimal-image distance between two clouds.
double torus_max_distance(const TorusCloud& a, const TorusCloud& b);

struct MetricWeights {
  double lambda_a = 1.0;
  double lambda_f = 1.0;
  double lambda_l = 1.0;
};

/// A tangent vector of the product manifold with flattened components of
/// arbitrary declared dimension.
struct ProductVector {
  Eigen::VectorXd a;
  Eigen::VectorXd f;
  Eigen::VectorXd l;
};

/// lambda_a <u_a, v_a> + lambda_f <u_f, v_f> + lambda_l <u_l, v_l>, each
/// component with the flat Euclidean inner product.
double product_inner(const ProductVector& u, const ProductVector& v, const MetricWeights& w);
double product_inner(const TangentState& u, const TangentState& v, const MetricWeights& w);

}  // namespace flowcryst
