#include "flowcryst/geometry.hpp"

#include <cmath>
#include <numbers>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

void require_same_shape(const FracMatrix& a, const FracMatrix& b, const char* what) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::Dimension, std::string(what) + ": " + std::to_string(a.rows()) + " vs " +
                                   std::to_string(b.rows()) + " atoms");
  }
}

}  // namespace

double wrap_unit(double x) {
  double r = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.0.
  if (r >= 1.0) r = 0.0;
  return r;
}

TorusCloud::TorusCloud(FracMatrix coords) : coords_(std::move(coords)) {
  if (coords_.rows() < 1) fail(ErrorCode::Dimension, "torus cloud needs at least one atom");
  for (Eigen::Index i = 0; i < coords_.size(); ++i) {
    double& e = coords_.data()[i];
    if (!std::isfinite(e)) fail(ErrorCode::Domain, "non-finite fractional coordinate");
    e = wrap_unit(e);
  }
}

TorusCloud torus_exp(const TorusCloud& f, const TorusTangent& v) {
  require_same_shape(f.coords(), v, "torus_exp");
  return TorusCloud(f.coords() + v);
}

double torus_log_scalar(double f0, double f1) {
  const double omega = 2.0 * std::numbers::pi * (f1 - f0);
  double d = std::atan2(std::sin(omega), std::cos(omega)) / (2.0 * std::numbers::pi);
  // Cut locus: pick the +1/2 representative.
  if (d <= -0.5) d = 0.5;
  return d;
}

TorusTangent torus_log(const TorusCloud& f0, const TorusCloud& f1) {
  require_same_shape(f0.coords(), f1.coords(), "torus_log");
  TorusTangent out(f0.size(), 3);
  for (int i = 0; i < f0.size(); ++i) {
    for (int k = 0; k < 3; ++k) out(i, k) = torus_log_scalar(f0(i, k), f1(i, k));
  }
  return out;
}

void check_geodesic_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::Domain, "geodesic time outside [0,1]");
}

TorusCloud torus_geodesic(const TorusCloud& m0, const TorusCloud& m1, double t) {
  check_geodesic_time(t);
  return torus_exp(m0, t * torus_log(m0, m1));
}

double torus_max_distance(const TorusCloud& a, const TorusCloud& b) {
  return torus_log(a, b).cwiseAbs().maxCoeff();
}

double product_inner(const ProductVector& u, const ProductVector& v, const MetricWeights& w) {
  if (u.a.size() != v.a.size() || u.f.size() != v.f.size() || u.l.size() != v.l.size()) {
    fail(ErrorCode::Dimension, "product_inner: component shapes differ");
  }
  return w.lambda_a * u.a.dot(v.a) + w.lambda_f * u.f.dot(v.f) + w.lambda_l * u.l.dot(v.l);
}

double product_inner(const TangentState& u, const TangentState& v, const MetricWeights& w) {
  if (u.da.rows() != v.da.rows() || u.df.rows() != v.df.rows()) {
    fail(ErrorCode::Dimension, "product_inner: component shapes differ");
  }
  double a = u.da.rows() > 0 ? (u.da.array() * v.da.array()).sum() : 0.0;
  double f = u.df.rows() > 0 ? (u.df.array() * v.df.array()).sum() : 0.0;
  double l = u.dl.dot(v.dl);
  return w.lambda_a * a + w.lambda_f * f + w.lambda_l * l;
}

}  // namespace flowcryst
