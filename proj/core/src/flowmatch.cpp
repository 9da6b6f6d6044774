#include "flowcryst/flowmatch.hpp"

#include <cmath>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

void check_schedule_time(double t) {
  if (!(t >= 0.0 && t < 1.0)) fail(ErrorCode::ScheduleDomain, "time must lie in [0, 1)");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double sample_time(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0 - kTimeEpsilon)(rng);
}

Eigen::VectorXd cond_vf_euclidean(const Eigen::VectorXd& m, const Eigen::VectorXd& m1, double t) {
  check_schedule_time(t);
  if (m.size() != m1.size()) fail(ErrorCode::Dimension, "cond_vf_euclidean: size mismatch");
  return (m1 - m) / (1.0 - t);
}

TorusTangent cond_vf_torus_meanfree(const TorusCloud& f0, const TorusCloud& f1) {
  TorusTangent v = torus_log(f0, f1);
  const Eigen::RowVector3d mean = v.colwise().mean();
  v.rowwise() -= mean;
  return v;
}

LossWeights LossWeights::normalized(Mode mode) const {
  if (lambda_a < 0 || lambda_f < 0 || lambda_l < 0 || lambda_sce < 0) {
    fail(ErrorCode::Configuration, "loss weights must be nonnegative");
  }
  if (mode == Mode::CSP && (lambda_a > 0 || lambda_sce > 0)) {
    fail(ErrorCode::Configuration, "CSP keeps the atom field at zero; lambda_a and lambda_sce must be 0");
  }
  const double sum = lambda_a + lambda_f + lambda_l + lambda_sce;
  if (!(sum > 0)) fail(ErrorCode::Configuration, "loss weights sum to zero");
  return {lambda_a / sum, lambda_f / sum, lambda_l / sum, lambda_sce / sum};
}

PathSample sample_conditional_path(const FlowState& c0, const FlowState& c1, double t) {
  check_schedule_time(t);
  if (c0.num_atoms() != c1.num_atoms()) fail(ErrorCode::Dimension, "path endpoints differ in atom count");
  const int n = c0.num_atoms();
  PathSample s;
  s.t = t;
  s.c_t.mode = c0.mode;
  s.c_t.kinds = c1.kinds;
  s.target = TangentState::zeros(n, c0.mode);

  // The point follows the plain geodesic; only the supervised velocity has
  // its mean translation removed.
  const TorusTangent log01 = torus_log(c0.frac, c1.frac);
  s.c_t.frac = t == 0.0 ? c0.frac : torus_exp(c0.frac, t * log01);
  s.target.df = log01.rowwise() - log01.colwise().mean();

  s.c_t.lattice = t == 0.0 ? c0.lattice : euclidean_geodesic(c0.lattice, c1.lattice, t);
  s.target.dl = c1.lattice - c0.lattice;

  if (c0.mode == Mode::DNG) {
    if (c0.bits.rows() != n || c1.bits.rows() != n) fail(ErrorCode::Dimension, "DNG path needs atom bits");
    s.c_t.bits = t == 0.0 ? c0.bits : euclidean_geodesic(c0.bits, c1.bits, t);
    s.target.da = c1.bits - c0.bits;
  }
  return s;
}

LossTerms fm_loss_terms(const TangentState& pred, const TangentState& target, const LossWeights& w, Mode mode,
                        TangentState* grad) {
  const int n = target.num_atoms();
  if (pred.df.rows() != n) fail(ErrorCode::Dimension, "fm_loss: atom count mismatch");
  if (mode == Mode::CSP && w.lambda_a > 0) fail(ErrorCode::Configuration, "CSP loss has no atom term");
  if (!pred.df.allFinite() || !pred.dl.allFinite() || !target.df.allFinite() || !target.dl.allFinite()) {
    fail(ErrorCode::Numeric, "NaN or Inf in fm_loss inputs");
  }
  const double nn = static_cast<double>(n);
  LossTerms out;
  const FracMatrix diff_f = pred.df - target.df;
  const LatticeVec diff_l = pred.dl - target.dl;
  out.f = w.lambda_f / (3.0 * nn) * diff_f.squaredNorm();
  out.l = w.lambda_l / 6.0 * diff_l.squaredNorm();
  if (grad) {
    *grad = TangentState::zeros(n, mode);
    grad->df = (2.0 * w.lambda_f / (3.0 * nn)) * diff_f;
    grad->dl = (2.0 * w.lambda_l / 6.0) * diff_l;
  }
  if (mode == Mode::DNG) {
    if (pred.da.rows() != n || target.da.rows() != n) fail(ErrorCode::Dimension, "fm_loss: DNG needs atom bits");
    if (!pred.da.allFinite() || !target.da.allFinite()) fail(ErrorCode::Numeric, "NaN or Inf in fm_loss inputs");
    const BitsMatrix diff_a = pred.da - target.da;
    out.a = w.lambda_a / (kBits * nn) * diff_a.squaredNorm();
    if (grad) grad->da = (2.0 * w.lambda_a / (kBits * nn)) * diff_a;
  }
  return out;
}

double fm_loss(const TangentState& pred, const TangentState& target, const LossWeights& raw, Mode mode) {
  return fm_loss_terms(pred, target, raw.normalized(mode), mode).total();
}

double sce_loss(const BitsMatrix& a1, const BitsMatrix& pred_da, const BitsMatrix& a_t, double t,
                BitsMatrix* grad_pred_da) {
  if (a1.rows() != pred_da.rows() || a1.rows() != a_t.rows()) fail(ErrorCode::Dimension, "sce_loss: shape mismatch");
  if (!(t >= 0.0 && t < 1.0)) fail(ErrorCode::ScheduleDomain, "sce_loss time must lie in [0, 1)");
  const BitsMatrix a1_hat = a_t + (1.0 - t) * pred_da;
  if (grad_pred_da) grad_pred_da->setZero(a1.rows(), kBits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < a1.rows(); ++i) {
    const double z = a1.row(i).dot(a1_hat.row(i));
    loss += softplus(-z);
    if (grad_pred_da) grad_pred_da->row(i) = -(1.0 - sigmoid(z)) * (1.0 - t) * a1.row(i);
  }
  return loss;
}

}  // namespace flowcryst
