#pragma once

#include <Eigen/Core>

#include "flowcryst/flowstate.hpp"
#include "flowcryst/geometry.hpp"
#include "flowcryst/state.hpp"

namespace flowcryst {

/// Training times are drawn from U(0, 1 - kTimeEpsilon) so 1/(1-t) stays finite.
inline constexpr double kTimeEpsilon = 1e-5;

double sample_time(Rng& rng);

/// (m1 - m) / (1 - t) for the Euclidean factors under the linear scheduler.
Eigen::VectorXd cond_vf_euclidean(const Eigen::VectorXd& m, const Eigen::VectorXd& m1, double t);

/// Mean-free torus velocity: log_{f0}(f1) with its per-coordinate mean over
/// atoms removed. Invariant to a common translation of f0 and f1.
TorusTangent cond_vf_torus_meanfree(const TorusCloud& f0, const TorusCloud& f1);

/// Unnormalized loss weights; the loss uses their affine normalization.
struct LossWeights {
  double lambda_a = 0.0;
  double lambda_f = 1.0;
  double lambda_l = 1.0;
  double lambda_sce = 0.0;

  /// Divides by the sum of the active weights. Throws on CSP with atom or
  /// cross-entropy weight, negative weights, or a zero sum.
  LossWeights normalized(Mode mode) const;
};

struct PathSample {
  double t = 0.0;
  FlowState c_t;
  TangentState target;
};

/// Interpolates every component along its geodesic at time t and returns the
/// constant-velocity regression target (a1 - a0, mean-free torus log, l1 - l0).
PathSample sample_conditional_path(const FlowState& c0, const FlowState& c1, double t);

/// Weighted loss components. `total()` is the scalar objective.
struct LossTerms {
  double a = 0.0;
  double f = 0.0;
  double l = 0.0;
  double sce = 0.0;
  double total() const { return a + f + l + sce; }
  LossTerms& operator+=(const LossTerms& o) {
    a += o.a;
    f += o.f;
    l += o.l;
    sce += o.sce;
    return *this;
  }
};

/// Dimension-normalized squared error of one crystal. `w` must already be
/// normalized. If `grad` is non-null it receives d loss / d pred.
LossTerms fm_loss_terms(const TangentState& pred, const TangentState& target, const LossWeights& w, Mode mode,
                        TangentState* grad = nullptr);

/// Convenience overload that normalizes `raw` first.
double fm_loss(const TangentState& pred, const TangentState& target, const LossWeights& raw, Mode mode);

/// -log sigmoid(a1 . (a_t + (1 - t) pred_da)) summed over atoms. If
/// `grad_pred_da` is non-null it receives the derivative w.r.t. pred_da.
double sce_loss(const BitsMatrix& a1, const BitsMatrix& pred_da, const BitsMatrix& a_t, double t,
                BitsMatrix* grad_pred_da = nullptr);

}  // namespace flowcryst
