#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowcryst/basedist.hpp"
#include "flowcryst/crystal.hpp"
#include "flowcryst/flowmatch.hpp"
#include "flowcryst/net.hpp"

namespace flowcryst {

/// Which variable groups receive the anti-annealing velocity scale.
struct AnnealFlags {
  bool a = false;
  bool f = false;
  bool l = false;
  bool operator==(const AnnealFlags&) const = default;
};

/// Parses "none" or a comma list over {a, f, l}.
AnnealFlags parse_anneal(const std::string& text);
std::string to_string(const AnnealFlags& flags);

/// Settings for the Euler sampler.
struct IntegrateConfig {
  int steps = 50;
  double slope = 0.0;  ///< s' in s(t) = 1 + s' t
  AnnealFlags anneal;
};

struct RunConfig {
  Mode mode = Mode::CSP;
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  double grad_clip = 0.5;
  int epochs = 100;
  int batch_size = 32;
  /// Stops training after this many optimizer steps when > 0.
  int max_steps = 0;
  LossWeights weights{0.0, 300.0, 1.0, 0.0};
  int steps = 50;
  double slope = 10.0;
  AnnealFlags anneal{false, true, false};
  std::uint64_t seed = 0;
  int threads = 1;

  /// CSP defaults follow the MP-20 column of the published hyperparameters,
  /// DNG defaults the single DNG column.
  static RunConfig defaults(Mode mode);
  IntegrateConfig integrate_config() const { return {steps, slope, anneal}; }
  void validate() const;
};

/// A velocity field over flow states, so the learned network and analytic
/// oracles can drive the same sampler.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual Mode mode() const = 0;
  virtual TangentState velocity(const FlowState& state, double t) const = 0;
};

class ModelField final : public VectorField {
 public:
  explicit ModelField(const ModelParams& params) : params_(params) {}
  Mode mode() const override { return params_.config.mode; }
  TangentState velocity(const FlowState& state, double t) const override { return forward(params_, state, t); }

 private:
  const ModelParams& params_;
};

/// Analytic conditional field towards a fixed endpoint: the mean-free torus
/// log and straight Euclidean differences, divided by the remaining time.
class ExactConditionalField final : public VectorField {
 public:
  explicit ExactConditionalField(FlowState target) : target_(std::move(target)) {}
  Mode mode() const override { return target_.mode; }
  TangentState velocity(const FlowState& state, double t) const override;

 private:
  FlowState target_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<FlowState> states;
};

/// Explicit Euler from t = 0 to 1 with N uniform steps evaluated at
/// t_k = k/N. Flagged groups are scaled by 1 + s' t_k and the torus part is
/// re-wrapped after every step. Only the endpoint is stored unless
/// `keep_path` is set.
Trajectory integrate(const VectorField& field, const FlowState& c0, const IntegrateConfig& config,
                     bool keep_path = true);

/// Independent, reproducible random stream `stream` derived from `seed`.
Rng stream_rng(std::uint64_t seed, std::uint64_t stream);

/// Base draw turned into a flow state (kinds are attached for CSP).
FlowState base_state(const std::vector<int>& kinds, int n, Mode mode, const LengthPrior& prior, Rng& rng);

/// Flow-space image of a data crystal.
FlowState data_state(const Crystal& crystal, Mode mode);

/// Scales the gradient in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradient(Eigen::VectorXd& grad, double max_norm);

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(Eigen::Index size, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  std::int64_t steps() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

struct TrainLogRow {
  int epoch = 0;
  LossTerms terms;
  double grad_norm = 0.0;  ///< mean pre-clip norm over the epoch
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
  std::int64_t optimizer_steps = 0;
  bool diverged = false;
  std::string message;
};

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const TrainLogRow&)>;

/// Flow-matching training. On divergence the last finite parameters are
/// returned with `diverged` set.
TrainResult train(const RunConfig& run, const NetConfig& net, const std::vector<Crystal>& data,
                  const LengthPrior& prior, const EpochCallback& on_epoch = {});

/// Builds one training item for crystal `c1` (fresh base draw and time).
TrainItem make_train_item(const Crystal& c1, Mode mode, const LengthPrior& prior, Rng& rng);

/// A decoded sample. `crystal` is set only when the sample is valid.
struct Generated {
  std::optional<Crystal> crystal;
  std::string reason;
  FlowState final_state;
  bool valid() const { return crystal.has_value(); }
};

/// Decodes an integrated endpoint into a crystal or an invalid-sample flag.
Generated decode_state(const FlowState& state);

Generated reconstruct_csp(const VectorField& field, const std::vector<int>& kinds, const LengthPrior& prior,
                          const IntegrateConfig& config, Rng& rng);

Generated generate_dng(const VectorField& field, const AtomCountTable& table, const LengthPrior& prior,
                       const IntegrateConfig& config, Rng& rng);

/// Reconstructs every composition using stream i of `seed` for item i.
std::vector<Generated> reconstruct_many(const VectorField& field, const std::vector<std::vector<int>>& compositions,
                                        const LengthPrior& prior, const IntegrateConfig& config, std::uint64_t seed,
                                        int threads = 1);

std::vector<Generated> generate_many(const VectorField& field, int count, const AtomCountTable& table,
                                     const LengthPrior& prior, const IntegrateConfig& config, std::uint64_t seed,
                                     int threads = 1);

}  // namespace flowcryst
