#pragma once

#include <Eigen/Core>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcryst/flowmatch.hpp"
#include "flowcryst/flowstate.hpp"
#include "flowcryst/state.hpp"

namespace flowcryst {

/// Architecture of the message-passing vector field. Defaults are the
/// desk-scale profile; `reference_profile` gives the full-size network.
struct NetConfig {
  Mode mode = Mode::CSP;
  int hidden_dim = 64;
  int layers = 3;
  int n_freq = 8;
  int time_embed_dim = 32;
  bool layer_norm = true;
  std::string activation = "silu";
  /// Fully connected graphs are built up to this many atoms.
  int max_atoms = 24;
  /// Width of the learned atom-count embedding (DNG only).
  int count_embed_dim = 16;

  static NetConfig reference_profile(Mode mode);
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Width of the sinusoidal embedding of one scalar: 2 (n_freq + 1).
inline int sinusoid_width(int n_freq) { return 2 * (n_freq + 1); }

/// (sin 2 pi k x, cos 2 pi k x) for k = 0..n_freq, interleaved per k.
Eigen::VectorXd sinusoidal_embedding(double x, int n_freq);

/// Fixed geometric-frequency embedding of the flow time t.
Eigen::VectorXd time_embedding(double t, int dim);

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  Eigen::Index offset = 0;
  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
  bool operator==(const ParamBlock&) const = default;
};

/// Named, shaped views into the flat parameter vector.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const NetConfig& config);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;
  Eigen::Index total_size() const { return total_; }
  bool operator==(const ParamLayout& o) const { return blocks_ == o.blocks_; }

 private:
  void add(std::string name, int rows, int cols);

  std::vector<ParamBlock> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
  Eigen::Index total_ = 0;
};

/// Standardization applied to the lattice input and the f/l velocity outputs.
struct ZScoreStats {
  LatticeVec lattice_mean = LatticeVec::Zero();
  LatticeVec lattice_std = LatticeVec::Ones();
  Eigen::Vector3d frac_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d frac_std = Eigen::Vector3d::Ones();
  LatticeVec dl_mean = LatticeVec::Zero();
  LatticeVec dl_std = LatticeVec::Ones();

  static constexpr double kStdFloor = 1e-8;
  void floor_std();
};

/// Estimates z-score statistics from path samples (states and targets).
ZScoreStats fit_zscore(const std::vector<PathSample>& samples);

struct ModelParams {
  NetConfig config;
  ParamLayout layout;
  Eigen::VectorXd values;
  ZScoreStats zscore;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit
  /// layer-norm gains.
  static ModelParams initialize(const NetConfig& config, Rng& rng);
  static ModelParams zeros(const NetConfig& config);

  Eigen::Map<Eigen::MatrixXd> block(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> block(const std::string& name) const;
};

/// Evaluates the learned velocity at state c_t and time t.
TangentState forward(const ModelParams& params, const FlowState& c_t, double t);

/// One supervised item: a path sample plus the endpoint bits for the
/// cross-entropy term (DNG).
struct TrainItem {
  PathSample path;
  BitsMatrix a1;
};

struct BatchLoss {
  LossTerms terms;  ///< averaged over the batch
  double total() const { return terms.total(); }
};

/// Loss averaged over the batch and its exact gradient w.r.t. every
/// parameter. `weights` must already be normalized. Work is split into a
/// fixed number of shards so the summation order does not depend on
/// `threads`.
BatchLoss loss_and_gradient(const ModelParams& params, const std::vector<TrainItem>& batch,
                            const LossWeights& weights, Eigen::VectorXd& grad, int threads = 1);

/// Loss only, same definition as above.
BatchLoss batch_loss(const ModelParams& params, const std::vector<TrainItem>& batch, const LossWeights& weights);

}  // namespace flowcryst
