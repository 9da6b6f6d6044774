#include "flowcryst/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "flowcryst/error.hpp"

namespace flowcryst {

AnnealFlags parse_anneal(const std::string& text) {
  AnnealFlags flags;
  if (text.empty() || text == "none") return flags;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "a") {
      flags.a = true;
    } else if (item == "f") {
      flags.f = true;
    } else if (item == "l") {
      flags.l = true;
    } else {
      fail(ErrorCode::Configuration, "unknown anneal group '" + item + "' (expected a, f, l or none)");
    }
  }
  return flags;
}

std::string to_string(const AnnealFlags& flags) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(flags.a, "a");
  add(flags.f, "f");
  add(flags.l, "l");
  return out.empty() ? "none" : out;
}

RunConfig RunConfig::defaults(Mode mode) {
  RunConfig c;
  c.mode = mode;
  if (mode == Mode::DNG) {
    c.learning_rate = 5e-4;
    c.weight_decay = 5e-3;
    c.weights = {300.0, 600.0, 1.0, 20.0};
    c.slope = 5.0;
    c.anneal = {false, true, true};
  }
  return c;
}

void RunConfig::validate() const {
  if (!(learning_rate > 0) || !(weight_decay >= 0) || !(grad_clip > 0)) {
    fail(ErrorCode::Configuration, "learning_rate and grad_clip must be positive, weight_decay nonnegative");
  }
  if (epochs < 1 || batch_size < 1 || max_steps < 0 || threads < 1) {
    fail(ErrorCode::Configuration, "epochs, batch_size and threads must be >= 1");
  }
  if (steps < 1) fail(ErrorCode::Configuration, "integration steps must be >= 1");
  if (!(slope >= 0) || !std::isfinite(slope)) fail(ErrorCode::Configuration, "anti-anneal slope must be >= 0");
  if (mode == Mode::CSP && anneal.a) fail(ErrorCode::Configuration, "CSP has no atom field to anneal");
  weights.normalized(mode);
}

TangentState ExactConditionalField::velocity(const FlowState& state, double t) const {
  if (!(t >= 0.0 && t < 1.0)) fail(ErrorCode::ScheduleDomain, "conditional field time must lie in [0, 1)");
  const double inv = 1.0 / (1.0 - t);
  TangentState v = TangentState::zeros(state.num_atoms(), target_.mode);
  v.df = cond_vf_torus_meanfree(state.frac, target_.frac) * inv;
  v.dl = (target_.lattice - state.lattice) * inv;
  if (target_.mode == Mode::DNG) v.da = (target_.bits - state.bits) * inv;
  return v;
}

Trajectory integrate(const VectorField& field, const FlowState& c0, const IntegrateConfig& config, bool keep_path) {
  if (config.steps < 1) fail(ErrorCode::Configuration, "integration needs at least one step");
  if (!(config.slope >= 0)) fail(ErrorCode::Configuration, "anti-anneal slope must be >= 0");
  if (c0.mode != field.mode()) fail(ErrorCode::Configuration, "state and field modes differ");
  const int n_steps = config.steps;
  const double h = 1.0 / n_steps;

  Trajectory traj;
  if (keep_path) {
    traj.times.reserve(static_cast<std::size_t>(n_steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
    traj.times.push_back(0.0);
    traj.states.push_back(c0);
  }
  FlowState s = c0;
  for (int k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) / n_steps;
    const double scale = 1.0 + config.slope * t;
    const TangentState v = field.velocity(s, t);
    const double hf = config.anneal.f ? h * scale : h;
    const double hl = config.anneal.l ? h * scale : h;
    s.frac = torus_exp(s.frac, hf * v.df);
    s.lattice += hl * v.dl;
    if (s.mode == Mode::DNG) {
      const double ha = config.anneal.a ? h * scale : h;
      s.bits += ha * v.da;
    }
    if (!s.lattice.allFinite() || !s.bits.allFinite() || !s.frac.coords().allFinite()) {
      fail(ErrorCode::Integration, "non-finite state after step " + std::to_string(k));
    }
    if (keep_path) {
      traj.times.push_back(static_cast<double>(k + 1) / n_steps);
      traj.states.push_back(s);
    }
  }
  if (!keep_path) {
    traj.times = {0.0, 1.0};
    traj.states = {c0, std::move(s)};
  }
  return traj;
}

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

FlowState base_state(const std::vector<int>& kinds, int n, Mode mode, const LengthPrior& prior, Rng& rng) {
  BaseSample b = sample_base(n, mode, prior, rng);
  FlowState s;
  s.mode = mode;
  s.frac = std::move(b.f0);
  s.lattice = b.l0;
  if (mode == Mode::CSP) {
    s.kinds = kinds;
  } else {
    s.bits = std::move(*b.a0);
  }
  return s;
}

FlowState data_state(const Crystal& crystal, Mode mode) {
  FlowState s;
  s.mode = mode;
  s.frac = crystal.frac;
  s.lattice = lattice_to_flow(crystal.lattice);
  if (mode == Mode::CSP) {
    s.kinds = crystal.kinds;
  } else {
    s.bits = encode_atoms(crystal.kinds);
  }
  return s;
}

double clip_gradient(Eigen::VectorXd& grad, double max_norm) {
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return norm;
}

AdamW::AdamW(Eigen::Index size, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr),
      wd_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {}

void AdamW::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params *= 1.0 - lr_ * wd_;
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainItem make_train_item(const Crystal& c1, Mode mode, const LengthPrior& prior, Rng& rng) {
  const FlowState x1 = data_state(c1, mode);
  const FlowState x0 = base_state(c1.kinds, c1.num_atoms(), mode, prior, rng);
  const double t = sample_time(rng);
  TrainItem item;
  item.path = sample_conditional_path(x0, x1, t);
  if (mode == Mode::DNG) item.a1 = x1.bits;
  return item;
}

namespace {

constexpr int kZScoreSamples = 2048;

ZScoreStats estimate_zscore(const RunConfig& run, const std::vector<Crystal>& data, const LengthPrior& prior) {
  Rng rng = stream_rng(run.seed, 1);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<PathSample> samples;
  samples.reserve(kZScoreSamples);
  for (int i = 0; i < kZScoreSamples; ++i) {
    samples.push_back(make_train_item(data[pick(rng)], run.mode, prior, rng).path);
  }
  return fit_zscore(samples);
}

}  // namespace

TrainResult train(const RunConfig& run, const NetConfig& net, const std::vector<Crystal>& data,
                  const LengthPrior& prior, const EpochCallback& on_epoch) {
  run.validate();
  if (net.mode != run.mode) fail(ErrorCode::Configuration, "network and run modes differ");
  if (data.empty()) fail(ErrorCode::InsufficientData, "training set is empty");
  for (const Crystal& c : data) {
    if (c.num_atoms() > net.max_atoms) {
      fail(ErrorCode::Capacity, "training crystal with " + std::to_string(c.num_atoms()) + " atoms exceeds cap");
    }
  }

  Rng init_rng = stream_rng(run.seed, 0);
  TrainResult result;
  result.params = ModelParams::initialize(net, init_rng);
  result.params.zscore = estimate_zscore(run, data, prior);

  const LossWeights weights = run.weights.normalized(run.mode);
  AdamW opt(result.params.layout.total_size(), run.learning_rate, run.weight_decay);
  Rng rng = stream_rng(run.seed, 2);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::VectorXd grad;
  Eigen::VectorXd last_good = result.params.values;

  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    TrainLogRow row;
    row.epoch = epoch;
    int batches = 0;
    bool stop = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(run.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(run.batch_size));
      std::vector<TrainItem> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(make_train_item(data[order[i]], run.mode, prior, rng));
      try {
        const BatchLoss loss = loss_and_gradient(result.params, batch, weights, grad, run.threads);
        const double norm = clip_gradient(grad, run.grad_clip);
        if (!std::isfinite(norm)) fail(ErrorCode::Numeric, "non-finite gradient norm");
        opt.step(result.params.values, grad);
        if (!result.params.values.allFinite()) fail(ErrorCode::Numeric, "non-finite parameters after update");
        row.terms += loss.terms;
        row.grad_norm += norm;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Numeric) throw;
        result.params.values = last_good;
        result.diverged = true;
        result.message = "diverged at epoch " + std::to_string(epoch) + ": " + e.what();
        return result;
      }
      last_good = result.params.values;
      ++batches;
      ++result.optimizer_steps;
      if (run.max_steps > 0 && result.optimizer_steps >= run.max_steps) {
        stop = true;
        break;
      }
    }
    const double inv = 1.0 / std::max(1, batches);
    row.terms.a *= inv;
    row.terms.f *= inv;
    row.terms.l *= inv;
    row.terms.sce *= inv;
    row.grad_norm *= inv;
    result.log.push_back(row);
    if (on_epoch && !on_epoch(row)) stop = true;
    if (stop) break;
  }
  return result;
}

Generated decode_state(const FlowState& state) {
  Generated g;
  g.final_state = state;
  std::vector<int> kinds;
  if (state.mode == Mode::CSP) {
    kinds = state.kinds;
  } else {
    DecodedAtoms dec = decode_atoms(state.bits);
    if (!dec.ok()) {
      g.reason = "unused bit pattern on " + std::to_string(dec.unused_bit_atoms.size()) + " atom(s)";
      return g;
    }
    kinds = std::move(dec.kinds);
  }
  const LatticeParams lat = lattice_from_flow(state.lattice);
  if (!lattice_is_valid(lat)) {
    g.reason = "decoded lattice is invalid (non-positive length or degenerate cell)";
    return g;
  }
  g.crystal = Crystal(std::move(kinds), state.frac, lat);
  return g;
}

Generated reconstruct_csp(const VectorField& field, const std::vector<int>& kinds, const LengthPrior& prior,
                          const IntegrateConfig& config, Rng& rng) {
  if (field.mode() != Mode::CSP) fail(ErrorCode::Configuration, "reconstruction needs a CSP field");
  if (kinds.empty()) fail(ErrorCode::Dimension, "empty composition");
  const FlowState c0 = base_state(kinds, static_cast<int>(kinds.size()), Mode::CSP, prior, rng);
  return decode_state(integrate(field, c0, config, false).states.back());
}

Generated generate_dng(const VectorField& field, const AtomCountTable& table, const LengthPrior& prior,
                       const IntegrateConfig& config, Rng& rng) {
  if (field.mode() != Mode::DNG) fail(ErrorCode::Configuration, "generation needs a DNG field");
  const int n = sample_num_atoms(table, rng);
  const FlowState c0 = base_state({}, n, Mode::DNG, prior, rng);
  return decode_state(integrate(field, c0, config, false).states.back());
}

namespace {

template <typename Fn>
std::vector<Generated> run_parallel(int count, int threads, Fn&& one) {
  std::vector<Generated> out(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto work = [&](int w, int workers) {
    for (int i = w; i < count; i += workers) {
      try {
        out[static_cast<std::size_t>(i)] = one(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, std::max(1, count));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

std::vector<Generated> reconstruct_many(const VectorField& field, const std::vector<std::vector<int>>& compositions,
                                        const LengthPrior& prior, const IntegrateConfig& config, std::uint64_t seed,
                                        int threads) {
  return run_parallel(static_cast<int>(compositions.size()), threads, [&](int i) {
    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(i));
    return reconstruct_csp(field, compositions[static_cast<std::size_t>(i)], prior, config, rng);
  });
}

std::vector<Generated> generate_many(const VectorField& field, int count, const AtomCountTable& table,
                                     const LengthPrior& prior, const IntegrateConfig& config, std::uint64_t seed,
                                     int threads) {
  return run_parallel(count, threads, [&](int i) {
    Rng rng = stream_rng(seed, static_cast<std::uint64_t>(i));
    return generate_dng(field, table, prior, config, rng);
  });
}

}  // namespace flowcryst
