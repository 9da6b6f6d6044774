#include "flowcryst/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <numeric>

#include "flowcryst/basedist.hpp"
#include "flowcryst/checkpoint.hpp"
#include "flowcryst/crystal.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/error.hpp"
#include "flowcryst/flowmatch.hpp"
#include "flowcryst/geometry.hpp"
#include "flowcryst/metrics.hpp"
#include "flowcryst/net.hpp"
#include "flowcryst/synthetic.hpp"

namespace flowcryst {

namespace {

TorusCloud random_cloud(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FracMatrix f(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) f(i, k) = u(rng);
  return TorusCloud(std::move(f));
}

double torus_gap(const TorusCloud& a, const TorusCloud& b) { return torus_max_distance(a, b); }

FlowState random_state(const NetConfig& cfg, int n, Rng& rng) {
  std::vector<int> kinds(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
  for (int& k : kinds) k = cls(rng);
  LengthPrior prior;
  prior.loc.setConstant(std::log(5.0));
  prior.scale.setConstant(0.1);
  return base_state(kinds, n, cfg.mode, prior, rng);
}

FlowState permuted(const FlowState& s, const std::vector<int>& order) {
  FlowState p = s;
  FracMatrix f(s.num_atoms(), 3);
  for (std::size_t i = 0; i < order.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = s.frac.coords().row(order[i]);
    if (s.mode == Mode::CSP) p.kinds[i] = s.kinds[static_cast<std::size_t>(order[i])];
    if (s.mode == Mode::DNG) p.bits.row(static_cast<Eigen::Index>(i)) = s.bits.row(order[i]);
  }
  p.frac = TorusCloud(std::move(f));
  return p;
}

double net_symmetry_error(Mode mode, Rng& rng) {
  NetConfig cfg;
  cfg.mode = mode;
  cfg.hidden_dim = 16;
  cfg.layers = 2;
  cfg.time_embed_dim = 8;
  cfg.n_freq = 3;
  const ModelParams p = ModelParams::initialize(cfg, rng);
  double worst = 0.0;
  for (int n : {1, 2, 4, 8}) {
    const FlowState s = random_state(cfg, n, rng);
    const TangentState v = forward(p, s, 0.3);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const TangentState vp = forward(p, permuted(s, order), 0.3);
    for (int i = 0; i < n; ++i) {
      worst = std::max(worst, (vp.df.row(i) - v.df.row(order[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, (vp.dl - v.dl).cwiseAbs().maxCoeff());

    FlowState shifted = s;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FracMatrix f = s.frac.coords();
    const Eigen::RowVector3d tau(u(rng), u(rng), u(rng));
    f.rowwise() += tau;
    shifted.frac = TorusCloud(std::move(f));
    const TangentState vt = forward(p, shifted, 0.3);
    worst = std::max(worst, (vt.df - v.df).cwiseAbs().maxCoeff());
    worst = std::max(worst, (vt.dl - v.dl).cwiseAbs().maxCoeff());
  }
  return worst;
}

double gradient_check_error(Rng& rng) {
  NetConfig cfg;
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  cfg.time_embed_dim = 4;
  cfg.n_freq = 2;
  ModelParams p = ModelParams::initialize(cfg, rng);
  std::vector<TrainItem> batch;
  LengthPrior prior;
  prior.loc.setConstant(std::log(4.0));
  prior.scale.setConstant(0.1);
  const std::vector<Crystal> data = perovskite_family(2, rng);
  for (const auto& c : data) batch.push_back(make_train_item(c, Mode::CSP, prior, rng));
  const LossWeights w = LossWeights{0.0, 10.0, 1.0, 0.0}.normalized(Mode::CSP);
  Eigen::VectorXd grad;
  loss_and_gradient(p, batch, w, grad);
  std::uniform_int_distribution<Eigen::Index> pick(0, p.values.size() - 1);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index i = pick(rng);
    const double keep = p.values[i];
    const double h = 1e-5;
    p.values[i] = keep + h;
    const double up = batch_loss(p, batch, w).total();
    p.values[i] = keep - h;
    const double down = batch_loss(p, batch, w).total();
    p.values[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }
  return worst;
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CheckResult> out;
  auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    CheckResult r{name, false, {}};
    try {
      std::tie(r.passed, r.detail) = body();
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    out.push_back(std::move(r));
  };
  auto bound = [](double err, double tol) {
    return std::make_pair(err <= tol, fmt::format("max error {:.3g} (tolerance {:.0e})", err, tol));
  };

  check("geometry.exp_log_inverse", [&] {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const TorusCloud a = random_cloud(3, rng), b = random_cloud(3, rng);
      worst = std::max(worst, torus_gap(torus_exp(a, torus_log(a, b)), b));
    }
    return bound(worst, 1e-12);
  });
  check("geometry.log_range", [&] {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      worst = std::max(worst, torus_log(random_cloud(3, rng), random_cloud(3, rng)).cwiseAbs().maxCoeff());
    }
    return std::make_pair(worst <= 0.5, fmt::format("max |log| {:.6f}", worst));
  });
  check("geometry.log_antisymmetry", [&] {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const TorusCloud a = random_cloud(3, rng), b = random_cloud(3, rng);
      worst = std::max(worst, (torus_log(a, b) + torus_log(b, a)).cwiseAbs().maxCoeff());
    }
    return bound(worst, 1e-12);
  });
  check("flowmatch.meanfree_zero_mean", [&] {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const int n = 1 + i % 8;
      worst = std::max(worst, cond_vf_torus_meanfree(random_cloud(n, rng), random_cloud(n, rng))
                                  .colwise()
                                  .sum()
                                  .cwiseAbs()
                                  .maxCoeff() /
                                  n);
    }
    return bound(worst, 1e-12);
  });
  check("flowmatch.meanfree_translation_invariance", [&] {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const int n = 1 + i % 8;
      const TorusCloud a = random_cloud(n, rng), b = random_cloud(n, rng);
      const Eigen::RowVector3d tau(u(rng), u(rng), u(rng));
      FracMatrix fa = a.coords(), fb = b.coords();
      fa.rowwise() += tau;
      fb.rowwise() += tau;
      const TorusTangent v0 = cond_vf_torus_meanfree(a, b);
      const TorusTangent v1 = cond_vf_torus_meanfree(TorusCloud(fa), TorusCloud(fb));
      worst = std::max(worst, (v0 - v1).cwiseAbs().maxCoeff());
    }
    return bound(worst, 1e-12);
  });
  check("crystal.analog_bits_roundtrip", [&] {
    std::vector<int> all(kNumClasses);
    std::iota(all.begin(), all.end(), 0);
    const DecodedAtoms d = decode_atoms(encode_atoms(all));
    return std::make_pair(d.ok() && d.kinds == all, std::string("all 100 classes"));
  });
  check("crystal.lattice_roundtrip", [&] {
    double worst = 0.0;
    std::uniform_real_distribution<double> len(2.0, 10.0), ang(70.0, 110.0);
    for (int i = 0; i < 1000; ++i) {
      const LatticeParams l{len(rng), len(rng), len(rng), ang(rng), ang(rng), ang(rng)};
      if (!lattice_is_valid(l)) continue;
      const LatticeParams r = params_from_matrix(matrix_from_params(l));
      worst = std::max({worst, std::abs(r.a - l.a), std::abs(r.b - l.b), std::abs(r.c - l.c),
                        std::abs(r.alpha - l.alpha), std::abs(r.beta - l.beta), std::abs(r.gamma - l.gamma)});
    }
    return bound(worst, 1e-9);
  });
  check("crystal.angle_transform_inverse", [&] {
    double worst = 0.0;
    std::uniform_real_distribution<double> ang(60.001, 119.999);
    for (int i = 0; i < 1000; ++i) {
      const double a = ang(rng);
      worst = std::max(worst, std::abs(angle_from_unconstrained(angle_to_unconstrained(a)) - a));
    }
    return bound(worst, 1e-10);
  });
  check("basedist.lognormal_mle", [&] {
    std::vector<Eigen::Vector3d> lengths;
    std::uniform_real_distribution<double> len(2.0, 12.0);
    for (int i = 0; i < 200; ++i) lengths.emplace_back(len(rng), len(rng), len(rng));
    const LengthPrior p = fit_length_prior(lengths);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& l : lengths) mean += l.array().log().matrix();
    mean /= static_cast<double>(lengths.size());
    return bound((p.loc - mean).cwiseAbs().maxCoeff(), 1e-12);
  });
  check("net.csp_equivariance", [&] { return bound(net_symmetry_error(Mode::CSP, rng), 1e-10); });
  check("net.dng_equivariance", [&] { return bound(net_symmetry_error(Mode::DNG, rng), 1e-10); });
  check("net.gradient_check", [&] { return bound(gradient_check_error(rng), 1e-4); });
  check("net.checkpoint_roundtrip", [&] {
    NetConfig cfg;
    cfg.hidden_dim = 8;
    cfg.layers = 1;
    const ModelParams p = ModelParams::initialize(cfg, rng);
    const std::string bytes = serialize_checkpoint(p, {"hash", seed, "x=1"});
    const ModelParams q = deserialize_checkpoint(bytes);
    return std::make_pair(serialize_checkpoint(q, {"hash", seed, "x=1"}) == bytes, std::string("bitwise"));
  });
  check("engine.conditional_oracle", [&] {
    double worst_f = 0.0, worst_l = 0.0;
    LengthPrior prior;
    prior.loc.setConstant(std::log(5.0));
    prior.scale.setConstant(0.2);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 1 << (trial % 4);
      const FlowState c0 = base_state(std::vector<int>(static_cast<std::size_t>(n), 0), n, Mode::CSP, prior, rng);
      const FlowState c1 = base_state(std::vector<int>(static_cast<std::size_t>(n), 0), n, Mode::CSP, prior, rng);
      const FlowState end = integrate(ExactConditionalField(c1), c0, {200, 0.0, {}}, false).states.back();
      const TorusTangent d = torus_log(c1.frac, end.frac);
      worst_f = std::max(worst_f, (d.rowwise() - d.row(0)).cwiseAbs().maxCoeff());
      worst_l = std::max(worst_l, (end.lattice - c1.lattice).cwiseAbs().maxCoeff());
    }
    return std::make_pair(worst_f < 1e-3 && worst_l < 1e-6,
                          fmt::format("f error {:.3g}, l error {:.3g}", worst_f, worst_l));
  });
  check("engine.zero_slope_is_plain_euler", [&] {
    LengthPrior prior;
    const FlowState c0 = base_state({0, 1, 2}, 3, Mode::CSP, prior, rng);
    const FlowState c1 = base_state({0, 1, 2}, 3, Mode::CSP, prior, rng);
    const ExactConditionalField field(c1);
    const FlowState a = integrate(field, c0, {20, 0.0, {false, true, true}}, false).states.back();
    const FlowState b = integrate(field, c0, {20, 0.0, {}}, false).states.back();
    const bool same = a.frac.coords() == b.frac.coords() && a.lattice == b.lattice;
    return std::make_pair(same, std::string("bitwise"));
  });
  check("metrics.matcher_symmetry_ops", [&] {
    double worst = 0.0;
    const std::vector<Crystal> family = perovskite_family(20, rng);
    for (const Crystal& c : family) {
      std::vector<int> order(static_cast<std::size_t>(c.num_atoms()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      const Crystal moved =
          apply_symmetry(apply_symmetry(c, Permutation{order}), Translation{Eigen::Vector3d(u(rng), u(rng), u(rng)) - Eigen::Vector3d::Constant(0.5)});
      const auto r = match_structures(c, moved);
      worst = std::max(worst, r ? *r : 1.0);
    }
    return bound(worst, 1e-9);
  });
  check("metrics.wasserstein_cases", [&] {
    const double a = wasserstein_1d({0.0}, {1.0});
    const double b = wasserstein_1d({0.0, 1.0}, {0.0, 3.0});
    return std::make_pair(std::abs(a - 1) < 1e-15 && std::abs(b - 1) < 1e-15, fmt::format("{} {}", a, b));
  });
  check("metrics.structural_validity_images", [&] {
    const Crystal big({0}, TorusCloud(FracMatrix::Zero(1, 3)), {5, 5, 5, 90, 90, 90});
    const Crystal small({0}, TorusCloud(FracMatrix::Zero(1, 3)), {0.4, 0.4, 0.4, 90, 90, 90});
    return std::make_pair(structural_validity(big) && !structural_validity(small), std::string("5 A and 0.4 A cubes"));
  });
  check("metrics.rate_cost", [&] {
    const RateCost r = rate_cost(506, 10000, 1000);
    return std::make_pair(std::abs(r.rate - 0.0506) < 1e-15 && std::abs(r.cost - 1000 / 0.0506) < 1e-9,
                          fmt::format("rate {} cost {:.1f}", r.rate, r.cost));
  });
  return out;
}

}  // namespace flowcryst
