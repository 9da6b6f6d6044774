#include "flowcryst/net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "flowcryst/crystal.hpp"
#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Eigen::MatrixXd>;
using GMap = Eigen::Map<Eigen::MatrixXd>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLayerNormEps = 1e-5;
constexpr int kShards = 8;

// ---------------------------------------------------------------------------
// Parameter block lookup

struct LayerBlocks {
  const ParamBlock* ln_g = nullptr;
  const ParamBlock* ln_b = nullptr;
  const ParamBlock* m_wi = nullptr;
  const ParamBlock* m_wj = nullptr;
  const ParamBlock* m_wl = nullptr;
  const ParamBlock* m_we = nullptr;
  const ParamBlock* m_wt = nullptr;
  const ParamBlock* m_wz = nullptr;
  const ParamBlock* m_wc = nullptr;
  const ParamBlock* m_b1 = nullptr;
  const ParamBlock* m_w2 = nullptr;
  const ParamBlock* m_b2 = nullptr;
  const ParamBlock* h_wh = nullptr;
  const ParamBlock* h_wm = nullptr;
  const ParamBlock* h_wt = nullptr;
  const ParamBlock* h_b1 = nullptr;
  const ParamBlock* h_w2 = nullptr;
  const ParamBlock* h_b2 = nullptr;
};

struct NetBlocks {
  const ParamBlock* embed = nullptr;
  const ParamBlock* a0_w = nullptr;
  const ParamBlock* a0_b = nullptr;
  const ParamBlock* count = nullptr;
  std::vector<LayerBlocks> layers;
  const ParamBlock* lnf_g = nullptr;
  const ParamBlock* lnf_b = nullptr;
  const ParamBlock* f_w = nullptr;
  const ParamBlock* f_b = nullptr;
  const ParamBlock* l_w = nullptr;
  const ParamBlock* l_b = nullptr;
  const ParamBlock* a_w = nullptr;
  const ParamBlock* a_b = nullptr;
};

NetBlocks resolve(const ParamLayout& layout, const NetConfig& cfg) {
  NetBlocks b;
  auto get = [&](const std::string& name) { return &layout.block(name); };
  const bool dng = cfg.mode == Mode::DNG;
  if (dng) {
    b.a0_w = get("a0.W");
    b.a0_b = get("a0.b");
    b.count = get("count_embed");
  } else {
    b.embed = get("embed");
  }
  for (int s = 0; s < cfg.layers; ++s) {
    const std::string p = "layer" + std::to_string(s) + ".";
    LayerBlocks lb;
    if (cfg.layer_norm) {
      lb.ln_g = get(p + "ln.g");
      lb.ln_b = get(p + "ln.b");
    }
    lb.m_wi = get(p + "msg.Wi");
    lb.m_wj = get(p + "msg.Wj");
    lb.m_wl = get(p + "msg.Wl");
    lb.m_we = get(p + "msg.We");
    lb.m_wt = get(p + "msg.Wt");
    if (dng) {
      lb.m_wz = get(p + "msg.Wz");
      lb.m_wc = get(p + "msg.Wc");
    }
    lb.m_b1 = get(p + "msg.b1");
    lb.m_w2 = get(p + "msg.W2");
    lb.m_b2 = get(p + "msg.b2");
    lb.h_wh = get(p + "node.Wh");
    lb.h_wm = get(p + "node.Wm");
    lb.h_wt = get(p + "node.Wt");
    lb.h_b1 = get(p + "node.b1");
    lb.h_w2 = get(p + "node.W2");
    lb.h_b2 = get(p + "node.b2");
    b.layers.push_back(lb);
  }
  if (cfg.layer_norm) {
    b.lnf_g = get("final_ln.g");
    b.lnf_b = get("final_ln.b");
  }
  b.f_w = get("head_f.W");
  b.f_b = get("head_f.b");
  b.l_w = get("head_l.W");
  b.l_b = get("head_l.b");
  if (dng) {
    b.a_w = get("head_a.W");
    b.a_b = get("head_a.b");
  }
  return b;
}

CMap view(const Eigen::VectorXd& v, const ParamBlock* b) { return CMap(v.data() + b->offset, b->rows, b->cols); }
GMap view(Eigen::VectorXd& v, const ParamBlock* b) { return GMap(v.data() + b->offset, b->rows, b->cols); }

// ---------------------------------------------------------------------------
// Elementwise pieces

RMat silu(const RMat& x) { return (x.array() / (1.0 + (-x.array()).exp())).matrix(); }

// d silu / dx = s (1 + x (1 - s))
RMat silu_grad(const RMat& x) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
  return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

struct LnCache {
  RMat xhat;
  Eigen::VectorXd rstd;
};

RMat ln_forward(const RMat& x, CMap g, CMap b, LnCache& cache) {
  const Eigen::Index rows = x.rows(), h = x.cols();
  cache.xhat.resize(rows, h);
  cache.rstd.resize(rows);
  RMat y(rows, h);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const Eigen::RowVectorXd xc = x.row(r).array() - mu;
    const double var = xc.squaredNorm() / static_cast<double>(h);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[r] = rstd;
    cache.xhat.row(r) = xc * rstd;
    y.row(r) = cache.xhat.row(r).cwiseProduct(g.col(0).transpose()) + b.col(0).transpose();
  }
  return y;
}

RMat ln_backward(const RMat& dy, const LnCache& cache, CMap g, GMap dg, GMap db) {
  const Eigen::Index rows = dy.rows(), h = dy.cols();
  RMat dx(rows, h);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dg.col(0) += dy.row(r).cwiseProduct(cache.xhat.row(r)).transpose();
    db.col(0) += dy.row(r).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.col(0).transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = cache.rstd[r] * (dxhat.array() - m1 - cache.xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Forward / backward of one crystal

struct LayerCache {
  LnCache ln;
  RMat hn;
  RMat pre;
  RMat act;
  RMat pre2;
  RMat msg_sum;
  RMat q;
  RMat r;
  RMat q2;
};

struct Cache {
  int n = 0;
  Eigen::VectorXd lz;
  Eigen::VectorXd temb;
  RMat edge;
  RMat cosf;
  int count_index = 0;
  std::vector<LayerCache> layers;
  LnCache lnf;
  RMat hf;
  Eigen::VectorXd pool;
};

void check_state(const NetConfig& cfg, const FlowState& s) {
  const int n = s.num_atoms();
  if (n < 1) fail(ErrorCode::Dimension, "empty state");
  if (n > cfg.max_atoms) {
    fail(ErrorCode::Capacity, std::to_string(n) + " atoms exceeds the network cap of " + std::to_string(cfg.max_atoms));
  }
  if (s.mode != cfg.mode) fail(ErrorCode::Configuration, "state mode differs from network mode");
  if (cfg.mode == Mode::CSP) {
    if (static_cast<int>(s.kinds.size()) != n) fail(ErrorCode::Dimension, "CSP state needs one kind per atom");
    for (int k : s.kinds) {
      if (k < 0 || k >= kNumClasses) fail(ErrorCode::Range, "atom class outside [0,100)");
    }
  } else if (s.bits.rows() != n) {
    fail(ErrorCode::Dimension, "DNG state needs n x 7 atom bits");
  }
  if (!s.lattice.allFinite() || !s.bits.allFinite()) fail(ErrorCode::Numeric, "non-finite network input");
}

void build_edges(const NetConfig& cfg, const FlowState& s, Cache& c) {
  const int n = c.n;
  const int w = sinusoid_width(cfg.n_freq);
  const bool dng = cfg.mode == Mode::DNG;
  const FracMatrix& f = s.frac.coords();
  c.edge.resize(static_cast<Eigen::Index>(n) * n, 3 * w);
  Eigen::Matrix3d gram;
  if (dng) {
    c.cosf.setZero(static_cast<Eigen::Index>(n) * n, 3);
    gram = gram_from_params(lattice_from_flow(s.lattice));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Index e = static_cast<Eigen::Index>(i) * n + j;
      Eigen::Vector3d d;
      for (int k = 0; k < 3; ++k) {
        d[k] = dng ? torus_log_scalar(f(i, k), f(j, k)) : f(j, k) - f(i, k);
        for (int q = 0; q <= cfg.n_freq; ++q) {
          const double arg = kTwoPi * q * d[k];
          c.edge(e, k * w + 2 * q) = std::sin(arg);
          c.edge(e, k * w + 2 * q + 1) = std::cos(arg);
        }
      }
      if (dng) {
        // Cosines between the Cartesian edge L d and the lattice vectors L e_k,
        // written with the metric tensor so no orientation is needed.
        const Eigen::Vector3d gd = gram * d;
        const double norm2 = d.dot(gd);
        if (norm2 > 1e-24) {
          for (int k = 0; k < 3; ++k) {
            const double len = std::sqrt(std::abs(gram(k, k)));
            if (len > 0) c.cosf(e, k) = gd[k] / (len * std::sqrt(norm2));
          }
        }
      }
    }
  }
}

TangentState run_forward(const ModelParams& p, const NetBlocks& B, const FlowState& s, double t, Cache& c) {
  const NetConfig& cfg = p.config;
  const Eigen::VectorXd& v = p.values;
  const ZScoreStats& z = p.zscore;
  const bool dng = cfg.mode == Mode::DNG;
  const int n = s.num_atoms();
  c.n = n;
  c.lz = ((s.lattice - z.lattice_mean).array() / z.lattice_std.array()).matrix();
  c.temb = time_embedding(t, cfg.time_embed_dim);
  build_edges(cfg, s, c);

  RMat h(n, cfg.hidden_dim);
  if (dng) {
    const RMat bits = s.bits;
    h = bits * view(v, B.a0_w).transpose();
    h.rowwise() += view(v, B.a0_b).col(0).transpose();
    c.count_index = n;
  } else {
    const CMap emb = view(v, B.embed);
    for (int i = 0; i < n; ++i) h.row(i) = emb.row(s.kinds[static_cast<std::size_t>(i)]);
  }

  c.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const LayerBlocks& lb = B.layers[static_cast<std::size_t>(layer)];
    LayerCache& lc = c.layers[static_cast<std::size_t>(layer)];
    lc.hn = cfg.layer_norm ? ln_forward(h, view(v, lb.ln_g), view(v, lb.ln_b), lc.ln) : h;

    const RMat a = lc.hn * view(v, lb.m_wi).transpose();
    const RMat bj = lc.hn * view(v, lb.m_wj).transpose();
    Eigen::VectorXd g = view(v, lb.m_wl) * c.lz + view(v, lb.m_wt) * c.temb + view(v, lb.m_b1).col(0);
    if (dng) g += view(v, lb.m_wz) * view(v, B.count).row(c.count_index).transpose();

    lc.pre.noalias() = c.edge * view(v, lb.m_we).transpose();
    if (dng) lc.pre.noalias() += c.cosf * view(v, lb.m_wc).transpose();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        lc.pre.row(static_cast<Eigen::Index>(i) * n + j) += a.row(i) + bj.row(j) + g.transpose();
      }
    }
    lc.act = silu(lc.pre);
    lc.pre2.noalias() = lc.act * view(v, lb.m_w2).transpose();
    lc.pre2.rowwise() += view(v, lb.m_b2).col(0).transpose();
    const RMat msg = silu(lc.pre2);
    lc.msg_sum.setZero(n, cfg.hidden_dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) lc.msg_sum.row(i) += msg.row(static_cast<Eigen::Index>(i) * n + j);
    }

    const Eigen::VectorXd gh = view(v, lb.h_wt) * c.temb + view(v, lb.h_b1).col(0);
    lc.q.noalias() = lc.hn * view(v, lb.h_wh).transpose();
    lc.q.noalias() += lc.msg_sum * view(v, lb.h_wm).transpose();
    lc.q.rowwise() += gh.transpose();
    lc.r = silu(lc.q);
    lc.q2.noalias() = lc.r * view(v, lb.h_w2).transpose();
    lc.q2.rowwise() += view(v, lb.h_b2).col(0).transpose();
    h += silu(lc.q2);
  }

  c.hf = cfg.layer_norm ? ln_forward(h, view(v, B.lnf_g), view(v, B.lnf_b), c.lnf) : h;

  TangentState out = TangentState::zeros(n, cfg.mode);
  RMat f_raw = c.hf * view(v, B.f_w).transpose();
  f_raw.rowwise() += view(v, B.f_b).col(0).transpose();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) out.df(i, k) = f_raw(i, k) * z.frac_std[k] + z.frac_mean[k];
  }

  const Eigen::VectorXd mean = c.hf.colwise().mean().transpose();
  if (dng) {
    c.pool.resize(2 * cfg.hidden_dim);
    c.pool << mean, mean * static_cast<double>(n);
  } else {
    c.pool = mean;
  }
  const LatticeVec l_raw = view(v, B.l_w) * c.pool + view(v, B.l_b).col(0);
  out.dl = (l_raw.array() * z.dl_std.array() + z.dl_mean.array()).matrix();

  if (dng) {
    RMat a_raw = c.hf * view(v, B.a_w).transpose();
    a_raw.rowwise() += view(v, B.a_b).col(0).transpose();
    out.da = a_raw;
  }
  if (!out.df.allFinite() || !out.dl.allFinite() || !out.da.allFinite()) {
    fail(ErrorCode::Numeric, "network produced a non-finite velocity");
  }
  return out;
}

void run_backward(const ModelParams& p, const NetBlocks& B, const FlowState& s, const Cache& c,
                  const TangentState& dout, Eigen::VectorXd& grad) {
  const NetConfig& cfg = p.config;
  const Eigen::VectorXd& v = p.values;
  const ZScoreStats& z = p.zscore;
  const bool dng = cfg.mode == Mode::DNG;
  const int n = c.n;
  const int hd = cfg.hidden_dim;

  RMat df_raw(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) df_raw(i, k) = dout.df(i, k) * z.frac_std[k];
  }
  view(grad, B.f_w).noalias() += df_raw.transpose() * c.hf;
  view(grad, B.f_b).col(0) += df_raw.colwise().sum().transpose();
  RMat dhf = df_raw * view(v, B.f_w);

  const LatticeVec dl_raw = (dout.dl.array() * z.dl_std.array()).matrix();
  view(grad, B.l_w).noalias() += dl_raw * c.pool.transpose();
  view(grad, B.l_b).col(0) += dl_raw;
  const Eigen::VectorXd dpool = view(v, B.l_w).transpose() * dl_raw;
  Eigen::RowVectorXd dh_pool = dpool.head(hd).transpose() / static_cast<double>(n);
  if (dng) dh_pool += dpool.tail(hd).transpose();
  dhf.rowwise() += dh_pool;

  if (dng) {
    const RMat da = dout.da;
    view(grad, B.a_w).noalias() += da.transpose() * c.hf;
    view(grad, B.a_b).col(0) += da.colwise().sum().transpose();
    dhf.noalias() += da * view(v, B.a_w);
  }

  RMat dh = cfg.layer_norm
                ? ln_backward(dhf, c.lnf, view(v, B.lnf_g), view(grad, B.lnf_g), view(grad, B.lnf_b))
                : dhf;

  for (int layer = cfg.layers - 1; layer >= 0; --layer) {
    const LayerBlocks& lb = B.layers[static_cast<std::size_t>(layer)];
    const LayerCache& lc = c.layers[static_cast<std::size_t>(layer)];

    // Node update: h_out = h_in + silu(silu(q) W2^T + b2).
    const RMat dq2 = dh.cwiseProduct(silu_grad(lc.q2));
    view(grad, lb.h_w2).noalias() += dq2.transpose() * lc.r;
    view(grad, lb.h_b2).col(0) += dq2.colwise().sum().transpose();
    const RMat dq = (dq2 * view(v, lb.h_w2)).cwiseProduct(silu_grad(lc.q));
    view(grad, lb.h_wh).noalias() += dq.transpose() * lc.hn;
    view(grad, lb.h_wm).noalias() += dq.transpose() * lc.msg_sum;
    const Eigen::VectorXd dgh = dq.colwise().sum().transpose();
    view(grad, lb.h_wt).noalias() += dgh * c.temb.transpose();
    view(grad, lb.h_b1).col(0) += dgh;
    RMat dhn = dq * view(v, lb.h_wh);
    const RMat dmsg_sum = dq * view(v, lb.h_wm);

    // Messages: every edge (i, j) receives the gradient of its node sum.
    RMat dpre2(static_cast<Eigen::Index>(n) * n, hd);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) dpre2.row(static_cast<Eigen::Index>(i) * n + j) = dmsg_sum.row(i);
    }
    dpre2 = dpre2.cwiseProduct(silu_grad(lc.pre2));
    view(grad, lb.m_w2).noalias() += dpre2.transpose() * lc.act;
    view(grad, lb.m_b2).col(0) += dpre2.colwise().sum().transpose();
    const RMat dpre = (dpre2 * view(v, lb.m_w2)).cwiseProduct(silu_grad(lc.pre));

    view(grad, lb.m_we).noalias() += dpre.transpose() * c.edge;
    if (dng) view(grad, lb.m_wc).noalias() += dpre.transpose() * c.cosf;
    RMat da(n, hd), db(n, hd);
    da.setZero();
    db.setZero();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto row = dpre.row(static_cast<Eigen::Index>(i) * n + j);
        da.row(i) += row;
        db.row(j) += row;
      }
    }
    const Eigen::VectorXd dg = dpre.colwise().sum().transpose();
    view(grad, lb.m_wl).noalias() += dg * c.lz.transpose();
    view(grad, lb.m_wt).noalias() += dg * c.temb.transpose();
    view(grad, lb.m_b1).col(0) += dg;
    if (dng) {
      view(grad, lb.m_wz).noalias() += dg * view(v, B.count).row(c.count_index);
      view(grad, B.count).row(c.count_index) += (view(v, lb.m_wz).transpose() * dg).transpose();
    }
    view(grad, lb.m_wi).noalias() += da.transpose() * lc.hn;
    view(grad, lb.m_wj).noalias() += db.transpose() * lc.hn;
    dhn.noalias() += da * view(v, lb.m_wi);
    dhn.noalias() += db * view(v, lb.m_wj);

    if (cfg.layer_norm) {
      dh += ln_backward(dhn, lc.ln, view(v, lb.ln_g), view(grad, lb.ln_g), view(grad, lb.ln_b));
    } else {
      dh += dhn;
    }
  }

  if (dng) {
    const RMat bits = s.bits;
    view(grad, B.a0_w).noalias() += dh.transpose() * bits;
    view(grad, B.a0_b).col(0) += dh.colwise().sum().transpose();
  } else {
    GMap emb = view(grad, B.embed);
    for (int i = 0; i < n; ++i) emb.row(s.kinds[static_cast<std::size_t>(i)]) += dh.row(i);
  }
}

LossTerms item_loss(const ModelParams& p, const NetBlocks& B, const TrainItem& item, const LossWeights& w,
                    Eigen::VectorXd* grad) {
  const Mode mode = p.config.mode;
  Cache cache;
  const FlowState& s = item.path.c_t;
  check_state(p.config, s);
  const TangentState pred = run_forward(p, B, s, item.path.t, cache);
  TangentState dpred;
  LossTerms terms = fm_loss_terms(pred, item.path.target, w, mode, grad ? &dpred : nullptr);
  if (mode == Mode::DNG && w.lambda_sce > 0) {
    BitsMatrix dsce;
    terms.sce = w.lambda_sce * sce_loss(item.a1, pred.da, s.bits, item.path.t, grad ? &dsce : nullptr);
    if (grad) dpred.da += w.lambda_sce * dsce;
  }
  if (!std::isfinite(terms.total())) {
    fail(ErrorCode::Numeric, "non-finite loss (a=" + std::to_string(terms.a) + ", f=" + std::to_string(terms.f) +
                                 ", l=" + std::to_string(terms.l) + ", sce=" + std::to_string(terms.sce) + ")");
  }
  if (grad) run_backward(p, B, s, cache, dpred, *grad);
  return terms;
}

}  // namespace

// ---------------------------------------------------------------------------

NetConfig NetConfig::reference_profile(Mode mode) {
  NetConfig c;
  c.mode = mode;
  c.hidden_dim = 512;
  c.layers = 6;
  c.time_embed_dim = 256;
  c.layer_norm = true;
  return c;
}

void NetConfig::validate() const {
  if (hidden_dim < 1 || layers < 1 || n_freq < 0 || time_embed_dim < 2 || max_atoms < 1 || count_embed_dim < 1) {
    fail(ErrorCode::Configuration, "network dimensions must be positive");
  }
  if (time_embed_dim % 2 != 0) fail(ErrorCode::Configuration, "time_embed_dim must be even");
  if (activation != "silu") fail(ErrorCode::Configuration, "only the silu activation is supported");
}

Eigen::VectorXd sinusoidal_embedding(double x, int n_freq) {
  Eigen::VectorXd e(sinusoid_width(n_freq));
  for (int k = 0; k <= n_freq; ++k) {
    e[2 * k] = std::sin(kTwoPi * k * x);
    e[2 * k + 1] = std::cos(kTwoPi * k * x);
  }
  return e;
}

Eigen::VectorXd time_embedding(double t, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  // Angular frequencies spaced geometrically from 1 to 200 rad per unit time.
  for (int k = 0; k < half; ++k) {
    const double omega = half > 1 ? std::exp(std::log(200.0) * k / (half - 1)) : 1.0;
    e[k] = std::sin(omega * t);
    e[half + k] = std::cos(omega * t);
  }
  return e;
}

ParamLayout::ParamLayout(const NetConfig& cfg) {
  cfg.validate();
  const int h = cfg.hidden_dim;
  const int t = cfg.time_embed_dim;
  const int e = 3 * sinusoid_width(cfg.n_freq);
  const bool dng = cfg.mode == Mode::DNG;
  if (dng) {
    add("a0.W", h, kBits);
    add("a0.b", h, 1);
    add("count_embed", cfg.max_atoms + 1, cfg.count_embed_dim);
  } else {
    add("embed", kNumClasses, h);
  }
  for (int s = 0; s < cfg.layers; ++s) {
    const std::string p = "layer" + std::to_string(s) + ".";
    if (cfg.layer_norm) {
      add(p + "ln.g", h, 1);
      add(p + "ln.b", h, 1);
    }
    add(p + "msg.Wi", h, h);
    add(p + "msg.Wj", h, h);
    add(p + "msg.Wl", h, 6);
    add(p + "msg.We", h, e);
    add(p + "msg.Wt", h, t);
    if (dng) {
      add(p + "msg.Wz", h, cfg.count_embed_dim);
      add(p + "msg.Wc", h, 3);
    }
    add(p + "msg.b1", h, 1);
    add(p + "msg.W2", h, h);
    add(p + "msg.b2", h, 1);
    add(p + "node.Wh", h, h);
    add(p + "node.Wm", h, h);
    add(p + "node.Wt", h, t);
    add(p + "node.b1", h, 1);
    add(p + "node.W2", h, h);
    add(p + "node.b2", h, 1);
  }
  if (cfg.layer_norm) {
    add("final_ln.g", h, 1);
    add("final_ln.b", h, 1);
  }
  add("head_f.W", 3, h);
  add("head_f.b", 3, 1);
  add("head_l.W", 6, dng ? 2 * h : h);
  add("head_l.b", 6, 1);
  if (dng) {
    add("head_a.W", kBits, h);
    add("head_a.b", kBits, 1);
  }
}

void ParamLayout::add(std::string name, int rows, int cols) {
  ParamBlock b{name, rows, cols, total_};
  total_ += b.size();
  index_.emplace(name, blocks_.size());
  blocks_.push_back(std::move(b));
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::Configuration, "unknown parameter block " + name);
  return blocks_[it->second];
}

void ZScoreStats::floor_std() {
  lattice_std = lattice_std.cwiseMax(kStdFloor);
  frac_std = frac_std.cwiseMax(kStdFloor);
  dl_std = dl_std.cwiseMax(kStdFloor);
}

ZScoreStats fit_zscore(const std::vector<PathSample>& samples) {
  if (samples.empty()) fail(ErrorCode::InsufficientData, "z-score fit needs samples");
  ZScoreStats z;
  const double m = static_cast<double>(samples.size());
  LatticeVec lsum = LatticeVec::Zero(), lsq = LatticeVec::Zero();
  LatticeVec dsum = LatticeVec::Zero(), dsq = LatticeVec::Zero();
  Eigen::Vector3d fsum = Eigen::Vector3d::Zero(), fsq = Eigen::Vector3d::Zero();
  double fcount = 0;
  for (const auto& s : samples) {
    lsum += s.c_t.lattice;
    dsum += s.target.dl;
    fsum += s.target.df.colwise().sum().transpose();
    fcount += static_cast<double>(s.target.df.rows());
  }
  z.lattice_mean = lsum / m;
  z.dl_mean = dsum / m;
  z.frac_mean = fsum / fcount;
  for (const auto& s : samples) {
    lsq += (s.c_t.lattice - z.lattice_mean).array().square().matrix();
    dsq += (s.target.dl - z.dl_mean).array().square().matrix();
    fsq += (s.target.df.rowwise() - z.frac_mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  z.lattice_std = (lsq / m).array().sqrt().matrix();
  z.dl_std = (dsq / m).array().sqrt().matrix();
  z.frac_std = (fsq / fcount).array().sqrt().matrix();
  z.floor_std();
  return z;
}

ModelParams ModelParams::zeros(const NetConfig& config) {
  ModelParams p;
  p.config = config;
  p.layout = ParamLayout(config);
  p.values = Eigen::VectorXd::Zero(p.layout.total_size());
  return p;
}

ModelParams ModelParams::initialize(const NetConfig& config, Rng& rng) {
  ModelParams p = zeros(config);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const ParamBlock& b : p.layout.blocks()) {
    GMap m = view(p.values, &b);
    const bool is_gain = b.name.ends_with("ln.g");
    const bool is_bias = b.cols == 1 && !is_gain;
    if (is_gain) {
      m.setOnes();
    } else if (is_bias) {
      m.setZero();
    } else if (b.name == "embed" || b.name == "count_embed") {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(b.cols));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * unit(rng);
    }
  }
  return p;
}

Eigen::Map<Eigen::MatrixXd> ModelParams::block(const std::string& name) {
  return view(values, &layout.block(name));
}

Eigen::Map<const Eigen::MatrixXd> ModelParams::block(const std::string& name) const {
  return view(values, &layout.block(name));
}

TangentState forward(const ModelParams& params, const FlowState& c_t, double t) {
  check_state(params.config, c_t);
  const NetBlocks blocks = resolve(params.layout, params.config);
  Cache cache;
  return run_forward(params, blocks, c_t, t, cache);
}

BatchLoss loss_and_gradient(const ModelParams& params, const std::vector<TrainItem>& batch,
                            const LossWeights& weights, Eigen::VectorXd& grad, int threads) {
  if (batch.empty()) fail(ErrorCode::InsufficientData, "empty minibatch");
  const NetBlocks blocks = resolve(params.layout, params.config);
  const Eigen::Index np = params.layout.total_size();
  const int total = static_cast<int>(batch.size());
  const int shards = std::min(kShards, total);

  std::vector<Eigen::VectorXd> shard_grad(static_cast<std::size_t>(shards), Eigen::VectorXd::Zero(np));
  std::vector<LossTerms> shard_terms(static_cast<std::size_t>(shards));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(shards));

  auto run_shard = [&](int s) {
    try {
      const int begin = s * total / shards;
      const int end = (s + 1) * total / shards;
      for (int i = begin; i < end; ++i) {
        shard_terms[static_cast<std::size_t>(s)] +=
            item_loss(params, blocks, batch[static_cast<std::size_t>(i)], weights, &shard_grad[static_cast<std::size_t>(s)]);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(s)] = std::current_exception();
    }
  };

  const int workers = std::clamp(threads, 1, shards);
  if (workers == 1) {
    for (int s = 0; s < shards; ++s) run_shard(s);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int s = w; s < shards; s += workers) run_shard(s);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const double inv = 1.0 / static_cast<double>(total);
  grad = Eigen::VectorXd::Zero(np);
  BatchLoss out;
  for (int s = 0; s < shards; ++s) {
    grad += shard_grad[static_cast<std::size_t>(s)];
    out.terms += shard_terms[static_cast<std::size_t>(s)];
  }
  grad *= inv;
  out.terms.a *= inv;
  out.terms.f *= inv;
  out.terms.l *= inv;
  out.terms.sce *= inv;
  return out;
}

BatchLoss batch_loss(const ModelParams& params, const std::vector<TrainItem>& batch, const LossWeights& weights) {
  if (batch.empty()) fail(ErrorCode::InsufficientData, "empty minibatch");
  const NetBlocks blocks = resolve(params.layout, params.config);
  BatchLoss out;
  for (const auto& item : batch) out.terms += item_loss(params, blocks, item, weights, nullptr);
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.terms.a *= inv;
  out.terms.f *= inv;
  out.terms.l *= inv;
  out.terms.sce *= inv;
  return out;
}

}  // namespace flowcryst
