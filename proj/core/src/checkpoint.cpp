#include "flowcryst/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'F', 'C', 'R', 'Y', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_double(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double real() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::Io, "truncated checkpoint");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

template <typename V>
void put_vec(std::string& out, const V& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_double(out, v[i]);
}

template <typename V>
void get_vec(Reader& r, V& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.real();
}

json config_json(const NetConfig& c) {
  return {{"mode", c.mode == Mode::CSP ? "csp" : "dng"},
          {"hidden_dim", c.hidden_dim},
          {"layers", c.layers},
          {"n_freq", c.n_freq},
          {"time_embed_dim", c.time_embed_dim},
          {"layer_norm", c.layer_norm},
          {"activation", c.activation},
          {"max_atoms", c.max_atoms},
          {"count_embed_dim", c.count_embed_dim}};
}

NetConfig config_from(const json& j) {
  NetConfig c;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode != "csp" && mode != "dng") fail(ErrorCode::Io, "unknown mode in checkpoint: " + mode);
  c.mode = mode == "csp" ? Mode::CSP : Mode::DNG;
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.n_freq = j.at("n_freq").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.layer_norm = j.at("layer_norm").get<bool>();
  c.activation = j.at("activation").get<std::string>();
  c.max_atoms = j.at("max_atoms").get<int>();
  c.count_embed_dim = j.at("count_embed_dim").get<int>();
  c.validate();
  return c;
}

}  // namespace

std::string net_config_to_json(const NetConfig& config) { return config_json(config).dump(); }

NetConfig net_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("bad network config: ") + e.what());
  }
}

std::string serialize_checkpoint(const ModelParams& params, const CheckpointMeta& meta) {
  json layout = json::array();
  for (const ParamBlock& b : params.layout.blocks()) layout.push_back({b.name, b.rows, b.cols, b.offset});
  const json header = {{"format", "flowcryst-checkpoint"},
                       {"config", config_json(params.config)},
                       {"layout", layout},
                       {"parameter_count", params.values.size()},
                       {"config_hash", meta.config_hash},
                       {"seed", meta.seed},
                       {"run_config", meta.run_config}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, kVersion);
  put_u64(out, text.size());
  out += text;
  const ZScoreStats& z = params.zscore;
  put_vec(out, z.lattice_mean);
  put_vec(out, z.lattice_std);
  put_vec(out, z.frac_mean);
  put_vec(out, z.frac_std);
  put_vec(out, z.dl_mean);
  put_vec(out, z.dl_std);
  put_vec(out, params.values);
  return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes, CheckpointMeta* meta) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) fail(ErrorCode::Io, "not a checkpoint file");
  const std::uint64_t version = r.u64();
  if (version != kVersion) fail(ErrorCode::Io, "unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t header_len = r.u64();
  json header;
  try {
    header = json::parse(r.raw(header_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("corrupt checkpoint header: ") + e.what());
  }

  ModelParams p;
  try {
    p = ModelParams::zeros(config_from(header.at("config")));
    const json& layout = header.at("layout");
    if (layout.size() != p.layout.blocks().size()) fail(ErrorCode::Io, "checkpoint layout does not match config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const ParamBlock& b = p.layout.blocks()[i];
      const ParamBlock stored{layout[i][0].get<std::string>(), layout[i][1].get<int>(), layout[i][2].get<int>(),
                              layout[i][3].get<Eigen::Index>()};
      if (!(stored == b)) fail(ErrorCode::Io, "checkpoint layout mismatch at block " + stored.name);
    }
    if (header.at("parameter_count").get<Eigen::Index>() != p.values.size()) {
      fail(ErrorCode::Io, "checkpoint parameter count mismatch");
    }
    if (meta) {
      meta->config_hash = header.at("config_hash").get<std::string>();
      meta->seed = header.at("seed").get<std::uint64_t>();
      meta->run_config = header.at("run_config").get<std::string>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("corrupt checkpoint header: ") + e.what());
  }
  ZScoreStats& z = p.zscore;
  get_vec(r, z.lattice_mean);
  get_vec(r, z.lattice_std);
  get_vec(r, z.frac_mean);
  get_vec(r, z.frac_std);
  get_vec(r, z.dl_mean);
  get_vec(r, z.dl_std);
  get_vec(r, p.values);
  if (!r.done()) fail(ErrorCode::Io, "trailing bytes in checkpoint");
  if (!p.values.allFinite()) fail(ErrorCode::Io, "checkpoint holds non-finite parameters");
  return p;
}

void save_checkpoint(const std::string& path, const ModelParams& params, const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  const std::string bytes = serialize_checkpoint(params, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), meta);
}

}  // namespace flowcryst
