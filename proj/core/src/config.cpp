#include "flowcryst/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <sstream>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) fail(ErrorCode::Configuration, "bad value for " + key + ": '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  // from_chars for doubles is missing from some standard libraries; strtod is exact enough.
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
    fail(ErrorCode::Configuration, "bad value for " + key + ": '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorCode::Configuration, "bad boolean for " + key + ": '" + value + "'");
}

Mode parse_mode(const std::string& value) {
  if (value == "csp") return Mode::CSP;
  if (value == "dng") return Mode::DNG;
  fail(ErrorCode::Configuration, "mode must be csp or dng, got '" + value + "'");
}

std::string real(double v) { return fmt::format("{:.17g}", v); }

void apply(Settings& s, const std::string& key, const std::string& value) {
  RunConfig& r = s.run;
  NetConfig& n = s.net;
  if (key == "mode") {
    // handled by settings_from
  } else if (key == "learning_rate") {
    r.learning_rate = parse_real(key, value);
  } else if (key == "weight_decay") {
    r.weight_decay = parse_real(key, value);
  } else if (key == "grad_clip") {
    r.grad_clip = parse_real(key, value);
  } else if (key == "epochs") {
    r.epochs = parse_number<int>(key, value);
  } else if (key == "batch_size") {
    r.batch_size = parse_number<int>(key, value);
  } else if (key == "max_steps") {
    r.max_steps = parse_number<int>(key, value);
  } else if (key == "lambda_a") {
    r.weights.lambda_a = parse_real(key, value);
  } else if (key == "lambda_f") {
    r.weights.lambda_f = parse_real(key, value);
  } else if (key == "lambda_l") {
    r.weights.lambda_l = parse_real(key, value);
  } else if (key == "lambda_sce") {
    r.weights.lambda_sce = parse_real(key, value);
  } else if (key == "steps") {
    r.steps = parse_number<int>(key, value);
  } else if (key == "slope") {
    r.slope = parse_real(key, value);
  } else if (key == "anneal") {
    r.anneal = parse_anneal(value);
  } else if (key == "seed") {
    r.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "threads") {
    r.threads = parse_number<int>(key, value);
  } else if (key == "hidden_dim") {
    n.hidden_dim = parse_number<int>(key, value);
  } else if (key == "layers") {
    n.layers = parse_number<int>(key, value);
  } else if (key == "n_freq") {
    n.n_freq = parse_number<int>(key, value);
  } else if (key == "time_embed_dim") {
    n.time_embed_dim = parse_number<int>(key, value);
  } else if (key == "layer_norm") {
    n.layer_norm = parse_bool(key, value);
  } else if (key == "activation") {
    n.activation = value;
  } else if (key == "max_atoms") {
    n.max_atoms = parse_number<int>(key, value);
  } else if (key == "count_embed_dim") {
    n.count_embed_dim = parse_number<int>(key, value);
  } else {
    fail(ErrorCode::Configuration, "unknown config key '" + key + "'");
  }
}

}  // namespace

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries out;
  std::stringstream ss(text);
  std::string line;
  int no = 0;
  while (std::getline(ss, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Configuration, "config line " + std::to_string(no) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

Settings settings_from(const ConfigEntries& entries) {
  Mode mode = Mode::CSP;
  if (auto it = entries.find("mode"); it != entries.end()) mode = parse_mode(it->second);
  Settings s;
  s.run = RunConfig::defaults(mode);
  s.net.mode = mode;
  for (const auto& [k, v] : entries) apply(s, k, v);
  s.run.validate();
  s.net.validate();
  return s;
}

std::vector<std::pair<std::string, std::string>> config_entries(const Settings& s) {
  const RunConfig& r = s.run;
  const NetConfig& n = s.net;
  std::vector<std::pair<std::string, std::string>> out = {
      {"activation", n.activation},
      {"anneal", to_string(r.anneal)},
      {"batch_size", std::to_string(r.batch_size)},
      {"count_embed_dim", std::to_string(n.count_embed_dim)},
      {"epochs", std::to_string(r.epochs)},
      {"grad_clip", real(r.grad_clip)},
      {"hidden_dim", std::to_string(n.hidden_dim)},
      {"lambda_a", real(r.weights.lambda_a)},
      {"lambda_f", real(r.weights.lambda_f)},
      {"lambda_l", real(r.weights.lambda_l)},
      {"lambda_sce", real(r.weights.lambda_sce)},
      {"layer_norm", n.layer_norm ? "true" : "false"},
      {"layers", std::to_string(n.layers)},
      {"learning_rate", real(r.learning_rate)},
      {"max_atoms", std::to_string(n.max_atoms)},
      {"max_steps", std::to_string(r.max_steps)},
      {"mode", r.mode == Mode::CSP ? "csp" : "dng"},
      {"n_freq", std::to_string(n.n_freq)},
      {"seed", std::to_string(r.seed)},
      {"slope", real(r.slope)},
      {"steps", std::to_string(r.steps)},
      {"threads", std::to_string(r.threads)},
      {"time_embed_dim", std::to_string(n.time_embed_dim)},
      {"weight_decay", real(r.weight_decay)},
  };
  return out;
}

std::string canonical_config(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : config_entries(s)) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const Settings& s) { return fmt::format("{:016x}", fnv1a64(canonical_config(s))); }

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("FLOWCRYST_SEED");
  if (!v || !*v) return std::nullopt;
  return parse_number<std::uint64_t>("FLOWCRYST_SEED", v);
}

}  // namespace flowcryst
