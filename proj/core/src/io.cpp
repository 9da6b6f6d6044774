#include "flowcryst/io.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "flowcryst/error.hpp"

namespace flowcryst {

namespace {

using nlohmann::json;

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string quoted(const std::string& s) { return json(s).dump(); }

std::vector<int> classes_from(const json& j) {
  std::vector<int> kinds;
  for (const auto& z : j) {
    if (!z.is_number_integer()) fail(ErrorCode::Data, "atomic_numbers must be integers");
    const int zi = z.get<int>();
    if (zi < 1 || zi > kNumClasses) fail(ErrorCode::Range, "atomic number " + std::to_string(zi) + " outside [1,100]");
    kinds.push_back(zi - 1);
  }
  if (kinds.empty()) fail(ErrorCode::Data, "record has no atoms");
  return kinds;
}

LatticeParams lattice_from(const json& j) {
  if (j.is_object()) {
    return {j.at("a").get<double>(),     j.at("b").get<double>(),    j.at("c").get<double>(),
            j.at("alpha").get<double>(), j.at("beta").get<double>(), j.at("gamma").get<double>()};
  }
  if (j.is_array() && j.size() == 3) {
    LatticeMatrix m;
    for (int r = 0; r < 3; ++r) {
      if (!j[static_cast<std::size_t>(r)].is_array() || j[static_cast<std::size_t>(r)].size() != 3) {
        fail(ErrorCode::Data, "lattice matrix must be 3x3");
      }
      for (int c = 0; c < 3; ++c) m.cols(c, r) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return params_from_matrix(m);
  }
  fail(ErrorCode::Data, "lattice must be an object of six parameters or a 3x3 matrix");
}

std::string kinds_json(const std::vector<int>& kinds) {
  std::string out = "[";
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(kinds[i] + 1);
  }
  return out + "]";
}

std::string crystal_body(const Crystal& c) {
  std::string out = "\"atomic_numbers\":" + kinds_json(c.kinds) + ",\"frac_coords\":[";
  for (int i = 0; i < c.num_atoms(); ++i) {
    if (i) out += ',';
    out += "[" + num(c.frac(i, 0)) + "," + num(c.frac(i, 1)) + "," + num(c.frac(i, 2)) + "]";
  }
  const LatticeParams& l = c.lattice;
  out += "],\"lattice\":{\"a\":" + num(l.a) + ",\"b\":" + num(l.b) + ",\"c\":" + num(l.c) + ",\"alpha\":" +
         num(l.alpha) + ",\"beta\":" + num(l.beta) + ",\"gamma\":" + num(l.gamma) + "}";
  return out;
}

bool is_header(const json& j) { return j.is_object() && j.contains("header"); }

template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(no, line);
  }
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  fail(ErrorCode::Data, "unknown split '" + text + "'");
}

CrystalRecord parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::Data, std::string("malformed JSON: ") + e.what());
  }
  try {
    CrystalRecord r;
    r.id = j.value("id", std::string());
    std::vector<int> kinds = classes_from(j.at("atomic_numbers"));
    const json& fc = j.at("frac_coords");
    if (!fc.is_array() || fc.size() != kinds.size()) fail(ErrorCode::Data, "frac_coords must have one row per atom");
    FracMatrix f(static_cast<Eigen::Index>(kinds.size()), 3);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      if (!fc[i].is_array() || fc[i].size() != 3) fail(ErrorCode::Data, "each frac_coords row needs 3 values");
      for (int k = 0; k < 3; ++k) f(static_cast<Eigen::Index>(i), k) = fc[i][static_cast<std::size_t>(k)].get<double>();
    }
    r.crystal = Crystal(std::move(kinds), TorusCloud(std::move(f)), lattice_from(j.at("lattice")));
    if (j.contains("split") && !j["split"].is_null()) r.split = parse_split(j["split"].get<std::string>());
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::Data, std::string("bad record: ") + e.what());
  }
}

std::string record_to_json(const CrystalRecord& record) {
  std::string out = "{\"id\":" + quoted(record.id) + "," + crystal_body(record.crystal);
  if (record.split) out += ",\"split\":\"" + to_string(*record.split) + "\"";
  return out + "}";
}

const std::vector<CrystalRecord>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train:
      return train;
    case Split::Val:
      return val;
    case Split::Test:
      return test;
  }
  return train;
}

Dataset make_dataset(std::vector<CrystalRecord> records, const SplitSpec& spec) {
  if (!(spec.train >= 0 && spec.val >= 0 && spec.train + spec.val <= 1.0)) {
    fail(ErrorCode::Configuration, "split fractions must be nonnegative and sum to at most 1");
  }
  Dataset d;
  std::vector<CrystalRecord> unsplit;
  for (auto& r : records) {
    if (!r.split) {
      unsplit.push_back(std::move(r));
      continue;
    }
    switch (*r.split) {
      case Split::Train:
        d.train.push_back(std::move(r));
        break;
      case Split::Val:
        d.val.push_back(std::move(r));
        break;
      case Split::Test:
        d.test.push_back(std::move(r));
        break;
    }
  }
  const auto n = static_cast<double>(unsplit.size());
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * n));
  const auto n_val = std::min(unsplit.size() - n_train, static_cast<std::size_t>(std::llround(spec.val * n)));
  for (std::size_t i = 0; i < unsplit.size(); ++i) {
    CrystalRecord& r = unsplit[i];
    if (i < n_train) {
      r.split = Split::Train;
      d.train.push_back(std::move(r));
    } else if (i < n_train + n_val) {
      r.split = Split::Val;
      d.val.push_back(std::move(r));
    } else {
      r.split = Split::Test;
      d.test.push_back(std::move(r));
    }
  }
  std::vector<int> sizes;
  for (const auto& r : d.train) sizes.push_back(r.crystal.num_atoms());
  if (!sizes.empty()) d.counts = count_atoms(sizes);
  return d;
}

Dataset load_dataset(const std::string& path, const SplitSpec& spec) {
  std::vector<CrystalRecord> records;
  std::vector<RejectedLine> rejected;
  int lines = 0, malformed = 0;
  for_each_line(path, [&](int no, const std::string& line) {
    ++lines;
    try {
      records.push_back(parse_record(line));
    } catch (const Error& e) {
      rejected.push_back({no, e.what()});
      // Domain rejections (for example an angle outside the reduced range)
      // are per-record; only unparseable lines count towards the abort.
      if (e.code() == ErrorCode::Data || e.code() == ErrorCode::Range) ++malformed;
    }
  });
  if (lines == 0) fail(ErrorCode::InsufficientData, "dataset " + path + " is empty");
  if (malformed > spec.max_malformed * lines) {
    fail(ErrorCode::Data, std::to_string(malformed) + " of " + std::to_string(lines) + " lines in " + path +
                              " are malformed; first: line " + std::to_string(rejected.front().line) + ": " +
                              rejected.front().reason);
  }
  if (records.empty()) fail(ErrorCode::InsufficientData, "dataset " + path + " has no valid records");
  Dataset d = make_dataset(std::move(records), spec);
  d.rejected = std::move(rejected);
  d.lines = lines;
  return d;
}

std::vector<Crystal> crystals_of(const std::vector<CrystalRecord>& records) {
  std::vector<Crystal> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.crystal);
  return out;
}

std::string header_json(const std::string& kind, const std::string& config_hash, std::uint64_t seed,
                        const std::vector<std::pair<std::string, std::string>>& config) {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  nlohmann::ordered_json h;
  h["header"] = {{"kind", kind}, {"config_hash", config_hash}, {"seed", seed}, {"config", cfg}};
  return h.dump();
}

std::string generated_to_json(const Generated& g, const std::string& id) {
  if (g.crystal) return "{\"id\":" + quoted(id) + "," + crystal_body(*g.crystal) + "}";
  return "{\"id\":" + quoted(id) + ",\"valid\":false,\"reason\":" + quoted(g.reason) + "}";
}

std::vector<CorpusEntry> read_corpus(const std::string& path) {
  std::vector<CorpusEntry> out;
  for_each_line(path, [&](int no, const std::string& line) {
    try {
      const json j = json::parse(line);
      if (is_header(j)) return;
      if (j.contains("valid") && j["valid"].is_boolean() && !j["valid"].get<bool>()) {
        out.push_back({j.value("id", std::string()), std::nullopt, std::nullopt});
        return;
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::Data, path + ":" + std::to_string(no) + ": malformed JSON: " + e.what());
    }
    try {
      CrystalRecord r = parse_record(line);
      out.push_back({std::move(r.id), std::move(r.crystal), r.split});
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(no) + ": " + e.what());
    }
  });
  if (out.empty()) fail(ErrorCode::InsufficientData, "corpus " + path + " is empty");
  return out;
}

std::vector<CompositionEntry> read_compositions(const std::string& path) {
  std::vector<CompositionEntry> out;
  for_each_line(path, [&](int no, const std::string& line) {
    try {
      const json j = json::parse(line);
      if (is_header(j)) return;
      CompositionEntry e;
      e.id = j.value("id", std::string());
      e.kinds = classes_from(j.at("atomic_numbers"));
      if (j.contains("split") && !j["split"].is_null()) e.split = parse_split(j["split"].get<std::string>());
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      fail(ErrorCode::Data, path + ":" + std::to_string(no) + ": " + e.what());
    }
  });
  if (out.empty()) fail(ErrorCode::InsufficientData, "no compositions in " + path);
  return out;
}

std::string prior_to_json(const PriorFile& p) {
  std::string counts;
  for (const auto& [n, c] : p.counts.counts) {
    if (!counts.empty()) counts += ',';
    counts += "\"" + std::to_string(n) + "\":" + num(c);
  }
  const auto vec3 = [](const Eigen::Vector3d& v) { return "[" + num(v[0]) + "," + num(v[1]) + "," + num(v[2]) + "]"; };
  return "{\"config_hash\":" + quoted(p.config_hash) + ",\"seed\":" + std::to_string(p.seed) +
         ",\"length_prior\":{\"loc\":" + vec3(p.prior.loc) + ",\"scale\":" + vec3(p.prior.scale) +
         "},\"atom_counts\":{" + counts + "}}\n";
}

PriorFile prior_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PriorFile p;
    p.config_hash = j.value("config_hash", std::string());
    p.seed = j.value("seed", std::uint64_t{0});
    for (int k = 0; k < 3; ++k) {
      p.prior.loc[k] = j.at("length_prior").at("loc").at(static_cast<std::size_t>(k)).get<double>();
      p.prior.scale[k] = j.at("length_prior").at("scale").at(static_cast<std::size_t>(k)).get<double>();
    }
    for (const auto& [key, value] : j.at("atom_counts").items()) p.counts.counts[std::stoi(key)] = value.get<double>();
    return p;
  } catch (const std::exception& e) {
    fail(ErrorCode::Data, std::string("bad prior file: ") + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

}  // namespace flowcryst
