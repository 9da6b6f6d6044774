#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowcryst/basedist.hpp"
#include "flowcryst/crystal.hpp"
#include "flowcryst/engine.hpp"

namespace flowcryst {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split parse_split(const std::string& text);

/// One dataset row. Atomic numbers are stored as classes Z - 1.
struct CrystalRecord {
  std::string id;
  Crystal crystal;
  std::optional<Split> split;
};

/// Parses one JSON line. The lattice may be given as six parameters or as a
/// 3x3 matrix whose rows are the lattice vectors.
CrystalRecord parse_record(const std::string& line);

/// JSON line with doubles written at 17 significant digits.
std::string record_to_json(const CrystalRecord& record);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  /// Loading aborts when more than this fraction of lines is malformed.
  double max_malformed = 0.01;
};

struct RejectedLine {
  int line = 0;  ///< 1-based
  std::string reason;
};

struct Dataset {
  std::vector<CrystalRecord> train;
  std::vector<CrystalRecord> val;
  std::vector<CrystalRecord> test;
  AtomCountTable counts;  ///< from the training split
  std::vector<RejectedLine> rejected;
  int lines = 0;

  const std::vector<CrystalRecord>& split(Split s) const;
};

/// Records with an explicit split keep it; the rest are assigned by file
/// position using the split fractions.
Dataset load_dataset(const std::string& path, const SplitSpec& spec = {});
Dataset make_dataset(std::vector<CrystalRecord> records, const SplitSpec& spec = {});

std::vector<Crystal> crystals_of(const std::vector<CrystalRecord>& records);

/// Generation output: a header line, then one line per sample. Invalid
/// samples are written as {"id", "valid": false, "reason"}.
std::string header_json(const std::string& kind, const std::string& config_hash, std::uint64_t seed,
                        const std::vector<std::pair<std::string, std::string>>& config);
std::string generated_to_json(const Generated& g, const std::string& id);

/// Reads a corpus of crystal lines, skipping header lines. Flagged invalid
/// samples come back as empty entries.
struct CorpusEntry {
  std::string id;
  std::optional<Crystal> crystal;
  std::optional<Split> split;
};
std::vector<CorpusEntry> read_corpus(const std::string& path);

/// Composition lines only need "atomic_numbers" (plus optional id/split).
struct CompositionEntry {
  std::string id;
  std::vector<int> kinds;
  std::optional<Split> split;
};
std::vector<CompositionEntry> read_compositions(const std::string& path);

struct PriorFile {
  LengthPrior prior;
  AtomCountTable counts;
  std::string config_hash;
  std::uint64_t seed = 0;
};
std::string prior_to_json(const PriorFile& p);
PriorFile prior_from_json(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace flowcryst
