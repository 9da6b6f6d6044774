#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowcryst/engine.hpp"
#include "flowcryst/net.hpp"

namespace flowcryst {

/// Everything a run depends on: optimizer, sampler and network settings.
struct Settings {
  RunConfig run;
  NetConfig net;
};

using ConfigEntries = std::map<std::string, std::string>;

/// Parses flat key=value text. '#' starts a comment; blank lines are ignored.
ConfigEntries parse_config_text(const std::string& text);

/// Mode defaults first, then every entry. Unknown keys and bad values raise
/// configuration errors.
Settings settings_from(const ConfigEntries& entries);

/// Canonical (sorted, full-precision) key/value list of all settings.
std::vector<std::pair<std::string, std::string>> config_entries(const Settings& s);
std::string canonical_config(const Settings& s);

/// FNV-1a 64-bit hash of the canonical text, as 16 hex digits.
std::string config_hash(const Settings& s);
std::uint64_t fnv1a64(const std::string& text);

/// Value of FLOWCRYST_SEED when set.
std::optional<std::uint64_t> seed_from_env();

}  // namespace flowcryst
