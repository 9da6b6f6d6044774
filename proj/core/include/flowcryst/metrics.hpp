#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowcryst/crystal.hpp"

namespace flowcryst {

struct MatchTolerances {
  double stol = 0.5;        ///< site tolerance in units of (V/N)^(1/3)
  double angle_tol = 10.0;  ///< degrees
  double ltol = 0.3;        ///< fractional length tolerance
  void validate() const;
};

/// Simplified periodic structure matcher. Returns the normalized RMSD of
/// the best alignment, or nothing when the structures do not match.
/// Symmetric in its arguments.
std::optional<double> match_structures(const Crystal& x, const Crystal& y, const MatchTolerances& tol = {});

struct MatchSummary {
  double rate = 0.0;
  std::optional<double> mean_rmsd;  ///< absent when nothing matched
  int matched = 0;
  int total = 0;
};

/// Pairwise match rate. A missing generated crystal (invalid sample) counts
/// as a miss.
MatchSummary match_rate(const std::vector<std::optional<Crystal>>& generated, const std::vector<Crystal>& references,
                        const MatchTolerances& tol = {});

/// Minimum interatomic distance over all pairs and periodic images (27-cell
/// scan), excluding each atom's zero-image self pair.
double min_interatomic_distance(const Crystal& c);

/// True iff every interatomic distance exceeds `threshold` (0.5 angstrom).
bool structural_validity(const Crystal& c, double threshold = 0.5);

/// Exact 1-D earth mover's distance between two empirical distributions.
double wasserstein_1d(std::vector<double> xs, std::vector<double> ys);

struct DensityNary {
  double rho = 0.0;  ///< atoms per cubic angstrom
  int n_el = 0;      ///< distinct element count
};
DensityNary density_and_nary(const Crystal& c);

struct RateCost {
  double rate = 0.0;
  double cost = 0.0;  ///< steps / rate, infinite when rate is 0
};
RateCost rate_cost(std::int64_t n_hit, std::int64_t n_gen, std::int64_t steps);

struct MetricReport {
  int n_generated = 0;
  int n_decoded = 0;  ///< samples that decoded to a crystal
  int n_reference = 0;
  std::optional<MatchSummary> match;  ///< set for paired corpora
  double structural_validity_rate = 0.0;
  double wdist_rho = 0.0;
  double wdist_nel = 0.0;
  std::map<int, int> nary_histogram;  ///< over decoded generated crystals
  int n_structurally_valid = 0;       ///< stability-rate numerator candidates
};

MetricReport evaluate_corpora(const std::vector<std::optional<Crystal>>& generated,
                              const std::vector<Crystal>& references, bool paired,
                              const MatchTolerances& tol = {});

std::string report_to_json(const MetricReport& report, const std::string& config_hash, std::uint64_t seed);
std::string nary_histogram_csv(const MetricReport& report);

}  // namespace flowcryst
