#include "flowcryst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

#include "flowcryst/error.hpp"
#include "flowcryst/hungarian.hpp"

namespace flowcryst {

namespace {

/// Shortest Cartesian image of fractional displacement d over the 27 cells
/// around its wrapped representative.
Eigen::Vector3d min_image(const Eigen::Matrix3d& lat, const Eigen::Vector3d& d) {
  Eigen::Vector3d w;
  for (int k = 0; k < 3; ++k) w[k] = d[k] - std::round(d[k]);
  Eigen::Vector3d best = lat * w;
  double best_n2 = best.squaredNorm();
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      for (int k = -1; k <= 1; ++k) {
        const Eigen::Vector3d v = lat * (w + Eigen::Vector3d(i, j, k));
        const double n2 = v.squaredNorm();
        if (n2 < best_n2) {
          best_n2 = n2;
          best = v;
        }
      }
    }
  }
  return best;
}

LatticeParams average_lattice(const LatticeParams& x, const LatticeParams& y) {
  return {0.5 * (x.a + y.a),         0.5 * (x.b + y.b),       0.5 * (x.c + y.c),
          0.5 * (x.alpha + y.alpha), 0.5 * (x.beta + y.beta), 0.5 * (x.gamma + y.gamma)};
}

bool lattices_compatible(const LatticeParams& x, const LatticeParams& y, const MatchTolerances& tol) {
  const double lx[3] = {x.a, x.b, x.c}, ly[3] = {y.a, y.b, y.c};
  for (int k = 0; k < 3; ++k) {
    if (std::max(lx[k], ly[k]) / std::min(lx[k], ly[k]) - 1.0 > tol.ltol) return false;
  }
  const double ax[3] = {x.alpha, x.beta, x.gamma}, ay[3] = {y.alpha, y.beta, y.gamma};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ax[k] - ay[k]) > tol.angle_tol) return false;
  }
  return true;
}

}  // namespace

void MatchTolerances::validate() const {
  if (!(stol > 0 && angle_tol > 0 && ltol > 0)) fail(ErrorCode::Configuration, "match tolerances must be positive");
}

std::optional<double> match_structures(const Crystal& x, const Crystal& y, const MatchTolerances& tol) {
  tol.validate();
  if (sorted_composition(x.kinds) != sorted_composition(y.kinds)) return std::nullopt;
  if (!lattices_compatible(x.lattice, y.lattice, tol)) return std::nullopt;

  const int n = x.num_atoms();
  const LatticeParams avg = average_lattice(x.lattice, y.lattice);
  const Eigen::Matrix3d lat = matrix_from_params(avg).cols;
  const double scale = std::cbrt(cell_volume(avg) / n);

  std::map<int, std::vector<int>> xs, ys;
  for (int i = 0; i < n; ++i) {
    xs[x.kinds[static_cast<std::size_t>(i)]].push_back(i);
    ys[y.kinds[static_cast<std::size_t>(i)]].push_back(i);
  }
  // Anchor species: the least frequent one (smallest class on ties).
  int anchor = xs.begin()->first;
  for (const auto& [kind, idx] : xs) {
    if (idx.size() < xs[anchor].size()) anchor = kind;
  }

  std::optional<double> best;
  for (int ia : xs[anchor]) {
    for (int ja : ys[anchor]) {
      const Eigen::Vector3d shift = x.frac.coords().row(ia).transpose() - y.frac.coords().row(ja).transpose();
      std::vector<Eigen::Vector3d> disp;
      disp.reserve(static_cast<std::size_t>(n));
      for (const auto& [kind, xi] : xs) {
        const std::vector<int>& yi = ys[kind];
        const int m = static_cast<int>(xi.size());
        Eigen::MatrixXd cost(m, m);
        std::vector<Eigen::Vector3d> vec(static_cast<std::size_t>(m * m));
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < m; ++c) {
            const Eigen::Vector3d d = y.frac.coords().row(yi[static_cast<std::size_t>(c)]).transpose() + shift -
                                      x.frac.coords().row(xi[static_cast<std::size_t>(r)]).transpose();
            vec[static_cast<std::size_t>(r * m + c)] = min_image(lat, d);
            cost(r, c) = vec[static_cast<std::size_t>(r * m + c)].squaredNorm();
          }
        }
        const Assignment asg = solve_assignment(cost);
        for (int r = 0; r < m; ++r) disp.push_back(vec[static_cast<std::size_t>(r * m + asg.col_of_row[static_cast<std::size_t>(r)])]);
      }
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const auto& d : disp) mean += d;
      mean /= n;
      double max_d = 0.0, sq = 0.0;
      for (const auto& d : disp) {
        const double len = (d - mean).norm();
        max_d = std::max(max_d, len);
        sq += len * len;
      }
      if (max_d > tol.stol * scale) continue;
      const double rmsd = std::sqrt(sq / n) / scale;
      if (!best || rmsd < *best) best = rmsd;
    }
  }
  return best;
}

MatchSummary match_rate(const std::vector<std::optional<Crystal>>& generated, const std::vector<Crystal>& references,
                        const MatchTolerances& tol) {
  if (generated.size() != references.size()) {
    fail(ErrorCode::Pairing, "generated and reference lists differ in length (" + std::to_string(generated.size()) +
                                 " vs " + std::to_string(references.size()) + ")");
  }
  if (references.empty()) fail(ErrorCode::InsufficientData, "match rate of an empty corpus");
  MatchSummary s;
  s.total = static_cast<int>(references.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    if (!generated[i]) continue;
    if (const auto r = match_structures(*generated[i], references[i], tol)) {
      ++s.matched;
      sum += *r;
    }
  }
  s.rate = static_cast<double>(s.matched) / s.total;
  if (s.matched > 0) s.mean_rmsd = sum / s.matched;
  return s;
}

double min_interatomic_distance(const Crystal& c) {
  const Eigen::Matrix3d lat = matrix_from_params(c.lattice).cols;
  const int n = c.num_atoms();
  double best = std::numeric_limits<double>::infinity();
  // Self images: the shortest nonzero lattice vector in the 27-cell scan.
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      for (int k = -1; k <= 1; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        best = std::min(best, (lat * Eigen::Vector3d(i, j, k)).norm());
      }
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const Eigen::Vector3d d = c.frac.coords().row(b).transpose() - c.frac.coords().row(a).transpose();
      best = std::min(best, min_image(lat, d).norm());
    }
  }
  return best;
}

bool structural_validity(const Crystal& c, double threshold) { return min_interatomic_distance(c) > threshold; }

double wasserstein_1d(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty()) fail(ErrorCode::Data, "wasserstein_1d needs nonempty samples");
  for (double v : xs)
    if (!std::isfinite(v)) fail(ErrorCode::Data, "non-finite sample");
  for (double v : ys)
    if (!std::isfinite(v)) fail(ErrorCode::Data, "non-finite sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  // Integrate |F - G| between consecutive breakpoints of the merged support.
  const double wx = 1.0 / static_cast<double>(xs.size());
  const double wy = 1.0 / static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double fx = 0.0, fy = 0.0, total = 0.0;
  double prev = std::min(xs.front(), ys.front());
  while (i < xs.size() || j < ys.size()) {
    const double next = (j >= ys.size() || (i < xs.size() && xs[i] <= ys[j])) ? xs[i] : ys[j];
    total += std::abs(fx - fy) * (next - prev);
    while (i < xs.size() && xs[i] == next) {
      fx = static_cast<double>(++i) * wx;
    }
    while (j < ys.size() && ys[j] == next) {
      fy = static_cast<double>(++j) * wy;
    }
    prev = next;
  }
  return total;
}

DensityNary density_and_nary(const Crystal& c) {
  DensityNary d;
  d.rho = c.num_atoms() / cell_volume(c.lattice);
  d.n_el = static_cast<int>(std::set<int>(c.kinds.begin(), c.kinds.end()).size());
  return d;
}

RateCost rate_cost(std::int64_t n_hit, std::int64_t n_gen, std::int64_t steps) {
  if (n_gen <= 0) fail(ErrorCode::Domain, "rate_cost needs n_gen > 0");
  if (steps <= 0) fail(ErrorCode::Domain, "rate_cost needs steps > 0");
  if (n_hit < 0 || n_hit > n_gen) fail(ErrorCode::Domain, "rate_cost needs 0 <= n_hit <= n_gen");
  RateCost r;
  r.rate = static_cast<double>(n_hit) / static_cast<double>(n_gen);
  r.cost = n_hit == 0 ? std::numeric_limits<double>::infinity() : static_cast<double>(steps) / r.rate;
  return r;
}

MetricReport evaluate_corpora(const std::vector<std::optional<Crystal>>& generated,
                              const std::vector<Crystal>& references, bool paired, const MatchTolerances& tol) {
  if (generated.empty() || references.empty()) fail(ErrorCode::InsufficientData, "metrics need two nonempty corpora");
  MetricReport r;
  r.n_generated = static_cast<int>(generated.size());
  r.n_reference = static_cast<int>(references.size());
  if (paired) r.match = match_rate(generated, references, tol);

  std::vector<double> rho_g, nel_g, rho_r, nel_r;
  for (const auto& g : generated) {
    if (!g) continue;
    ++r.n_decoded;
    const DensityNary d = density_and_nary(*g);
    rho_g.push_back(d.rho);
    nel_g.push_back(d.n_el);
    ++r.nary_histogram[d.n_el];
    if (structural_validity(*g)) ++r.n_structurally_valid;
  }
  for (const auto& c : references) {
    const DensityNary d = density_and_nary(c);
    rho_r.push_back(d.rho);
    nel_r.push_back(d.n_el);
  }
  r.structural_validity_rate = static_cast<double>(r.n_structurally_valid) / r.n_generated;
  if (!rho_g.empty()) {
    r.wdist_rho = wasserstein_1d(rho_g, rho_r);
    r.wdist_nel = wasserstein_1d(nel_g, nel_r);
  } else {
    r.wdist_rho = r.wdist_nel = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::string report_to_json(const MetricReport& report, const std::string& config_hash, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["n_generated"] = report.n_generated;
  j["n_decoded"] = report.n_decoded;
  j["n_reference"] = report.n_reference;
  if (report.match) {
    j["match_rate"] = report.match->rate;
    j["matched"] = report.match->matched;
    j["mean_rmse"] = report.match->mean_rmsd ? nlohmann::ordered_json(*report.match->mean_rmsd) : nlohmann::ordered_json();
  }
  j["structural_validity_rate"] = report.structural_validity_rate;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(); };
  j["wdist_rho"] = finite_or_null(report.wdist_rho);
  j["wdist_nel"] = finite_or_null(report.wdist_nel);
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.nary_histogram) hist[std::to_string(k)] = v;
  j["nary_histogram"] = hist;
  j["stability_rate_inputs"] = {{"n_structurally_valid", report.n_structurally_valid},
                                {"n_generated", report.n_generated}};
  return j.dump(2);
}

std::string nary_histogram_csv(const MetricReport& report) {
  std::string out = "bin,count\n";
  for (const auto& [k, v] : report.nary_histogram) out += std::to_string(k) + "," + std::to_string(v) + "\n";
  return out;
}

}  // namespace flowcryst
