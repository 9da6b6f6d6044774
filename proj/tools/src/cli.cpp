#include "flowcryst_cli/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowcryst/basedist.hpp"
#include "flowcryst/checkpoint.hpp"
#include "flowcryst/config.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/error.hpp"
#include "flowcryst/io.hpp"
#include "flowcryst/metrics.hpp"
#include "flowcryst/selfcheck.hpp"

namespace flowcryst::cli {

namespace {

/// Flags shared by the subcommands that build Settings.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::map<std::string, std::string> flags;
  std::optional<std::uint64_t> seed;
};

void add_value_flag(CLI::App* app, ConfigFlags& cf, const std::string& flag, const std::string& key,
                    const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&cf, key](const std::string& v) { cf.flags[key] = v; }, help);
}

void add_config_flags(CLI::App* app, ConfigFlags& cf) {
  app->add_option("--config", cf.config_path, "key=value settings file");
  app->add_option("--set", cf.overrides, "extra key=value setting (repeatable)");
  app->add_option("--seed", cf.seed, "random seed (overrides FLOWCRYST_SEED and the config file)");
  add_value_flag(app, cf, "--threads", "threads", "worker threads");
}

void add_sampler_flags(CLI::App* app, ConfigFlags& cf) {
  add_value_flag(app, cf, "--steps", "steps", "Euler integration steps");
  add_value_flag(app, cf, "--slope", "slope", "anti-annealing slope s'");
  add_value_flag(app, cf, "--anneal", "anneal", "annealed groups: none or a comma list of a,f,l");
}

/// base (e.g. from a checkpoint) < config file < --set < flags < env seed < --seed.
Settings resolve_settings(const ConfigFlags& cf, ConfigEntries base = {}) {
  if (!cf.config_path.empty()) {
    for (const auto& [k, v] : parse_config_text(read_text_file(cf.config_path))) base[k] = v;
  }
  for (const std::string& kv : cf.overrides) {
    for (const auto& [k, v] : parse_config_text(kv)) base[k] = v;
  }
  for (const auto& [k, v] : cf.flags) base[k] = v;
  if (const auto env = seed_from_env()) base["seed"] = std::to_string(*env);
  if (cf.seed) base["seed"] = std::to_string(*cf.seed);
  return settings_from(base);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Numeric:
    case ErrorCode::Integration:
    case ErrorCode::Io:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

PriorFile load_prior(const std::string& path) { return prior_from_json(read_text_file(path)); }

void write_lines(const std::string& path, const std::string& header, const std::vector<std::string>& lines) {
  std::string text = header + "\n";
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path, text);
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Riemannian flow matching for periodic crystals"};
  app.require_subcommand(1);

  // fit-base
  std::string data_path, prior_out;
  ConfigFlags fit_cf;
  auto* fit = app.add_subcommand("fit-base", "fit the length prior and atom-count table on the training split");
  fit->add_option("--data", data_path, "dataset (JSON lines)")->required();
  fit->add_option("--out", prior_out, "output prior JSON")->required();
  add_config_flags(fit, fit_cf);

  // train
  std::string train_data, train_prior, model_out, log_out;
  ConfigFlags train_cf;
  auto* tr = app.add_subcommand("train", "train a vector field");
  tr->add_option("--data", train_data, "dataset (JSON lines)")->required();
  tr->add_option("--prior", train_prior, "prior JSON from fit-base (fitted on the fly when omitted)");
  tr->add_option("--out", model_out, "output checkpoint")->required();
  tr->add_option("--log", log_out, "training log CSV");
  add_config_flags(tr, train_cf);
  add_value_flag(tr, train_cf, "--mode", "mode", "csp or dng");
  add_value_flag(tr, train_cf, "--epochs", "epochs", "training epochs");
  add_value_flag(tr, train_cf, "--batch-size", "batch_size", "minibatch size");
  add_value_flag(tr, train_cf, "--lr", "learning_rate", "learning rate");
  add_value_flag(tr, train_cf, "--max-steps", "max_steps", "stop after this many optimizer steps");
  add_value_flag(tr, train_cf, "--hidden-dim", "hidden_dim", "network width");
  add_value_flag(tr, train_cf, "--layers", "layers", "message-passing layers");

  // reconstruct
  std::string rec_model, rec_prior, rec_input, rec_out, rec_split;
  ConfigFlags rec_cf;
  auto* rec = app.add_subcommand("reconstruct", "predict structures for given compositions (CSP)");
  rec->add_option("--model", rec_model, "checkpoint")->required();
  rec->add_option("--prior", rec_prior, "prior JSON")->required();
  rec->add_option("--input", rec_input, "JSON lines with atomic_numbers")->required();
  rec->add_option("--split", rec_split, "only use records of this split");
  rec->add_option("--out", rec_out, "output crystal JSON lines")->required();
  add_config_flags(rec, rec_cf);
  add_sampler_flags(rec, rec_cf);

  // sample
  std::string smp_model, smp_prior, smp_out;
  int smp_count = 0;
  ConfigFlags smp_cf;
  auto* smp = app.add_subcommand("sample", "generate crystals de novo (DNG)");
  smp->add_option("--model", smp_model, "checkpoint")->required();
  smp->add_option("--prior", smp_prior, "prior JSON")->required();
  smp->add_option("--count", smp_count, "number of crystals")->required()->check(CLI::PositiveNumber);
  smp->add_option("--out", smp_out, "output crystal JSON lines")->required();
  add_config_flags(smp, smp_cf);
  add_sampler_flags(smp, smp_cf);

  // metrics
  std::string met_gen, met_ref, met_out, met_csv, met_split, met_paired = "auto";
  MatchTolerances tol;
  auto* met = app.add_subcommand("metrics", "compare generated and reference corpora");
  met->add_option("--generated", met_gen, "generated crystals")->required();
  met->add_option("--reference", met_ref, "reference crystals")->required();
  met->add_option("--split", met_split, "only use reference records of this split");
  met->add_option("--out", met_out, "output report JSON")->required();
  met->add_option("--csv", met_csv, "N-ary histogram CSV");
  met->add_option("--paired", met_paired, "auto, yes or no")->check(CLI::IsMember({"auto", "yes", "no"}));
  met->add_option("--stol", tol.stol, "site tolerance");
  met->add_option("--angle-tol", tol.angle_tol, "angle tolerance (degrees)");
  met->add_option("--ltol", tol.ltol, "length tolerance");

  // selfcheck
  std::uint64_t check_seed = 0;
  auto* chk = app.add_subcommand("selfcheck", "run the built-in invariant suites");
  chk->add_option("--seed", check_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*fit) {
      const Settings s = resolve_settings(fit_cf);
      const Dataset d = load_dataset(data_path);
      std::vector<Eigen::Vector3d> lengths;
      for (const auto& r : d.train) lengths.emplace_back(r.crystal.lattice.a, r.crystal.lattice.b, r.crystal.lattice.c);
      PriorFile p{fit_length_prior(lengths), d.counts, config_hash(s), s.run.seed};
      write_text_file(prior_out, prior_to_json(p));
      fmt::print(out, "fit-base: {} training crystals ({} rejected lines) -> {}\n", d.train.size(), d.rejected.size(),
                 prior_out);
      return kExitOk;
    }

    if (*tr) {
      const Settings s = resolve_settings(train_cf);
      const Dataset d = load_dataset(train_data);
      for (const auto& r : d.rejected) fmt::print(err, "rejected line {}: {}\n", r.line, r.reason);
      const std::vector<Crystal> crystals = crystals_of(d.train);
      LengthPrior prior;
      if (!train_prior.empty()) {
        prior = load_prior(train_prior).prior;
      } else {
        std::vector<Eigen::Vector3d> lengths;
        for (const auto& c : crystals) lengths.emplace_back(c.lattice.a, c.lattice.b, c.lattice.c);
        prior = fit_length_prior(lengths);
      }
      const std::string hash = config_hash(s);
      std::string log = fmt::format("# config_hash={} seed={}\nepoch,loss,a,f,l,sce,grad_norm\n", hash, s.run.seed);
      const TrainResult result = train(s.run, s.net, crystals, prior, [&](const TrainLogRow& row) {
        const LossTerms& t = row.terms;
        log += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.epoch, t.total(), t.a, t.f, t.l,
                           t.sce, row.grad_norm);
        fmt::print(err, "epoch {:4d}  loss {:.6f}  grad {:.4f}\n", row.epoch, t.total(), row.grad_norm);
        return true;
      });
      save_checkpoint(model_out, result.params, {hash, s.run.seed, canonical_config(s)});
      if (!log_out.empty()) write_text_file(log_out, log);
      if (result.diverged) {
        fmt::print(err, "training stopped: {} (last good parameters saved)\n", result.message);
        return kExitRuntime;
      }
      fmt::print(out, "train: {} optimizer steps -> {}\n", result.optimizer_steps, model_out);
      return kExitOk;
    }

    if (*rec || *smp) {
      const bool is_rec = static_cast<bool>(*rec);
      CheckpointMeta meta;
      const ModelParams params = load_checkpoint(is_rec ? rec_model : smp_model, &meta);
      const Settings s = resolve_settings(is_rec ? rec_cf : smp_cf, parse_config_text(meta.run_config));
      const PriorFile prior = load_prior(is_rec ? rec_prior : smp_prior);
      const ModelField field(params);
      const std::string hash = config_hash(s);
      const std::string header =
          header_json(is_rec ? "reconstructions" : "generations", hash, s.run.seed, config_entries(s));
      std::vector<std::string> lines;
      int valid = 0;
      if (is_rec) {
        if (params.config.mode != Mode::CSP) fail(ErrorCode::Configuration, "reconstruct needs a CSP checkpoint");
        std::vector<CompositionEntry> entries = read_compositions(rec_input);
        if (!rec_split.empty()) {
          const Split want = parse_split(rec_split);
          std::erase_if(entries, [&](const CompositionEntry& e) { return e.split != want; });
        }
        std::vector<std::vector<int>> comps;
        for (const auto& e : entries) comps.push_back(e.kinds);
        const auto gen = reconstruct_many(field, comps, prior.prior, s.run.integrate_config(), s.run.seed, s.run.threads);
        for (std::size_t i = 0; i < gen.size(); ++i) {
          valid += gen[i].valid();
          lines.push_back(generated_to_json(gen[i], entries[i].id.empty() ? std::to_string(i) : entries[i].id));
        }
      } else {
        if (params.config.mode != Mode::DNG) fail(ErrorCode::Configuration, "sample needs a DNG checkpoint");
        const auto gen = generate_many(field, smp_count, prior.counts, prior.prior, s.run.integrate_config(),
                                       s.run.seed, s.run.threads);
        for (std::size_t i = 0; i < gen.size(); ++i) {
          valid += gen[i].valid();
          lines.push_back(generated_to_json(gen[i], "gen-" + std::to_string(i)));
        }
      }
      write_lines(is_rec ? rec_out : smp_out, header, lines);
      fmt::print(out, "{}: {} of {} samples decoded to valid crystals\n", is_rec ? "reconstruct" : "sample", valid,
                 lines.size());
      return kExitOk;
    }

    if (*met) {
      const std::vector<CorpusEntry> gen = read_corpus(met_gen);
      std::vector<CorpusEntry> ref = read_corpus(met_ref);
      if (!met_split.empty()) {
        const Split want = parse_split(met_split);
        std::erase_if(ref, [&](const CorpusEntry& e) { return e.split != want; });
      }
      std::vector<std::optional<Crystal>> g;
      std::vector<Crystal> r;
      for (const auto& e : gen) g.push_back(e.crystal);
      for (const auto& e : ref) {
        if (!e.crystal) fail(ErrorCode::Data, "reference corpus contains an invalid entry");
        r.push_back(*e.crystal);
      }
      const bool paired = met_paired == "yes" || (met_paired == "auto" && g.size() == r.size());
      const MetricReport report = evaluate_corpora(g, r, paired, tol);
      const std::string hash = fmt::format("{:016x}", fnv1a64(read_text_file(met_gen) + read_text_file(met_ref)));
      write_text_file(met_out, report_to_json(report, hash, 0) + "\n");
      if (!met_csv.empty()) write_text_file(met_csv, nary_histogram_csv(report));
      if (report.match) {
        fmt::print(out, "metrics: match rate {:.4f} over {} pairs\n", report.match->rate, report.match->total);
      }
      fmt::print(out, "metrics: validity {:.4f}, wdist rho {:.6g}, wdist N_el {:.6g}\n", report.structural_validity_rate,
                 report.wdist_rho, report.wdist_nel);
      return kExitOk;
    }

    if (*chk) {
      const std::vector<CheckResult> results = run_selfcheck(check_seed);
      int failed = 0;
      for (const auto& r : results) {
        fmt::print(out, "{} {} ({})\n", r.passed ? "PASS" : "FAIL", r.name, r.detail);
        failed += !r.passed;
      }
      fmt::print(out, "{} of {} properties passed\n", results.size() - static_cast<std::size_t>(failed), results.size());
      return failed == 0 ? kExitOk : kExitValidation;
    }
  } catch (const Error& e) {
    err << "flowcryst: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "flowcryst: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace flowcryst::cli
