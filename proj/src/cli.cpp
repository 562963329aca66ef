#include "bartspl/cli.hpp"

#include "bartspl/error.hpp"
#include "bartspl/io.hpp"
#include "bartspl/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace bartspl {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// Settings shared by the three commands; every field maps to one flag.
struct Settings {
  std::string input;
  std::string output_dir = "bartspl_out";
  std::string outcome_type = "continuous";
  std::string ps_model;  // empty: provided when a ps column exists, else bart_probit
  double a_frac = 0.1;
  int b = 10;
  int trees = 200;
  int burnin = 250;
  int draws = 1000;
  int bootstrap_b = 1000;
  int knots = 5;
  double trim_fraction = 0.02;
  std::vector<std::string> methods{"bartspl"};
  std::uint64_t seed = 1;
  int bins = 30;
  // simulate
  std::string family;
  double c = 0.0;
  double v = 1.4;
  double w = 1.96;
  int n_extra = 0;
  int reps = 200;
  std::size_t oracle_draws = 10'000'000;
  std::string config;
};

std::string trim(std::string_view v) {
  const auto b = v.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = v.find_last_not_of(" \t\r");
  return std::string(v.substr(b, e - b + 1));
}

/// Splices `key = value` lines from the --config file into the argument list
/// as `--key value`, skipping keys already given on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    given.push_back(a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2));
    if (a == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  }
  if (path.empty()) return args;
  std::ifstream f(path);
  if (!f) throw CLI::ValidationError("--config", "cannot read '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(body.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty() || key == "config") {
      throw CLI::ValidationError("--config", path + ":" + std::to_string(lineno) + ": bad key");
    }
    if (std::find(given.begin(), given.end(), key) != given.end()) continue;
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

void add_common(CLI::App* cmd, Settings& s) {
  cmd->add_option("--config", s.config, "flat 'key = value' file; command-line flags take precedence");
  cmd->add_option("--output-dir", s.output_dir, "directory for output files")->capture_default_str();
  cmd->add_option("--seed", s.seed, "master seed")->capture_default_str();
  cmd->add_option("--b", s.b, "overlap count threshold b")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--trees", s.trees, "trees per forest")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--burnin", s.burnin, "burn-in sweeps")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--draws", s.draws, "kept sweeps M")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_estimation(CLI::App* cmd, Settings& s) {
  cmd->add_option("--bootstrap-b", s.bootstrap_b, "Bayesian-bootstrap draws B per iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--knots", s.knots, "spline knots K")->check(CLI::Range(3, 7))->capture_default_str();
  cmd->add_option("--trim-fraction", s.trim_fraction, "RO fraction left out of the spline fit at each tail")
      ->check(CLI::Range(0.0, 0.1))
      ->capture_default_str();
  cmd->add_option("--method", s.methods, "bartspl, untrimmed-bart, trimmed-bart (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
}

void add_input(CLI::App* cmd, Settings& s) {
  cmd->add_option("--input", s.input, "input CSV (y, e, covariates, optional ps)")->required();
  cmd->add_option("--outcome-type", s.outcome_type, "continuous or binary")
      ->check(CLI::IsMember({"continuous", "binary"}))
      ->capture_default_str();
  cmd->add_option("--ps-model", s.ps_model, "logistic, bart_probit or provided")
      ->check(CLI::IsMember({"logistic", "bart_probit", "bart-probit", "provided"}));
  cmd->add_option("--a-frac", s.a_frac, "window length a as a fraction of the score range")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) {
    const Method m = parse_method(n);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ValidationError("no methods requested");
  return out;
}

BartHyperParams bart_settings(const Settings& s) {
  BartHyperParams h;
  h.trees = s.trees;
  h.burn_in = s.burnin;
  h.draws = s.draws;
  return h;
}

BartSplConfig estimator_config(const Settings& s, const ObservationalDataset& data) {
  BartSplConfig cfg;
  cfg.overlap.a_fraction = s.a_frac;
  cfg.overlap.b = s.b;
  cfg.screen_mode = ScreenMode::both_tails;
  cfg.bart = bart_settings(s);
  cfg.smoothing.knots = s.knots;
  cfg.smoothing.trim_fraction = s.trim_fraction;
  cfg.bootstrap_b = s.bootstrap_b;
  cfg.seed = s.seed;
  cfg.propensity.probit = cfg.bart;
  if (s.ps_model.empty()) {
    cfg.propensity.kind = data.provided_ps() ? PsModelKind::provided : PsModelKind::bart_probit;
  } else {
    cfg.propensity.kind = parse_ps_model(s.ps_model);
  }
  cfg.validate();
  return cfg;
}

ObservationalDataset load(const Settings& s) {
  ValidationOptions opts;
  opts.outcome_type = parse_outcome_type(s.outcome_type);
  return validate_dataset(read_csv_table(s.input), opts);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  return f;
}

void write_file(const fs::path& path, const std::string& content) {
  auto f = open_output(path);
  f << content;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

void write_overlap_outputs(const fs::path& dir, const CausalSample& sample, int bins) {
  write_file(dir / "overlap.json", overlap_report_json(sample.partition) + "\n");
  std::ostringstream hist;
  write_histogram_csv(hist, score_histogram(sample.score, sample.data.exposure(), bins));
  write_file(dir / "ps_histogram.csv", hist.str());
}

void report_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int cmd_analyze(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto data = load(s);
  const auto methods = parse_methods(s.methods);
  const auto cfg = estimator_config(s, data);
  std::vector<std::string> warnings;
  const auto sample = prepare_sample(data, cfg, &warnings);
  report_warnings(err, warnings);

  std::vector<CausalEstimates> results;
  for (Method m : methods) {
    results.push_back(run_method(m, sample, cfg));
    report_warnings(err, results.back().warnings);
  }
  const fs::path dir(s.output_dir);
  fs::create_directories(dir);
  std::ostringstream res, units;
  write_results_csv(res, results);
  write_unit_effects_csv(units, results);
  write_file(dir / "results.csv", res.str());
  write_file(dir / "unit_effects.csv", units.str());
  write_overlap_outputs(dir, sample, s.bins);
  out << res.str();
  out << "pi = " << format_double(sample.partition.pi) << " (" << sample.partition.rn_count() << " of "
      << data.size() << " units in the RN)\n";
  return kExitOk;
}

int cmd_overlap(const Settings& s, std::ostream& out, std::ostream& err) {
  const auto data = load(s);
  const auto cfg = estimator_config(s, data);
  std::vector<std::string> warnings;
  const auto sample = prepare_sample(data, cfg, &warnings);
  report_warnings(err, warnings);
  const fs::path dir(s.output_dir);
  fs::create_directories(dir);
  write_overlap_outputs(dir, sample, s.bins);

  // Sensitivity of the partition to (a, b), on the same scores.
  std::ostringstream sens;
  sens << "a_fraction,b,a,pi,rn_units,intervals\n";
  std::vector<std::pair<double, int>> grid{{0.05, 10}, {0.1, 10}, {0.15, 3}};
  if (std::find(grid.begin(), grid.end(), std::make_pair(s.a_frac, s.b)) == grid.end()) grid.emplace_back(s.a_frac, s.b);
  for (const auto& [af, b] : grid) {
    OverlapParams p = cfg.overlap;
    p.a_fraction = af;
    p.b = b;
    const auto part = screen_interior_gaps(partition_sample(sample.score, data.exposure(), p), sample.score, p,
                                           cfg.screen_mode, true)
                          .partition;
    sens << format_double(af) << ',' << b << ',' << format_double(part.a) << ',' << format_double(part.pi) << ','
         << part.rn_count() << ',' << part.overlap.size() << '\n';
  }
  write_file(dir / "sensitivity.csv", sens.str());
  out << overlap_report_json(sample.partition) << '\n';
  return kExitOk;
}

int cmd_simulate(const Settings& s, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  DgpSpec spec;
  spec.family = parse_family(s.family);
  spec.c = s.c;
  spec.v = s.v;
  spec.w = s.w;
  spec.n_extra = s.n_extra;
  spec.validate();
  auto cfg = default_study_config(spec);
  cfg.methods = parse_methods(s.methods);
  cfg.n_reps = s.reps;
  cfg.seed = s.seed;
  cfg.oracle_draws = s.oracle_draws;
  cfg.estimator.bart = bart_settings(s);
  cfg.estimator.smoothing.knots = s.knots;
  cfg.estimator.smoothing.trim_fraction = s.trim_fraction;
  cfg.estimator.bootstrap_b = s.bootstrap_b;
  if (cmd.count("--a-frac") > 0) {
    cfg.estimator.overlap.a_absolute.reset();
    cfg.estimator.overlap.a_fraction = s.a_frac;
  }
  if (cmd.count("--b") > 0) cfg.estimator.overlap.b = s.b;

  const auto report = run_study(cfg);
  report_warnings(err, report.notes);
  const fs::path dir(s.output_dir);
  fs::create_directories(dir);
  std::ostringstream metrics, reps;
  write_metrics_csv(metrics, report);
  write_replicates_csv(reps, report);
  write_file(dir / "metrics.csv", metrics.str());
  write_file(dir / "replicates.csv", reps.str());
  ordered_json summary;
  summary["design"] = spec.label();
  summary["truth"] = report.truth.value;
  summary["truth_se"] = report.truth.se;
  summary["attempted"] = report.attempted;
  summary["accepted"] = report.accepted;
  summary["mean_pi"] = report.mean_pi;
  write_file(dir / "study.json", summary.dump(2) + "\n");
  out << "design " << spec.label() << ": truth " << format_double(report.truth.value) << ", "
      << report.accepted << " of " << report.attempted << " replicates accepted, mean pi "
      << format_double(report.mean_pi) << '\n'
      << metrics.str();
  return kExitOk;
}

ordered_json tail_json(const RegionPartition& p, bool left) {
  for (const auto& g : p.gaps) {
    if ((left && g.touches_left) || (!left && g.touches_right)) {
      return ordered_json{{"start", left ? g.hi : g.lo}, {"lo", g.lo}, {"hi", g.hi}, {"width", g.hi - g.lo},
                          {"units", g.units}};
    }
  }
  return nullptr;
}

}  // namespace

std::vector<HistogramBin> score_histogram(std::span<const double> score, std::span<const std::uint8_t> exposure,
                                          int bins) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  if (score.size() != exposure.size()) throw ValidationError("score and exposure lengths differ");
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  if (score.empty()) return out;
  const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
  const double lo = *mn;
  const double width = (*mx - *mn) / bins;
  for (int k = 0; k < bins; ++k) {
    out[static_cast<std::size_t>(k)].lo = lo + k * width;
    out[static_cast<std::size_t>(k)].hi = k + 1 == bins ? *mx : lo + (k + 1) * width;
  }
  for (std::size_t i = 0; i < score.size(); ++i) {
    int k = width > 0.0 ? static_cast<int>(std::floor((score[i] - lo) / width)) : 0;
    k = std::clamp(k, 0, bins - 1);
    auto& bin = out[static_cast<std::size_t>(k)];
    (exposure[i] ? bin.exposed : bin.unexposed) += 1;
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
  out << "bin,lo,hi,exposed,unexposed\n";
  for (std::size_t k = 0; k < bins.size(); ++k) {
    out << k + 1 << ',' << format_double(bins[k].lo) << ',' << format_double(bins[k].hi) << ',' << bins[k].exposed
        << ',' << bins[k].unexposed << '\n';
  }
}

std::string overlap_report_json(const RegionPartition& partition) {
  ordered_json j;
  j["a"] = partition.a;
  j["b"] = partition.b;
  ordered_json intervals = ordered_json::array();
  for (const auto& iv : partition.overlap) intervals.push_back({iv.lo, iv.hi});
  j["intervals"] = intervals;
  j["pi"] = partition.pi;
  j["tails"] = {{"left", tail_json(partition, true)}, {"right", tail_json(partition, false)}};
  return j.dump(2);
}

void write_results_csv(std::ostream& out, const std::vector<CausalEstimates>& results) {
  out << "estimand,method,point,ci_lower,ci_upper\n";
  for (const auto& r : results) {
    for (const auto* s : {&r.sample, &r.population}) {
      out << to_string(s->estimand) << ',' << to_string(r.method) << ',' << format_double(s->point) << ','
          << format_double(s->ci_lower) << ',' << format_double(s->ci_upper) << '\n';
    }
  }
}

void write_unit_effects_csv(std::ostream& out, const std::vector<CausalEstimates>& results) {
  out << "unit,method,region,point,ci_lower,ci_upper\n";
  for (const auto& r : results) {
    const auto summaries = r.individual();
    const auto q = r.draws.ro_units.size();
    for (std::size_t k = 0; k < summaries.size(); ++k) {
      const bool in_ro = k < q;
      const auto unit = in_ro ? r.draws.ro_units[k] : r.draws.rn_units[k - q];
      out << unit + 1 << ',' << to_string(r.method) << ',' << (in_ro ? "RO" : "RN") << ','
          << format_double(summaries[k].point) << ',' << format_double(summaries[k].ci_lower) << ','
          << format_double(summaries[k].ci_upper) << '\n';
    }
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal effects under propensity-score non-overlap (BART+SPL)", "bartspl"};
  app.require_subcommand(1);
  Settings s;

  auto* analyze = app.add_subcommand("analyze", "estimate sample and population effects from a CSV");
  add_input(analyze, s);
  add_common(analyze, s);
  add_estimation(analyze, s);
  analyze->add_option("--bins", s.bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

  auto* overlap = app.add_subcommand("overlap", "region-of-overlap diagnostics for a CSV");
  add_input(overlap, s);
  add_common(overlap, s);
  overlap->add_option("--bins", s.bins, "histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "run a replication study on a simulated design");
  add_common(simulate, s);
  add_estimation(simulate, s);
  simulate->add_option("--family", s.family, "S31A, S31B, S32, S33A, S33B, B2A or B2B")->required();
  simulate->add_option("--c", s.c, "non-overlap parameter c")->capture_default_str();
  simulate->add_option("--v", s.v, "unexposed confounder mean v (S33)")->capture_default_str();
  simulate->add_option("--w", s.w, "unexposed confounder variance w (S33)")->capture_default_str();
  simulate->add_option("--n-extra", s.n_extra, "unrelated covariates (S32)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  simulate->add_option("--reps", s.reps, "accepted replicates")->check(CLI::Range(1, 1000000))->capture_default_str();
  simulate->add_option("--a-frac", s.a_frac, "window length a as a fraction of the score range")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--oracle-draws", s.oracle_draws, "Monte Carlo draws for the true effect")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(s, out, err);
    if (overlap->parsed()) return cmd_overlap(s, out, err);
    return cmd_simulate(s, *simulate, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace bartspl
