#pragma once

// Command-line front end: `test`, `simulate` and `report` subcommands.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include "gofreg/bootstrap.hpp"
#include "gofreg/data_io.hpp"
#include "gofreg/dgp.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/gof_tests.hpp"
#include "gofreg/parallel.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gofreg {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_runtime = 2;

namespace detail {

/// Flag values that fail domain checks after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--levels: cannot parse '" + item + "'");
    }
    if (!(v > 0.0 && v < 1.0)) throw UsageError("--levels: " + item + " is outside (0, 1)");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--levels: empty list");
  return out;
}

template <class F>
auto as_usage(const std::string& flag, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const LookupError& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct TestArgs {
  std::string data, recipe, family = "gaussian_linear", link, test = "new_ks", out;
  std::string format = "json";
  std::size_t boot = 200;
  std::uint64_t seed = BootstrapConfig{}.master_seed;
  double bierens_c = default_bierens_c;
  std::size_t bierens_draws = default_bierens_draws;
  unsigned threads = default_thread_count();
};

struct SimulateArgs {
  std::string dgp, family, tests, levels = "0.01,0.05", out;
  std::size_t n = 200, reps = 300, boot = 200;
  std::uint64_t seed = 20240101;
  bool full_scale = false;
  double bierens_c = default_bierens_c;
  std::size_t bierens_draws = default_bierens_draws;
  unsigned threads = default_thread_count();
};

struct ReportArgs {
  std::string in, format = "table", out;
};

inline int run_test(const TestArgs& a, std::ostream& out) {
  const auto kind = as_usage("--test", [&] { return parse_test_kind(a.test); });
  const auto family = as_usage("--family", [&] { return parse_family_kind(a.family); });
  std::optional<Link> link;
  if (!a.link.empty()) link = as_usage("--link", [&] { return parse_link(a.link); });
  const auto format = as_usage("--format", [&] { return parse_report_format(a.format); });
  if (a.boot < 1) throw UsageError("--boot must be positive");

  const auto table = read_csv(a.data);
  const DesignRecipe recipe = a.recipe.empty() ? default_recipe(table) : load_recipe(a.recipe);
  const Dataset data = build_design(table, recipe);
  const auto spec = FamilySpec::make(family, static_cast<std::size_t>(data.width()), link);

  BootstrapConfig cfg;
  cfg.replications = a.boot;
  cfg.master_seed = a.seed;
  cfg.threads = a.threads;
  cfg.parallel = a.threads > 1;
  cfg.bierens_c = a.bierens_c;
  cfg.bierens_draws = a.bierens_draws;
  const TestResult result = bootstrap_test(kind, spec, data, cfg);
  if (!a.out.empty()) write_report(result, a.out, format);

  out << "test=" << to_string(kind) << '\n';
  out << "family=" << to_string(spec.kind) << '\n';
  out << "n=" << data.size() << '\n';
  out << "statistic=" << fmt(result.statistic.value) << '\n';
  out << "p_value=" << fmt(result.p_value) << '\n';
  for (const auto& [level, c] : result.critical_values)
    out << "critical_value_" << fmt(level) << '=' << fmt(c) << '\n';
  out << "failed_replications=" << result.failed_replications << '\n';
  return exit_ok;
}

inline void print_rejections(const SimulationReport& r, std::ostream& out) {
  for (const auto& [kind, summary] : r.per_test)
    for (const auto& [level, rej] : summary.rejection_at)
      out << "rejection_" << to_string(kind) << '_' << fmt(level) << '=' << fmt(rej) << '\n';
}

inline int run_simulate(SimulateArgs a, std::ostream& out) {
  const auto dgp = as_usage("--dgp", [&] { return parse_dgp(a.dgp); });
  const FamilySpec family =
      a.family.empty()
          ? default_null_family(dgp)
          : FamilySpec::make(as_usage("--family", [&] { return parse_family_kind(a.family); }), 2);
  std::vector<TestKind> tests;
  if (a.tests.empty() || a.tests == "all") {
    tests.assign(std::begin(all_test_kinds), std::end(all_test_kinds));
    if (!supports_bierens(family.kind)) std::erase(tests, TestKind::bierens_icm);
  } else {
    for (const auto& t : split_list(a.tests))
      tests.push_back(as_usage("--tests", [&] { return parse_test_kind(t); }));
  }
  if (tests.empty()) throw UsageError("--tests: empty list");
  const auto levels = parse_levels(a.levels);
  if (a.full_scale) {
    a.reps = 1000;
    a.boot = 500;
  }
  if (a.n < 2) throw UsageError("--n must be at least 2");
  if (a.reps < 1) throw UsageError("--reps must be positive");
  if (a.boot < 1) throw UsageError("--boot must be positive");

  BootstrapConfig cfg;
  cfg.replications = a.boot;
  cfg.levels = levels;
  cfg.bierens_c = a.bierens_c;
  cfg.bierens_draws = a.bierens_draws;
  const SimulationReport report =
      rejection_study({dgp, a.n}, family, tests, a.reps, cfg, levels, a.seed, a.threads);

  out << "dgp=" << to_string(dgp) << '\n';
  out << "family=" << to_string(family.kind) << '\n';
  out << "repetitions=" << report.repetitions << '\n';
  out << "failed_repetitions=" << report.failed_repetitions << '\n';
  print_rejections(report, out);
  if (!a.out.empty()) {
    const std::filesystem::path path(a.out);
    write_report(report, path, ReportFormat::json);
    const auto rejection = detail::sibling(path, "_rejection.csv");
    write_text(rejection, rejection_csv(report));
    write_text(ecdf_path_for(path), ecdf_csv(report));
    out << "report=" << path.string() << '\n';
    out << "rejection_csv=" << rejection.string() << '\n';
    out << "ecdf_csv=" << ecdf_path_for(path).string() << '\n';
  }
  return exit_ok;
}

inline std::string rejection_table(const SimulationReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "method";
  for (double a : r.levels) os << std::right << std::setw(10) << ("a=" + fmt(a));
  os << '\n';
  for (const auto& [kind, summary] : r.per_test) {
    os << std::left << std::setw(14) << to_string(kind);
    for (double a : r.levels) {
      const auto it = summary.rejection_at.find(a);
      std::ostringstream cell;
      if (it != summary.rejection_at.end())
        cell << std::fixed << std::setprecision(1) << 100.0 * it->second;
      os << std::right << std::setw(10) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

inline int run_report(const ReportArgs& a, std::ostream& out) {
  if (a.format != "table" && a.format != "csv")
    throw UsageError("--format: expected table or csv, got '" + a.format + "'");
  const SimulationReport report = read_simulation_report(a.in);
  std::string text;
  if (a.format == "csv") {
    text = rejection_csv(report);
  } else {
    text = "dgp=" + std::string(to_string(report.dgp.name)) + " n=" +
           std::to_string(report.dgp.n) + " repetitions=" + std::to_string(report.repetitions) +
           " boot=" + std::to_string(report.config.replications) + "\n" + rejection_table(report);
  }
  if (a.out.empty())
    out << text;
  else
    write_text(a.out, text);
  return exit_ok;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Goodness-of-fit tests for parametric conditional distributions", "gofreg"};
  app.require_subcommand(1);

  detail::TestArgs t;
  auto* test = app.add_subcommand("test", "Bootstrap one test on a CSV dataset");
  test->add_option("--data", t.data, "CSV file with a header row")->required();
  test->add_option("--recipe", t.recipe,
                   "JSON design recipe (default: last column is the response, others numeric)");
  test->add_option("--family", t.family, "Null family")->capture_default_str();
  test->add_option("--link", t.link, "Link function (default: the family's canonical link)");
  test->add_option("--test", t.test, "Statistic")->capture_default_str();
  test->add_option("--boot", t.boot, "Bootstrap replications")->capture_default_str();
  test->add_option("--seed", t.seed, "Master seed")->capture_default_str();
  test->add_option("--out", t.out, "Write the result to this path");
  test->add_option("--format", t.format, "Output format: json or csv")->capture_default_str();
  test->add_option("--bierens-c", t.bierens_c, "Half-width of the Bierens weight cube")
      ->capture_default_str();
  test->add_option("--bierens-draws", t.bierens_draws, "Bierens Monte Carlo draws")
      ->capture_default_str();
  test->add_option("--threads", t.threads, "Worker threads")->capture_default_str();

  detail::SimulateArgs s;
  auto* sim = app.add_subcommand("simulate", "Rejection study on a synthetic DGP");
  sim->add_option("--dgp", s.dgp, "C0..C4 or D0..D4")->required();
  sim->add_option("--family", s.family, "Null family (default: per DGP)");
  sim->add_option("--tests", s.tests, "Comma-separated statistics (default: all)");
  sim->add_option("--n", s.n, "Sample size")->capture_default_str();
  sim->add_option("--reps", s.reps, "Study repetitions")->capture_default_str();
  sim->add_option("--boot", s.boot, "Bootstrap replications")->capture_default_str();
  sim->add_option("--seed", s.seed, "Study seed")->capture_default_str();
  sim->add_option("--levels", s.levels, "Comma-separated levels")->capture_default_str();
  sim->add_option("--out", s.out, "Report JSON path; CSVs are written beside it");
  sim->add_flag("--full-scale", s.full_scale, "Use 1000 repetitions and 500 replications");
  sim->add_option("--bierens-c", s.bierens_c, "Half-width of the Bierens weight cube")
      ->capture_default_str();
  sim->add_option("--bierens-draws", s.bierens_draws, "Bierens Monte Carlo draws")
      ->capture_default_str();
  sim->add_option("--threads", s.threads, "Worker threads")->capture_default_str();

  detail::ReportArgs r;
  auto* rep = app.add_subcommand("report", "Format a saved simulation report");
  rep->add_option("--in", r.in, "Simulation report JSON")->required();
  rep->add_option("--format", r.format, "table or csv")->capture_default_str();
  rep->add_option("--out", r.out, "Write here instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  }

  try {
    if (*test) return detail::run_test(t, out);
    if (*sim) return detail::run_simulate(s, out);
    return detail::run_report(r, out);
  } catch (const detail::UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_runtime;
  }
}

}  // namespace gofreg
