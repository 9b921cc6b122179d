#pragma once

// CSV ingestion with design-matrix construction, and report persistence.

#include "gofreg/bootstrap.hpp"
#include "gofreg/dataset.hpp"
#include "gofreg/dgp.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/gof_tests.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gofreg {

/// Which columns go into the design and how.
struct DesignRecipe {
  std::string response;
  std::vector<std::string> numeric_terms;
  std::vector<std::string> squared_terms;
  std::vector<std::string> factor_terms;
  std::vector<std::pair<std::string, std::string>> interactions;
  bool intercept = true;
  /// Column holding binomial trial counts; empty for other families.
  std::string trials;

  friend bool operator==(const DesignRecipe&, const DesignRecipe&) = default;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw LookupError("column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(trim(field));
  return out;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError("cannot parse '" + cell + "' as a number at row " + std::to_string(row) +
                     ", column '" + column + "'");
  return value;
}

}  // namespace detail

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
      line.erase(0, 3);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = detail::split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError("row " + std::to_string(table.rows.size() + 1) + " (line " +
                       std::to_string(line_no) + ") has " + std::to_string(fields.size()) +
                       " fields, header has " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw ParseError("'" + path.string() + "' has no header");
  return table;
}

/// Builds the design matrix described by `recipe`. Column order:
/// intercept, numeric terms, squared terms, factor indicators, interactions.
/// Factors use treatment contrasts with the first observed level as
/// reference; factor x factor interactions multiply the two indicator blocks.
inline Dataset build_design(const CsvTable& table, const DesignRecipe& recipe) {
  if (table.rows.empty()) throw ParseError("table has zero data rows");
  auto is_covariate = [&](const std::string& name) {
    auto in = [&](const auto& v) { return std::find(v.begin(), v.end(), name) != v.end(); };
    if (in(recipe.numeric_terms) || in(recipe.squared_terms) || in(recipe.factor_terms))
      return true;
    return std::any_of(recipe.interactions.begin(), recipe.interactions.end(),
                       [&](const auto& p) { return p.first == name || p.second == name; });
  };
  if (recipe.response.empty()) throw ParseError("recipe has no response column");
  if (is_covariate(recipe.response))
    throw ParseError("response '" + recipe.response + "' is also listed as a covariate term");

  const std::size_t n = table.rows.size();
  auto numeric_column = [&](const std::string& name) {
    const std::size_t c = table.column(name);
    std::vector<double> v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = detail::parse_number(table.rows[r][c], r + 1, name);
    return v;
  };
  struct FactorBlock {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
  };
  auto factor_block = [&](const std::string& name) {
    const std::size_t c = table.column(name);
    std::vector<std::string> levels;
    for (const auto& row : table.rows)
      if (std::find(levels.begin(), levels.end(), row[c]) == levels.end())
        levels.push_back(row[c]);
    FactorBlock b;
    for (std::size_t l = 1; l < levels.size(); ++l) {
      b.names.push_back(name + "=" + levels[l]);
      std::vector<double> col(n);
      for (std::size_t r = 0; r < n; ++r) col[r] = table.rows[r][c] == levels[l] ? 1.0 : 0.0;
      b.columns.push_back(std::move(col));
    }
    return b;
  };
  auto is_factor = [&](const std::string& name) {
    return std::find(recipe.factor_terms.begin(), recipe.factor_terms.end(), name) !=
           recipe.factor_terms.end();
  };
  auto block_of = [&](const std::string& name) {
    if (is_factor(name)) return factor_block(name);
    return FactorBlock{{name}, {numeric_column(name)}};
  };

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  if (recipe.intercept) {
    names.emplace_back("(Intercept)");
    columns.emplace_back(n, 1.0);
  }
  for (const auto& t : recipe.numeric_terms) {
    names.push_back(t);
    columns.push_back(numeric_column(t));
  }
  for (const auto& t : recipe.squared_terms) {
    auto v = numeric_column(t);
    for (double& x : v) x *= x;
    names.push_back(t + "^2");
    columns.push_back(std::move(v));
  }
  for (const auto& t : recipe.factor_terms) {
    auto b = factor_block(t);
    for (std::size_t k = 0; k < b.names.size(); ++k) {
      names.push_back(b.names[k]);
      columns.push_back(std::move(b.columns[k]));
    }
  }
  for (const auto& [a, b] : recipe.interactions) {
    const auto left = block_of(a);
    const auto right = block_of(b);
    for (std::size_t i = 0; i < left.names.size(); ++i) {
      for (std::size_t j = 0; j < right.names.size(); ++j) {
        std::vector<double> v(n);
        for (std::size_t r = 0; r < n; ++r) v[r] = left.columns[i][r] * right.columns[j][r];
        names.push_back(left.names[i] + ":" + right.names[j]);
        columns.push_back(std::move(v));
      }
    }
  }
  if (columns.empty()) throw ParseError("recipe produces an empty design");

  Dataset d;
  d.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (std::size_t r = 0; r < n; ++r)
      d.covariates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
  const auto y = numeric_column(recipe.response);
  d.responses = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(n));
  if (!recipe.trials.empty()) {
    const auto t = numeric_column(recipe.trials);
    d.trials = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(n));
  }
  d.column_names = std::move(names);
  d.validate();
  return d;
}

inline Dataset load_dataset_csv(const std::filesystem::path& path, const DesignRecipe& recipe) {
  return build_design(read_csv(path), recipe);
}

/// Recipe used when none is given: last column is the response, every other
/// column a numeric term, plus an intercept.
inline DesignRecipe default_recipe(const CsvTable& table) {
  DesignRecipe r;
  r.response = table.header.back();
  r.numeric_terms.assign(table.header.begin(), table.header.end() - 1);
  return r;
}

// ---------------------------------------------------------------------------
// JSON encodings

using json = nlohmann::ordered_json;

inline json to_json(const DesignRecipe& r) {
  json j;
  j["response"] = r.response;
  j["numeric"] = r.numeric_terms;
  j["squared"] = r.squared_terms;
  j["factors"] = r.factor_terms;
  json inter = json::array();
  for (const auto& [a, b] : r.interactions) inter.push_back({a, b});
  j["interactions"] = inter;
  j["intercept"] = r.intercept;
  if (!r.trials.empty()) j["trials"] = r.trials;
  return j;
}

inline DesignRecipe recipe_from_json(const json& j) {
  static const std::vector<std::string> known = {"response", "numeric",      "squared",
                                                 "factors",  "interactions", "intercept",
                                                 "trials"};
  if (!j.is_object()) throw ParseError("recipe must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParseError("unknown recipe field '" + key + "'");
  try {
    DesignRecipe r;
    r.response = j.at("response").get<std::string>();
    r.numeric_terms = j.value("numeric", std::vector<std::string>{});
    r.squared_terms = j.value("squared", std::vector<std::string>{});
    r.factor_terms = j.value("factors", std::vector<std::string>{});
    for (const auto& p : j.value("interactions", json::array())) {
      if (!p.is_array() || p.size() != 2)
        throw ParseError("each interaction must be a pair of column names");
      r.interactions.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    r.intercept = j.value("intercept", true);
    r.trials = j.value("trials", std::string{});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed recipe: ") + e.what());
  }
}

inline DesignRecipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe '" + path.string() + "'");
  try {
    return recipe_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("recipe '" + path.string() + "': " + e.what());
  }
}

/// Thread settings are left out: they never change results, and reports
/// must be byte-identical between serial and parallel runs.
inline json to_json(const BootstrapConfig& c) {
  return json{{"replications", c.replications},   {"master_seed", c.master_seed},
              {"max_fit_failures", c.max_fit_failures}, {"bierens_c", c.bierens_c},
              {"bierens_draws", c.bierens_draws}, {"levels", c.levels}};
}

inline BootstrapConfig config_from_json(const json& j) {
  BootstrapConfig c;
  c.replications = j.at("replications").get<std::size_t>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.max_fit_failures = j.at("max_fit_failures").get<double>();
  c.bierens_c = j.at("bierens_c").get<double>();
  c.bierens_draws = j.at("bierens_draws").get<std::size_t>();
  c.levels = j.at("levels").get<std::vector<double>>();
  return c;
}

inline json level_map_to_json(const std::map<double, double>& m, const char* value_key) {
  json arr = json::array();
  for (const auto& [level, value] : m) arr.push_back({{"level", level}, {value_key, value}});
  return arr;
}

inline std::map<double, double> level_map_from_json(const json& j, const char* value_key) {
  std::map<double, double> m;
  for (const auto& e : j) m[e.at("level").get<double>()] = e.at(value_key).get<double>();
  return m;
}

inline json to_json(const TestStatistic& s) {
  return json{{"kind", std::string(to_string(s.kind))}, {"value", s.value},
              {"metadata", s.metadata}};
}

inline TestStatistic statistic_from_json(const json& j) {
  TestStatistic s;
  s.kind = parse_test_kind(j.at("kind").get<std::string>());
  s.value = j.at("value").get<double>();
  s.metadata = j.at("metadata").get<std::map<std::string, double>>();
  return s;
}

inline json to_json(const TestResult& r) {
  json j;
  j["type"] = "test_result";
  j["statistic"] = to_json(r.statistic);
  j["p_value"] = r.p_value;
  j["critical_values"] = level_map_to_json(r.critical_values, "value");
  j["failed_replications"] = r.failed_replications;
  j["config"] = to_json(r.config);
  j["boot_statistics"] = r.boot_statistics;
  return j;
}

inline TestResult test_result_from_json(const json& j) {
  TestResult r;
  r.statistic = statistic_from_json(j.at("statistic"));
  r.p_value = j.at("p_value").get<double>();
  r.critical_values = level_map_from_json(j.at("critical_values"), "value");
  r.failed_replications = j.at("failed_replications").get<std::size_t>();
  r.config = config_from_json(j.at("config"));
  r.boot_statistics = j.at("boot_statistics").get<std::vector<double>>();
  return r;
}

inline json to_json(const FamilySpec& f) {
  return json{{"kind", std::string(to_string(f.kind))},
              {"link", std::string(to_string(f.link))},
              {"coefficients", f.coefficients}};
}

inline FamilySpec family_from_json(const json& j) {
  return FamilySpec::make(parse_family_kind(j.at("kind").get<std::string>()),
                          j.at("coefficients").get<std::size_t>(),
                          parse_link(j.at("link").get<std::string>()));
}

inline json to_json(const SimulationReport& r) {
  json j;
  j["type"] = "simulation_report";
  j["dgp"] = {{"name", std::string(to_string(r.dgp.name))}, {"n", r.dgp.n}};
  j["null_family"] = to_json(r.null_family);
  j["repetitions"] = r.repetitions;
  j["seed"] = r.seed;
  j["levels"] = r.levels;
  j["failed_repetitions"] = r.failed_repetitions;
  j["config"] = to_json(r.config);
  j["metadata"] = r.metadata;
  json tests = json::array();
  for (const auto& [kind, summary] : r.per_test) {
    tests.push_back({{"test", std::string(to_string(kind))},
                     {"rejection_at", level_map_to_json(summary.rejection_at, "rejection")},
                     {"p_values", summary.p_values}});
  }
  j["tests"] = tests;
  return j;
}

inline SimulationReport simulation_report_from_json(const json& j) {
  SimulationReport r;
  r.dgp.name = parse_dgp(j.at("dgp").at("name").get<std::string>());
  r.dgp.n = j.at("dgp").at("n").get<std::size_t>();
  r.null_family = family_from_json(j.at("null_family"));
  r.repetitions = j.at("repetitions").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.levels = j.at("levels").get<std::vector<double>>();
  r.failed_repetitions = j.at("failed_repetitions").get<std::size_t>();
  r.config = config_from_json(j.at("config"));
  r.metadata = j.at("metadata").get<std::map<std::string, double>>();
  for (const auto& t : j.at("tests")) {
    TestSummary s;
    s.p_values = t.at("p_values").get<std::vector<double>>();
    s.rejection_at = level_map_from_json(t.at("rejection_at"), "rejection");
    r.per_test[parse_test_kind(t.at("test").get<std::string>())] = std::move(s);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Writers

enum class ReportFormat { json, csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw LookupError("unknown report format '" + std::string(s) + "'");
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  auto stem = path.stem().string();
  return path.parent_path() / (stem + suffix);
}

}  // namespace detail

/// Path of the p-value ecdf table written next to a simulation CSV.
inline std::filesystem::path ecdf_path_for(const std::filesystem::path& path) {
  return detail::sibling(path, "_ecdf.csv");
}

inline std::string rejection_csv(const SimulationReport& r) {
  std::ostringstream os;
  os << "method,dgp,level,rejection\n";
  for (const auto& [kind, summary] : r.per_test)
    for (const auto& [level, rej] : summary.rejection_at)
      os << to_string(kind) << ',' << to_string(r.dgp.name) << ',' << detail::format_number(level)
         << ',' << detail::format_number(rej) << '\n';
  return os.str();
}

inline std::string ecdf_csv(const SimulationReport& r) {
  std::ostringstream os;
  os << "method,dgp,level,fraction\n";
  for (const auto& [kind, summary] : r.per_test)
    for (const auto& [level, frac] : pvalue_ecdf_points(r, kind))
      os << to_string(kind) << ',' << to_string(r.dgp.name) << ',' << detail::format_number(level)
         << ',' << detail::format_number(frac) << '\n';
  return os.str();
}

inline std::string test_result_csv(const TestResult& r) {
  std::ostringstream os;
  os << "method,statistic,p_value,replications,failed,level,critical_value\n";
  for (const auto& [level, c] : r.critical_values)
    os << to_string(r.statistic.kind) << ',' << detail::format_number(r.statistic.value) << ','
       << detail::format_number(r.p_value) << ',' << r.boot_statistics.size() << ','
       << r.failed_replications << ',' << detail::format_number(level) << ','
       << detail::format_number(c) << '\n';
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_for_write(path);
  out << text;
  detail::finish(out, path);
}

/// JSON: lossless encoding. CSV: rejection table at `path` plus the p-value
/// ecdf at ecdf_path_for(path).
inline void write_report(const SimulationReport& report, const std::filesystem::path& path,
                         ReportFormat format) {
  if (format == ReportFormat::json) {
    write_text(path, to_json(report).dump(2) + "\n");
    return;
  }
  write_text(path, rejection_csv(report));
  write_text(ecdf_path_for(path), ecdf_csv(report));
}

inline void write_report(const TestResult& result, const std::filesystem::path& path,
                         ReportFormat format) {
  write_text(path, format == ReportFormat::json ? to_json(result).dump(2) + "\n"
                                                : test_result_csv(result));
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

inline SimulationReport read_simulation_report(const std::filesystem::path& path) {
  try {
    return simulation_report_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "' is not a simulation report: " + e.what());
  }
}

inline TestResult read_test_result(const std::filesystem::path& path) {
  try {
    return test_result_from_json(read_json_file(path));
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "' is not a test result: " + e.what());
  }
}

}  // namespace gofreg
