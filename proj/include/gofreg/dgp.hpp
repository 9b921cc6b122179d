#pragma once

// Data-generating processes for power studies and the rejection-study driver.
//
// X ~ N(0, 1) in every process; the design is [1, X].
//   C0  Y = 1 + X + e,        e ~ N(0, 1)
//   C1  Y = 1 + X + e,        e standard logistic
//   C2  Y = 1 + X + e,        e ~ t_5
//   C3  Y = 1 + X + X^2 + e,  e ~ N(0, 1)
//   C4  Y = 1 + X + X e,      e ~ N(0, 1)
//   D0  Y ~ Poisson(exp(2 + 3X))
//   D1  Y ~ Binom(ceil(1.25 exp(2 + 3X)), 0.8)
//   D2  Y ~ Binom(ceil(2 exp(2 + 3X)), 0.5)
//   D3  Y ~ Binom(ceil(10 exp(2 + 3X)), 0.1)
//   D4  Y ~ NB(r = 0.25 exp(2 + 3X), p = 0.2)
// All D processes share the conditional mean exp(2 + 3X).

#include "gofreg/bootstrap.hpp"
#include "gofreg/dataset.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/gof_tests.hpp"
#include "gofreg/parallel.hpp"
#include "gofreg/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gofreg {

enum class DgpName { C0, C1, C2, C3, C4, D0, D1, D2, D3, D4 };

inline constexpr DgpName all_dgps[] = {DgpName::C0, DgpName::C1, DgpName::C2, DgpName::C3,
                                       DgpName::C4, DgpName::D0, DgpName::D1, DgpName::D2,
                                       DgpName::D3, DgpName::D4};

inline constexpr std::string_view to_string(DgpName name) noexcept {
  constexpr std::string_view names[] = {"C0", "C1", "C2", "C3", "C4",
                                        "D0", "D1", "D2", "D3", "D4"};
  return names[static_cast<int>(name)];
}

inline DgpName parse_dgp(std::string_view name) {
  for (auto d : all_dgps)
    if (to_string(d) == name) return d;
  throw LookupError("unknown DGP '" + std::string(name) + "'");
}

inline constexpr bool is_count_dgp(DgpName name) noexcept {
  return static_cast<int>(name) >= static_cast<int>(DgpName::D0);
}

struct DgpSpec {
  DgpName name = DgpName::C0;
  std::size_t n = 200;

  void validate() const {
    if (n < 2) throw DomainError("DGP sample size must be at least 2");
  }

  friend bool operator==(const DgpSpec&, const DgpSpec&) = default;
};

/// Null family of the studies: Gaussian linear (beta, sigma) for the C
/// series, Poisson with log link for the D series.
inline FamilySpec default_null_family(DgpName name) {
  return FamilySpec::make(is_count_dgp(name) ? FamilyKind::poisson_glm
                                             : FamilyKind::gaussian_linear,
                          2);
}

inline Dataset generate_dgp(const DgpSpec& spec, Stream& rng) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  Dataset d;
  d.covariates.resize(n, 2);
  d.responses.resize(n);
  d.column_names = {"(Intercept)", "x"};
  static const boost::math::students_t_distribution<double, detail::boost_policy> t5(5.0);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = detail::standard_normal(rng);
    d.covariates(i, 0) = 1.0;
    d.covariates(i, 1) = x;
    const double mean = std::exp(2.0 + 3.0 * x);
    double y = 0.0;
    switch (spec.name) {
      case DgpName::C0: y = 1.0 + x + detail::standard_normal(rng); break;
      case DgpName::C1: {
        const double u = rng.uniform_open();
        y = 1.0 + x + std::log(u / (1.0 - u));
        break;
      }
      case DgpName::C2: y = 1.0 + x + quantile(t5, rng.uniform_open()); break;
      case DgpName::C3: y = 1.0 + x + x * x + detail::standard_normal(rng); break;
      case DgpName::C4: y = 1.0 + x + x * detail::standard_normal(rng); break;
      case DgpName::D0:
        y = static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
        break;
      case DgpName::D1:
      case DgpName::D2:
      case DgpName::D3: {
        const double factor = spec.name == DgpName::D1 ? 1.25 : spec.name == DgpName::D2 ? 2.0 : 10.0;
        const double prob = spec.name == DgpName::D1 ? 0.8 : spec.name == DgpName::D2 ? 0.5 : 0.1;
        const auto trials = static_cast<long long>(std::ceil(factor * mean));
        y = static_cast<double>(std::binomial_distribution<long long>(trials, prob)(rng));
        break;
      }
      case DgpName::D4: {
        ConditionalDistribution nb;
        nb.kind = FamilyKind::negbin_glm;
        nb.aux = 0.25 * mean;
        // p = r / (r + mean) = 0.2
        nb.location = mean;
        y = nb.sample(rng);
        break;
      }
    }
    d.responses[i] = y;
  }
  return d;
}

struct TestSummary {
  std::vector<double> p_values;
  std::map<double, double> rejection_at;
};

struct SimulationReport {
  DgpSpec dgp;
  FamilySpec null_family;
  std::map<TestKind, TestSummary> per_test;
  std::size_t repetitions = 0;
  std::uint64_t seed = 0;
  BootstrapConfig config;
  std::vector<double> levels;
  std::size_t failed_repetitions = 0;
  std::map<std::string, double> metadata;
};

/// Fraction of p-values at or below alpha.
inline double rejection_fraction(const std::vector<double>& p_values, double alpha) {
  if (p_values.empty()) return 0.0;
  const auto hits =
      std::count_if(p_values.begin(), p_values.end(), [&](double p) { return p <= alpha; });
  return static_cast<double>(hits) / static_cast<double>(p_values.size());
}

/// R independent repetitions of: fresh dataset, bootstrap p-value per test.
///
/// Repetition r draws its data from the stream keyed (seed, r, attempt) and
/// runs its bootstrap under a master seed derived from (seed, r), so the
/// report does not depend on how repetitions are scheduled. A repetition
/// whose original fit fails is retried with the next attempt index; more
/// than 2% such retries abort the study.
inline SimulationReport rejection_study(const DgpSpec& dgp, const FamilySpec& null_family,
                                        const std::vector<TestKind>& tests,
                                        std::size_t repetitions, const BootstrapConfig& boot,
                                        const std::vector<double>& levels, std::uint64_t seed,
                                        unsigned threads = 0) {
  dgp.validate();
  boot.validate();
  if (repetitions < 1) throw DomainError("a study needs at least one repetition");
  if (tests.empty()) throw DomainError("a study needs at least one test");
  for (double a : levels)
    if (!(a > 0.0 && a < 1.0)) throw DomainError("significance levels must lie in (0, 1)");

  const std::size_t max_retries =
      static_cast<std::size_t>(std::floor(0.02 * static_cast<double>(repetitions)));
  std::vector<std::vector<double>> p_values(repetitions);
  std::vector<std::size_t> retries(repetitions, 0);

  BootstrapConfig inner = boot;
  inner.parallel = false;

  parallel_for(repetitions, threads == 0 ? default_thread_count() : threads,
               [&](std::size_t r) {
                 BootstrapConfig cfg = inner;
                 cfg.master_seed = derive_seed(seed, {static_cast<std::uint64_t>(
                                                          StreamTag::repetition_seed),
                                                      r});
                 for (std::size_t attempt = 0;; ++attempt) {
                   Stream rng = substream(seed, StreamTag::dgp_data, {r, attempt});
                   const Dataset data = generate_dgp(dgp, rng);
                   try {
                     const auto results = bootstrap_tests(tests, null_family, data, cfg);
                     p_values[r].reserve(results.size());
                     for (const auto& res : results) p_values[r].push_back(res.p_value);
                     return;
                   } catch (const Error&) {
                     if (attempt >= max_retries) throw;
                     ++retries[r];
                   }
                 }
               });

  SimulationReport report;
  report.dgp = dgp;
  report.null_family = null_family;
  report.repetitions = repetitions;
  report.seed = seed;
  report.config = boot;
  report.levels = levels;
  for (auto r : retries) report.failed_repetitions += r;
  if (report.failed_repetitions > max_retries)
    throw ConvergenceError(std::to_string(report.failed_repetitions) +
                               " repetitions needed a retry, above 2% of " +
                               std::to_string(repetitions),
                           Vector(), 0.0, 0);
  for (std::size_t t = 0; t < tests.size(); ++t) {
    TestSummary& summary = report.per_test[tests[t]];
    summary.p_values.reserve(repetitions);
    for (std::size_t r = 0; r < repetitions; ++r) summary.p_values.push_back(p_values[r][t]);
    for (double a : levels) summary.rejection_at[a] = rejection_fraction(summary.p_values, a);
  }
  if (std::find(tests.begin(), tests.end(), TestKind::bierens_icm) != tests.end()) {
    report.metadata["bierens_c"] = boot.bierens_c;
    report.metadata["bierens_draws"] = static_cast<double>(boot.bierens_draws);
  }
  return report;
}

/// Step points (p, F_R(p)) of the p-value ecdf, one per distinct p-value.
inline std::vector<std::pair<double, double>> pvalue_ecdf_points(const SimulationReport& report,
                                                                 TestKind kind) {
  const auto it = report.per_test.find(kind);
  if (it == report.per_test.end())
    throw LookupError("test '" + std::string(to_string(kind)) + "' is not in the report");
  std::vector<double> p = it->second.p_values;
  std::sort(p.begin(), p.end());
  std::vector<std::pair<double, double>> out;
  const double total = static_cast<double>(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k + 1 < p.size() && p[k + 1] == p[k]) continue;
    out.emplace_back(p[k], static_cast<double>(k + 1) / total);
  }
  return out;
}

}  // namespace gofreg
