#pragma once

// Parametric bootstrap for conditional goodness-of-fit statistics.
//
// Replication k:
//   (1) keep the covariates, X*_i = X_i
//   (2) draw Y*_i ~ F(. | theta_hat, X_i) from the stream keyed (seed, k)
//   (3) refit theta* on (X, Y*), warm-started at theta_hat
//   (4) evaluate the same statistic with F(. | theta*, .)
// p_value = #{boot >= A} / m', with m' the number of successful refits.

#include "gofreg/dataset.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/fit.hpp"
#include "gofreg/gof_tests.hpp"
#include "gofreg/parallel.hpp"
#include "gofreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gofreg {

struct BootstrapConfig {
  std::size_t replications = 200;
  std::uint64_t master_seed = 20240101;
  double max_fit_failures = 0.01;
  bool parallel = true;
  /// Worker count when parallel; 0 means one per hardware thread.
  unsigned threads = 0;
  double bierens_c = default_bierens_c;
  std::size_t bierens_draws = default_bierens_draws;
  std::vector<double> levels{0.01, 0.05};

  void validate() const {
    if (replications < 1) throw DomainError("bootstrap needs at least one replication");
    if (!(max_fit_failures >= 0.0 && max_fit_failures < 1.0))
      throw DomainError("max_fit_failures must lie in [0, 1)");
    if (!(bierens_c > 0.0)) throw DomainError("bierens_c must be positive");
    if (bierens_draws < 1) throw DomainError("bierens_draws must be positive");
    for (double a : levels)
      if (!(a > 0.0 && a < 1.0)) throw DomainError("significance levels must lie in (0, 1)");
  }

  unsigned worker_count() const noexcept {
    if (!parallel) return 1;
    return threads == 0 ? default_thread_count() : threads;
  }

  friend bool operator==(const BootstrapConfig&, const BootstrapConfig&) = default;
};

struct TestResult {
  TestStatistic statistic;
  /// Successful replications, in replication-index order.
  std::vector<double> boot_statistics;
  double p_value = 1.0;
  std::map<double, double> critical_values;
  std::size_t failed_replications = 0;
  BootstrapConfig config;
};

/// Monte Carlo p-value: fraction of bootstrap statistics >= the observed value.
inline double monte_carlo_p_value(std::span<const double> boot, double observed) {
  if (boot.empty()) throw DomainError("no bootstrap statistics");
  const auto hits = std::count_if(boot.begin(), boot.end(),
                                  [&](double b) { return b >= observed; });
  return static_cast<double>(hits) / static_cast<double>(boot.size());
}

/// Smallest bootstrap statistic c with #{boot > c} / m <= alpha.
inline double critical_value(std::span<const double> boot, double alpha) {
  if (boot.empty()) throw DomainError("no bootstrap statistics");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  std::vector<double> sorted(boot.begin(), boot.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    // Elements strictly greater than sorted[k].
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), sorted[k]);
    if (static_cast<double>(above) / m <= alpha) return sorted[k];
  }
  return sorted.back();
}

inline double bootstrap_critical_value(const TestResult& result, double alpha) {
  return critical_value(result.boot_statistics, alpha);
}

/// Step (2): fresh responses from F(. | theta_hat, X_i), one per row.
inline Vector resample_responses(const FittedModel& model, const Matrix& covariates,
                                 Stream& rng, const Vector& trials = Vector()) {
  if (static_cast<std::size_t>(covariates.cols()) != model.spec.coefficients)
    throw DomainError("covariates do not match the model's design width");
  const auto n = covariates.rows();
  Vector y(n);
  const Vector eta = covariates * model.coefficients();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tr = trials.size() == 0 ? 1.0 : trials[i];
    y[i] = model.distribution_at_eta(eta[i], tr).sample(rng);
  }
  return y;
}

namespace detail {

inline TestResult finalize(const TestStatistic& observed, std::vector<double> boot,
                           std::size_t failed, const BootstrapConfig& config) {
  TestResult r;
  r.statistic = observed;
  r.boot_statistics = std::move(boot);
  r.failed_replications = failed;
  r.config = config;
  r.p_value = monte_carlo_p_value(r.boot_statistics, observed.value);
  for (double a : config.levels) r.critical_values[a] = critical_value(r.boot_statistics, a);
  return r;
}

}  // namespace detail

/// Runs the bootstrap once for several statistics. Every replication draws
/// one bootstrap sample and one refit that all statistics share; the result
/// for each kind is identical to a separate single-kind run with the same
/// configuration.
inline std::vector<TestResult> bootstrap_tests(std::span<const TestKind> kinds,
                                               const FamilySpec& spec, const Dataset& data,
                                               const BootstrapConfig& config) {
  config.validate();
  if (kinds.empty()) throw DomainError("no test kinds requested");
  const FittedModel fitted = fit_mle(spec, data);

  std::optional<BierensDraws> draws;
  if (std::find(kinds.begin(), kinds.end(), TestKind::bierens_icm) != kinds.end()) {
    if (!supports_bierens(spec.kind))
      throw UnsupportedFamilyError("no closed-form characteristic function for " +
                                   std::string(to_string(spec.kind)));
    Stream rng = substream(config.master_seed, StreamTag::bierens_draws);
    draws = BierensDraws::draw(config.bierens_c, config.bierens_draws,
                               varying_columns(data.covariates).size(), rng);
  }
  const StatisticEngine engine(data.covariates, kinds, draws);
  const auto observed = engine.compute(kinds, data, fitted);

  const std::size_t m = config.replications;
  std::vector<std::optional<std::vector<double>>> slots(m);
  FitOptions refit;
  refit.start = fitted.theta_hat;

  parallel_for(m, config.worker_count(), [&](std::size_t k) {
    Stream rng = substream(config.master_seed, StreamTag::bootstrap_replication, {k});
    Dataset boot = data.with_responses(resample_responses(fitted, data.covariates, rng,
                                                          data.trials));
    std::vector<TestStatistic> stats;
    try {
      stats = engine.compute(kinds, boot, fit_mle(spec, boot, refit));
    } catch (const Error&) {
      return;  // counted as a failed replication
    }
    std::vector<double> values;
    values.reserve(stats.size());
    for (const auto& s : stats) values.push_back(s.value);
    slots[k] = std::move(values);
  });

  std::size_t failed = 0;
  for (const auto& s : slots) failed += s ? 0 : 1;
  if (static_cast<double>(failed) > config.max_fit_failures * static_cast<double>(m) ||
      failed == m)
    throw ConvergenceError(std::to_string(failed) + " of " + std::to_string(m) +
                               " bootstrap refits failed, above the allowed fraction " +
                               std::to_string(config.max_fit_failures),
                           fitted.theta_hat, fitted.gradient_norm, 0);

  std::vector<TestResult> results;
  results.reserve(kinds.size());
  for (std::size_t t = 0; t < kinds.size(); ++t) {
    std::vector<double> boot;
    boot.reserve(m - failed);
    for (const auto& s : slots)
      if (s) boot.push_back((*s)[t]);
    results.push_back(detail::finalize(observed[t], std::move(boot), failed, config));
  }
  return results;
}

inline TestResult bootstrap_test(TestKind kind, const FamilySpec& spec, const Dataset& data,
                                 const BootstrapConfig& config) {
  const TestKind kinds[] = {kind};
  return bootstrap_tests(kinds, spec, data, config).front();
}

}  // namespace gofreg
