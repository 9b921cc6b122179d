#pragma once

// Test processes and their scalar statistics.
//
//   new_ks / new_cvm  sup-norm and Cramer-von-Mises functionals of
//                     alpha_n(t) = n^{-1/2} sum_i (1{Y_i <= t} - F(t | theta, X_i))
//   andrews_ck        conditional Kolmogorov statistic, joint indicator process
//   dikta_mep         marked empirical process of residuals in the fitted direction
//   bierens_icm       simulated integrated conditional moment statistic built on
//                     the empirical vs model conditional characteristic function
//
// StatisticEngine caches everything that depends only on the covariates
// (dominance lists, Fourier phases), which is what the parametric bootstrap
// reuses across replications.

#include "gofreg/dataset.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace gofreg {

enum class TestKind { new_ks, new_cvm, andrews_ck, dikta_mep, bierens_icm };

inline constexpr std::string_view to_string(TestKind kind) noexcept {
  switch (kind) {
    case TestKind::new_ks: return "new_ks";
    case TestKind::new_cvm: return "new_cvm";
    case TestKind::andrews_ck: return "andrews_ck";
    case TestKind::dikta_mep: return "dikta_mep";
    case TestKind::bierens_icm: return "bierens_icm";
  }
  return "?";
}

inline constexpr TestKind all_test_kinds[] = {TestKind::new_ks, TestKind::new_cvm,
                                              TestKind::andrews_ck, TestKind::dikta_mep,
                                              TestKind::bierens_icm};

inline TestKind parse_test_kind(std::string_view name) {
  for (auto kind : all_test_kinds)
    if (to_string(kind) == name) return kind;
  throw LookupError("unknown test '" + std::string(name) + "'");
}

/// alpha_n evaluated at its candidate extremal points. Left limits t- are
/// stored as nextafter(t, -inf); the two infinite sentinels close the list.
struct ProcessEvaluation {
  std::vector<double> eval_points;
  std::vector<double> values;
  double sup_norm = 0.0;
};

struct TestStatistic {
  TestKind kind = TestKind::new_ks;
  double value = 0.0;
  std::map<std::string, double> metadata;
};

/// Frequencies (tau_s, xi_s) drawn uniformly on [-c, c]^{1+p'}.
struct BierensDraws {
  double c = 5.0;
  std::vector<double> tau;
  Matrix xi;  // S x p'

  std::size_t size() const noexcept { return tau.size(); }

  static BierensDraws draw(double c, std::size_t count, std::size_t dimension, Stream& rng) {
    if (!(c > 0.0)) throw DomainError("Bierens c must be positive");
    if (count == 0) throw DomainError("Bierens draw count must be positive");
    BierensDraws d;
    d.c = c;
    d.tau.resize(count);
    d.xi.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dimension));
    for (std::size_t s = 0; s < count; ++s) {
      d.tau[s] = c * (2.0 * rng.uniform() - 1.0);
      for (std::size_t k = 0; k < dimension; ++k)
        d.xi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) =
            c * (2.0 * rng.uniform() - 1.0);
    }
    return d;
  }
};

inline constexpr double default_bierens_c = 5.0;
inline constexpr std::size_t default_bierens_draws = 128;

namespace detail {

inline void check_inputs(const Dataset& data, const FittedModel& model) {
  data.validate();
  if (data.width() != model.spec.coefficients)
    throw DomainError("dataset has " + std::to_string(data.width()) +
                      " covariate columns, model expects " +
                      std::to_string(model.spec.coefficients));
}

/// Distinct sorted responses and the pieces of alpha_n at each of them.
struct JumpTable {
  std::vector<double> points;        // distinct sorted Y
  std::vector<std::size_t> index;    // observation -> position in points
  std::vector<double> ecdf;          // #{Y_i <= t_k} / n
  std::vector<double> ecdf_below;    // #{Y_i <  t_k} / n
  std::vector<double> model;         // mean_i F(t_k | X_i)
  std::vector<double> model_below;   // mean_i F(t_k- | X_i)
  Matrix cdf;                        // F(t_k | X_i), n x K, only when requested
};

inline JumpTable build_jump_table(const Vector& y,
                                  const std::vector<ConditionalDistribution>& rows,
                                  bool keep_matrix) {
  const std::size_t n = rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return y[static_cast<Eigen::Index>(a)] < y[static_cast<Eigen::Index>(b)];
  });

  JumpTable jt;
  jt.index.resize(n);
  std::vector<std::size_t> counts;
  for (std::size_t r = 0; r < n; ++r) {
    const double v = y[static_cast<Eigen::Index>(order[r])];
    if (jt.points.empty() || v != jt.points.back()) {
      jt.points.push_back(v);
      counts.push_back(0);
    }
    ++counts.back();
    jt.index[order[r]] = jt.points.size() - 1;
  }
  const std::size_t K = jt.points.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  jt.ecdf.resize(K);
  jt.ecdf_below.resize(K);
  std::size_t cum = 0;
  for (std::size_t k = 0; k < K; ++k) {
    jt.ecdf_below[k] = static_cast<double>(cum) * inv_n;
    cum += counts[k];
    jt.ecdf[k] = static_cast<double>(cum) * inv_n;
  }

  const bool discrete = !rows.empty() && rows.front().discrete();
  std::vector<double> sum(K, 0.0), sum_mass(K, 0.0);
  if (keep_matrix) jt.cdf.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = rows[i];
    for (std::size_t k = 0; k < K; ++k) {
      const double f = d.cdf(jt.points[k]);
      sum[k] += f;
      if (keep_matrix) jt.cdf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f;
      if (discrete) sum_mass[k] += d.density(jt.points[k]);
    }
  }
  jt.model.resize(K);
  jt.model_below.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    jt.model[k] = sum[k] * inv_n;
    jt.model_below[k] = discrete ? std::max(0.0, (sum[k] - sum_mass[k]) * inv_n) : jt.model[k];
  }
  return jt;
}

inline ProcessEvaluation process_from_table(const JumpTable& jt, std::size_t n) {
  const double root_n = std::sqrt(static_cast<double>(n));
  constexpr double inf = std::numeric_limits<double>::infinity();
  ProcessEvaluation pe;
  pe.eval_points.reserve(2 * jt.points.size() + 2);
  pe.values.reserve(2 * jt.points.size() + 2);
  pe.eval_points.push_back(-inf);
  pe.values.push_back(0.0);
  for (std::size_t k = 0; k < jt.points.size(); ++k) {
    pe.eval_points.push_back(std::nextafter(jt.points[k], -inf));
    pe.values.push_back(root_n * (jt.ecdf_below[k] - jt.model_below[k]));
    pe.eval_points.push_back(jt.points[k]);
    pe.values.push_back(root_n * (jt.ecdf[k] - jt.model[k]));
  }
  pe.eval_points.push_back(inf);
  pe.values.push_back(0.0);
  double sup = 0.0;
  for (double v : pe.values) sup = std::max(sup, std::abs(v));
  pe.sup_norm = sup;
  return pe;
}

/// Exact integral of alpha_n^2 against the averaged model cdf G for
/// continuous families: between jumps the ecdf is a constant e and
/// int n (e - G)^2 dG = n [(G - e)^3 / 3].
inline double cvm_continuous(const JumpTable& jt, std::size_t n) {
  const double dn = static_cast<double>(n);
  auto piece = [](double e, double g0, double g1) {
    const double a = g1 - e, b = g0 - e;
    return (a * a * a - b * b * b) / 3.0;
  };
  double total = 0.0, g_prev = 0.0, e_prev = 0.0;
  for (std::size_t k = 0; k < jt.points.size(); ++k) {
    total += piece(e_prev, g_prev, jt.model[k]);
    g_prev = jt.model[k];
    e_prev = jt.ecdf[k];
  }
  total += piece(e_prev, g_prev, 1.0);
  return dn * total;
}

/// Discrete families: sum over support points s of alpha_n(s)^2 dG(s),
/// visiting each row only on its effective support.
inline double cvm_discrete(const Vector& y, const std::vector<ConditionalDistribution>& rows) {
  const std::size_t n = rows.size();
  const double dn = static_cast<double>(n);
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) std::tie(lo[i], hi[i]) = rows[i].effective_support();
  std::vector<std::size_t> by_lo(n);
  std::iota(by_lo.begin(), by_lo.end(), std::size_t{0});
  std::sort(by_lo.begin(), by_lo.end(), [&](auto a, auto b) { return lo[a] < lo[b]; });
  std::vector<double> sorted_y(y.data(), y.data() + y.size());
  std::sort(sorted_y.begin(), sorted_y.end());

  struct Active {
    std::size_t row;
    double cdf;
  };
  std::vector<Active> active;
  std::size_t next = 0, finished = 0, ecdf_count = 0;
  double s = n > 0 ? lo[by_lo[0]] : 0.0;
  double total = 0.0;
  while (next < n || !active.empty()) {
    if (active.empty()) s = std::max(s, lo[by_lo[next]]);
    while (next < n && lo[by_lo[next]] <= s) active.push_back({by_lo[next++], 0.0});
    double mass = 0.0, cdf_active = 0.0;
    for (auto& a : active) {
      const double pm = rows[a.row].density(s);
      a.cdf += pm;
      mass += pm;
      cdf_active += a.cdf;
    }
    while (ecdf_count < n && sorted_y[ecdf_count] <= s) ++ecdf_count;
    const double g = (static_cast<double>(finished) + cdf_active) / dn;
    const double diff = static_cast<double>(ecdf_count) / dn - g;
    total += dn * diff * diff * (mass / dn);
    std::erase_if(active, [&](const Active& a) {
      if (hi[a.row] <= s) {
        ++finished;
        return true;
      }
      return false;
    });
    s += 1.0;
  }
  return total;
}

}  // namespace detail

/// Evaluates any subset of the five statistics on datasets that share one
/// covariate matrix.
class StatisticEngine {
 public:
  StatisticEngine(const Matrix& covariates, std::span<const TestKind> kinds,
                  std::optional<BierensDraws> draws = std::nullopt)
      : n_(static_cast<std::size_t>(covariates.rows())),
        varying_(varying_columns(covariates)),
        draws_(std::move(draws)) {
    for (auto k : kinds) {
      if (k == TestKind::andrews_ck) build_dominance(covariates);
      if (k == TestKind::bierens_icm) {
        if (!draws_) throw DomainError("bierens_icm needs a frequency draw set");
        build_phases(covariates);
      }
    }
  }

  std::size_t varying_dimension() const noexcept { return varying_.size(); }

  std::vector<TestStatistic> compute(std::span<const TestKind> kinds, const Dataset& data,
                                     const FittedModel& model) const {
    detail::check_inputs(data, model);
    if (data.size() != n_) throw DomainError("dataset does not match the engine's design");
    const auto rows = model.distributions(data);

    bool need_table = false, need_matrix = false;
    for (auto k : kinds) {
      if (k == TestKind::new_ks || k == TestKind::andrews_ck ||
          (k == TestKind::new_cvm && !is_discrete(model.spec.kind)))
        need_table = true;
      if (k == TestKind::andrews_ck) need_matrix = true;
    }
    std::optional<detail::JumpTable> table;
    if (need_table) table = detail::build_jump_table(data.responses, rows, need_matrix);

    std::vector<TestStatistic> out;
    out.reserve(kinds.size());
    for (auto k : kinds) {
      TestStatistic st;
      st.kind = k;
      switch (k) {
        case TestKind::new_ks:
          st.value = detail::process_from_table(*table, n_).sup_norm;
          break;
        case TestKind::new_cvm:
          st.value = is_discrete(model.spec.kind) ? detail::cvm_discrete(data.responses, rows)
                                                  : detail::cvm_continuous(*table, n_);
          break;
        case TestKind::andrews_ck: st.value = andrews(*table, data.responses); break;
        case TestKind::dikta_mep: st.value = dikta(data, model, rows); break;
        case TestKind::bierens_icm:
          st.value = bierens(data.responses, rows);
          st.metadata["c"] = draws_->c;
          st.metadata["draws"] = static_cast<double>(draws_->size());
          break;
      }
      out.push_back(std::move(st));
    }
    return out;
  }

  TestStatistic compute(TestKind kind, const Dataset& data, const FittedModel& model) const {
    const TestKind kinds[] = {kind};
    return compute(kinds, data, model).front();
  }

 private:
  void build_dominance(const Matrix& x) {
    if (!dominated_.empty()) return;
    dominated_.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      for (std::size_t i = 0; i < n_; ++i) {
        bool below = true;
        for (auto c : varying_) {
          if (x(static_cast<Eigen::Index>(i), c) > x(static_cast<Eigen::Index>(j), c)) {
            below = false;
            break;
          }
        }
        if (below) dominated_[j].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }

  void build_phases(const Matrix& x) {
    if (phases_.size() != 0) return;
    const auto S = static_cast<Eigen::Index>(draws_->size());
    if (static_cast<std::size_t>(draws_->xi.cols()) != varying_.size())
      throw DomainError("Bierens draws have dimension " + std::to_string(draws_->xi.cols()) +
                        " but the design has " + std::to_string(varying_.size()) +
                        " non-constant columns");
    phases_.resize(S, static_cast<Eigen::Index>(n_));
    for (Eigen::Index s = 0; s < S; ++s) {
      for (std::size_t j = 0; j < n_; ++j) {
        double arg = 0.0;
        for (std::size_t k = 0; k < varying_.size(); ++k)
          arg += draws_->xi(s, static_cast<Eigen::Index>(k)) *
                 x(static_cast<Eigen::Index>(j), varying_[k]);
        phases_(s, static_cast<Eigen::Index>(j)) = std::polar(1.0, arg);
      }
    }
  }

  double andrews(const detail::JumpTable& jt, const Vector& y) const {
    double best = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t k = jt.index[j];
      const double yj = y[static_cast<Eigen::Index>(j)];
      double acc = 0.0;
      for (auto i : dominated_[j]) {
        acc += (y[static_cast<Eigen::Index>(i)] <= yj ? 1.0 : 0.0) -
               jt.cdf(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      }
      best = std::max(best, std::abs(acc));
    }
    return best / std::sqrt(static_cast<double>(n_));
  }

  double dikta(const Dataset& data, const FittedModel& model,
               const std::vector<ConditionalDistribution>& rows) const {
    const Vector eta = data.covariates * model.coefficients();
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      return eta[static_cast<Eigen::Index>(a)] < eta[static_cast<Eigen::Index>(b)];
    });
    const bool logged = model.spec.kind == FamilyKind::log_gaussian_linear;
    double cum = 0.0, best = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t i = order[r];
      const double yi = data.responses[static_cast<Eigen::Index>(i)];
      cum += logged ? std::log(yi) - rows[i].location : yi - rows[i].mean();
      const bool group_end = r + 1 == n_ || eta[static_cast<Eigen::Index>(order[r + 1])] !=
                                                eta[static_cast<Eigen::Index>(i)];
      if (group_end) best = std::max(best, std::abs(cum));
    }
    return best / std::sqrt(static_cast<double>(n_));
  }

  double bierens(const Vector& y, const std::vector<ConditionalDistribution>& rows) const {
    const std::size_t S = draws_->size();
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double tau = draws_->tau[s];
      std::complex<double> z{0.0, 0.0};
      for (std::size_t j = 0; j < n_; ++j) {
        const std::complex<double> term =
            std::polar(1.0, tau * y[static_cast<Eigen::Index>(j)]) - rows[j].characteristic(tau);
        z += term * phases_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
      }
      total += std::norm(z) / static_cast<double>(n_);
    }
    return total / static_cast<double>(S);
  }

  std::size_t n_;
  std::vector<Eigen::Index> varying_;
  std::optional<BierensDraws> draws_;
  std::vector<std::vector<std::uint32_t>> dominated_;
  Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phases_;
};

/// alpha_n at the jump points of the ecdf, their left limits and +-inf.
inline ProcessEvaluation new_process(const Dataset& data, const FittedModel& model) {
  detail::check_inputs(data, model);
  const auto rows = model.distributions(data);
  const auto jt = detail::build_jump_table(data.responses, rows, false);
  return detail::process_from_table(jt, data.size());
}

/// alpha_n(t) at a single point, straight from the definition.
inline double process_at(const Dataset& data, const FittedModel& model, double t) {
  detail::check_inputs(data, model);
  const auto rows = model.distributions(data);
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    acc += (data.responses[static_cast<Eigen::Index>(i)] <= t ? 1.0 : 0.0) - rows[i].cdf(t);
  return acc / std::sqrt(static_cast<double>(rows.size()));
}

inline TestStatistic new_ks_statistic(const Dataset& data, const FittedModel& model) {
  return {TestKind::new_ks, new_process(data, model).sup_norm, {}};
}

inline TestStatistic new_cvm_statistic(const Dataset& data, const FittedModel& model) {
  detail::check_inputs(data, model);
  return StatisticEngine(data.covariates, {}).compute(TestKind::new_cvm, data, model);
}

inline TestStatistic andrews_ck_statistic(const Dataset& data, const FittedModel& model) {
  detail::check_inputs(data, model);
  const TestKind kinds[] = {TestKind::andrews_ck};
  return StatisticEngine(data.covariates, kinds).compute(TestKind::andrews_ck, data, model);
}

inline TestStatistic dikta_mep_statistic(const Dataset& data, const FittedModel& model) {
  detail::check_inputs(data, model);
  return StatisticEngine(data.covariates, {}).compute(TestKind::dikta_mep, data, model);
}

/// Families with a closed-form characteristic function.
inline constexpr bool supports_bierens(FamilyKind kind) noexcept {
  return kind == FamilyKind::gaussian_linear || kind == FamilyKind::poisson_glm ||
         kind == FamilyKind::gamma_glm || kind == FamilyKind::negbin_glm;
}

inline TestStatistic bierens_icm_statistic(const Dataset& data, const FittedModel& model,
                                           double c, std::size_t draws, Stream& rng) {
  detail::check_inputs(data, model);
  if (!supports_bierens(model.spec.kind))
    throw UnsupportedFamilyError("no closed-form characteristic function for " +
                                 std::string(to_string(model.spec.kind)));
  const auto dim = varying_columns(data.covariates).size();
  auto set = BierensDraws::draw(c, draws, dim, rng);
  const TestKind kinds[] = {TestKind::bierens_icm};
  return StatisticEngine(data.covariates, kinds, std::move(set))
      .compute(TestKind::bierens_icm, data, model);
}

}  // namespace gofreg
