#pragma once

// Parametric conditional distribution families F(. | theta, x).
//
// theta = (beta, aux): regression coefficients for the linear predictor
// eta = x' beta, followed by at most one positive auxiliary parameter
// (Gaussian sigma, Gamma shape, negative binomial size r).

#include "gofreg/dataset.hpp"
#include "gofreg/error.hpp"
#include "gofreg/rng.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gofreg {

enum class FamilyKind {
  gaussian_linear,
  log_gaussian_linear,
  gamma_glm,
  poisson_glm,
  negbin_glm,
  binomial_glm,
};

enum class Link { identity, log, logit };

inline constexpr std::string_view to_string(FamilyKind kind) noexcept {
  switch (kind) {
    case FamilyKind::gaussian_linear: return "gaussian_linear";
    case FamilyKind::log_gaussian_linear: return "log_gaussian_linear";
    case FamilyKind::gamma_glm: return "gamma_glm";
    case FamilyKind::poisson_glm: return "poisson_glm";
    case FamilyKind::negbin_glm: return "negbin_glm";
    case FamilyKind::binomial_glm: return "binomial_glm";
  }
  return "?";
}

inline constexpr std::string_view to_string(Link link) noexcept {
  switch (link) {
    case Link::identity: return "identity";
    case Link::log: return "log";
    case Link::logit: return "logit";
  }
  return "?";
}

inline FamilyKind parse_family_kind(std::string_view name) {
  for (auto kind : {FamilyKind::gaussian_linear, FamilyKind::log_gaussian_linear,
                    FamilyKind::gamma_glm, FamilyKind::poisson_glm, FamilyKind::negbin_glm,
                    FamilyKind::binomial_glm}) {
    if (to_string(kind) == name) return kind;
  }
  throw LookupError("unknown family '" + std::string(name) + "'");
}

inline Link parse_link(std::string_view name) {
  for (auto link : {Link::identity, Link::log, Link::logit}) {
    if (to_string(link) == name) return link;
  }
  throw LookupError("unknown link '" + std::string(name) + "'");
}

inline constexpr bool is_discrete(FamilyKind kind) noexcept {
  return kind == FamilyKind::poisson_glm || kind == FamilyKind::negbin_glm ||
         kind == FamilyKind::binomial_glm;
}

inline constexpr bool has_auxiliary(FamilyKind kind) noexcept {
  return kind == FamilyKind::gaussian_linear || kind == FamilyKind::log_gaussian_linear ||
         kind == FamilyKind::gamma_glm || kind == FamilyKind::negbin_glm;
}

inline constexpr Link canonical_link(FamilyKind kind) noexcept {
  switch (kind) {
    case FamilyKind::gaussian_linear:
    case FamilyKind::log_gaussian_linear: return Link::identity;
    case FamilyKind::binomial_glm: return Link::logit;
    default: return Link::log;
  }
}

inline constexpr bool link_admissible(FamilyKind kind, Link link) noexcept {
  switch (kind) {
    case FamilyKind::gaussian_linear:
    case FamilyKind::log_gaussian_linear: return link == Link::identity;
    case FamilyKind::gamma_glm: return link == Link::log || link == Link::identity;
    case FamilyKind::poisson_glm:
    case FamilyKind::negbin_glm: return link == Link::log;
    case FamilyKind::binomial_glm: return link == Link::logit;
  }
  return false;
}

struct FamilySpec {
  FamilyKind kind = FamilyKind::gaussian_linear;
  Link link = Link::identity;
  std::size_t coefficients = 1;

  std::size_t parameter_dimension() const noexcept {
    return coefficients + (has_auxiliary(kind) ? 1 : 0);
  }

  void validate() const {
    if (coefficients == 0) throw DomainError("family needs at least one coefficient");
    if (!link_admissible(kind, link))
      throw DomainError("link '" + std::string(to_string(link)) + "' is not admissible for " +
                        std::string(to_string(kind)));
  }

  static FamilySpec make(FamilyKind kind, std::size_t coefficients,
                         std::optional<Link> link = std::nullopt) {
    FamilySpec spec{kind, link.value_or(canonical_link(kind)), coefficients};
    spec.validate();
    return spec;
  }

  friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

namespace detail {

using boost_policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

inline constexpr double inv_sqrt2 = 0.70710678118654752440;

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z * inv_sqrt2); }

inline double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

inline double standard_normal(Stream& rng) {
  return std::normal_distribution<double>{}(rng);
}

inline bool is_count(double y) noexcept { return y >= 0.0 && std::floor(y) == y; }

inline double apply_inverse_link(Link link, double eta) {
  if (!std::isfinite(eta)) throw NumericRangeError("non-finite linear predictor");
  double mu = eta;
  switch (link) {
    case Link::identity: break;
    case Link::log: mu = std::exp(eta); break;
    case Link::logit: mu = 1.0 / (1.0 + std::exp(-eta)); break;
  }
  if (!std::isfinite(mu)) throw NumericRangeError("linear predictor overflow (eta = " +
                                                  std::to_string(eta) + ")");
  return mu;
}

}  // namespace detail

/// F(. | theta, x) for one covariate row, with every parameter resolved.
///
/// `location` is the Gaussian mean (of log Y for the log-Gaussian family),
/// the mean for gamma / Poisson / negative binomial, and the success
/// probability for the binomial. `aux` is sigma, the Gamma shape or the
/// negative binomial size r.
struct ConditionalDistribution {
  FamilyKind kind = FamilyKind::gaussian_linear;
  double location = 0.0;
  double aux = 1.0;
  double trials = 1.0;

  bool discrete() const noexcept { return is_discrete(kind); }

  /// Success probability p of the (r, p) negative binomial parameterization.
  double negbin_p() const noexcept { return aux / (aux + location); }

  /// Regression function m(x) = E[Y | x].
  double mean() const noexcept {
    switch (kind) {
      case FamilyKind::log_gaussian_linear: return std::exp(location + 0.5 * aux * aux);
      case FamilyKind::binomial_glm: return trials * location;
      default: return location;
    }
  }

  double cdf(double t) const {
    if (std::isnan(t)) throw DomainError("cdf evaluated at NaN");
    if (t == std::numeric_limits<double>::infinity()) return 1.0;
    if (t == -std::numeric_limits<double>::infinity()) return 0.0;
    using namespace boost::math;
    switch (kind) {
      case FamilyKind::gaussian_linear: return detail::normal_cdf((t - location) / aux);
      case FamilyKind::log_gaussian_linear:
        return t <= 0.0 ? 0.0 : detail::normal_cdf((std::log(t) - location) / aux);
      case FamilyKind::gamma_glm:
        return t <= 0.0 ? 0.0 : gamma_p(aux, t * aux / location, detail::boost_policy());
      case FamilyKind::poisson_glm:
        if (t < 0.0) return 0.0;
        return gamma_q(std::floor(t) + 1.0, location, detail::boost_policy());
      case FamilyKind::negbin_glm:
        if (t < 0.0) return 0.0;
        return ibeta(aux, std::floor(t) + 1.0, negbin_p(), detail::boost_policy());
      case FamilyKind::binomial_glm: {
        if (t < 0.0) return 0.0;
        const double k = std::floor(t);
        if (k >= trials) return 1.0;
        if (location <= 0.0) return 1.0;
        if (location >= 1.0) return 0.0;
        return ibeta(trials - k, k + 1.0, 1.0 - location, detail::boost_policy());
      }
    }
    return 0.0;
  }

  /// P(Y < t), the left limit of the cdf.
  double cdf_below(double t) const {
    if (!discrete()) return cdf(t);
    if (std::isinf(t)) return cdf(t);
    return cdf(std::ceil(t) - 1.0);
  }

  /// Density for continuous kinds, probability mass for discrete kinds.
  double density(double y) const {
    if (std::isnan(y)) throw DomainError("density evaluated at NaN");
    if (std::isinf(y)) return 0.0;
    switch (kind) {
      case FamilyKind::gaussian_linear:
        return detail::normal_pdf((y - location) / aux) / aux;
      case FamilyKind::log_gaussian_linear:
        if (y <= 0.0) return 0.0;
        return detail::normal_pdf((std::log(y) - location) / aux) / (aux * y);
      case FamilyKind::gamma_glm: {
        if (y <= 0.0) return 0.0;
        const double scale = location / aux;
        return std::exp((aux - 1.0) * std::log(y) - y / scale - std::lgamma(aux) -
                        aux * std::log(scale));
      }
      case FamilyKind::poisson_glm:
        if (!detail::is_count(y)) return 0.0;
        return std::exp(y * std::log(location) - location - std::lgamma(y + 1.0));
      case FamilyKind::negbin_glm: {
        if (!detail::is_count(y)) return 0.0;
        const double p = negbin_p();
        return std::exp(std::lgamma(y + aux) - std::lgamma(aux) - std::lgamma(y + 1.0) +
                        aux * std::log(p) + y * std::log1p(-p));
      }
      case FamilyKind::binomial_glm: {
        if (!detail::is_count(y) || y > trials) return 0.0;
        if (location <= 0.0) return y == 0.0 ? 1.0 : 0.0;
        if (location >= 1.0) return y == trials ? 1.0 : 0.0;
        return std::exp(std::lgamma(trials + 1.0) - std::lgamma(y + 1.0) -
                        std::lgamma(trials - y + 1.0) + y * std::log(location) +
                        (trials - y) * std::log1p(-location));
      }
    }
    return 0.0;
  }

  double sample(Stream& rng) const {
    switch (kind) {
      case FamilyKind::gaussian_linear:
        return location + aux * detail::standard_normal(rng);
      case FamilyKind::log_gaussian_linear:
        return std::exp(location + aux * detail::standard_normal(rng));
      case FamilyKind::gamma_glm:
        return std::gamma_distribution<double>(aux, location / aux)(rng);
      case FamilyKind::poisson_glm:
        return static_cast<double>(std::poisson_distribution<long long>(location)(rng));
      case FamilyKind::negbin_glm: {
        // Gamma-Poisson mixture; r need not be an integer.
        const double p = negbin_p();
        const double rate = std::gamma_distribution<double>(aux, (1.0 - p) / p)(rng);
        if (rate <= 0.0) return 0.0;
        return static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
      }
      case FamilyKind::binomial_glm:
        return static_cast<double>(std::binomial_distribution<long long>(
            static_cast<long long>(trials), location)(rng));
    }
    return 0.0;
  }

  /// E[exp(i tau Y)] in closed form.
  std::complex<double> characteristic(double tau) const {
    using cd = std::complex<double>;
    const cd i{0.0, 1.0};
    switch (kind) {
      case FamilyKind::gaussian_linear:
        return std::exp(cd{-0.5 * tau * tau * aux * aux, tau * location});
      case FamilyKind::poisson_glm:
        return std::exp(location * (std::exp(i * tau) - 1.0));
      case FamilyKind::gamma_glm: {
        const double scale = location / aux;
        return std::exp(-aux * std::log(cd{1.0, -tau * scale}));
      }
      case FamilyKind::negbin_glm: {
        const double p = negbin_p();
        return std::exp(aux * (std::log(p) - std::log(1.0 - (1.0 - p) * std::exp(i * tau))));
      }
      default:
        throw UnsupportedFamilyError("no closed-form characteristic function for " +
                                     std::string(to_string(kind)));
    }
  }

  /// Integer range [lo, hi] outside of which a discrete law carries less
  /// than 1e-18 probability on either side.
  std::pair<double, double> effective_support() const {
    using namespace boost::math;
    constexpr double tail = 1e-18;
    switch (kind) {
      case FamilyKind::poisson_glm: {
        poisson_distribution<double, detail::boost_policy> d(location);
        return {quantile(d, tail), quantile(complement(d, tail))};
      }
      case FamilyKind::negbin_glm: {
        negative_binomial_distribution<double, detail::boost_policy> d(aux, negbin_p());
        return {quantile(d, tail), quantile(complement(d, tail))};
      }
      case FamilyKind::binomial_glm: {
        if (location <= 0.0) return {0.0, 0.0};
        if (location >= 1.0) return {trials, trials};
        binomial_distribution<double, detail::boost_policy> d(trials, location);
        return {quantile(d, tail), quantile(complement(d, tail))};
      }
      default:
        throw DomainError("effective_support is defined for discrete families only");
    }
  }
};

/// A family together with a parameter value theta. Immutable once built.
struct FittedModel {
  FamilySpec spec;
  Vector theta_hat;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;

  /// A model at a given parameter, without fitting (true-parameter
  /// comparisons, hand-built test fixtures).
  static FittedModel at(const FamilySpec& spec, Vector theta) {
    spec.validate();
    if (static_cast<std::size_t>(theta.size()) != spec.parameter_dimension())
      throw DomainError("theta has length " + std::to_string(theta.size()) + ", expected " +
                        std::to_string(spec.parameter_dimension()));
    FittedModel m;
    m.spec = spec;
    m.theta_hat = std::move(theta);
    if (has_auxiliary(spec.kind) && !(m.auxiliary() > 0.0))
      throw DomainError("auxiliary parameter must be strictly positive");
    return m;
  }

  auto coefficients() const { return theta_hat.head(static_cast<Eigen::Index>(spec.coefficients)); }

  /// sigma, shape or size; 0 for families without one.
  double auxiliary() const noexcept {
    return has_auxiliary(spec.kind) ? theta_hat[static_cast<Eigen::Index>(spec.coefficients)]
                                    : 0.0;
  }

  double linear_predictor(RowRef x) const {
    if (static_cast<std::size_t>(x.size()) != spec.coefficients)
      throw DomainError("covariate row has length " + std::to_string(x.size()) + ", expected " +
                        std::to_string(spec.coefficients));
    return x.dot(coefficients());
  }

  ConditionalDistribution distribution_at_eta(double eta, double trials = 1.0) const {
    ConditionalDistribution d;
    d.kind = spec.kind;
    d.location = detail::apply_inverse_link(spec.link, eta);
    d.aux = has_auxiliary(spec.kind) ? auxiliary() : 1.0;
    d.trials = trials;
    if ((spec.kind == FamilyKind::gamma_glm || spec.kind == FamilyKind::negbin_glm) &&
        !(d.location > 0.0))
      throw NumericRangeError("mean must be positive, got " + std::to_string(d.location));
    return d;
  }

  ConditionalDistribution distribution(RowRef x, double trials = 1.0) const {
    return distribution_at_eta(linear_predictor(x), trials);
  }

  std::vector<ConditionalDistribution> distributions(const Dataset& data) const {
    std::vector<ConditionalDistribution> out;
    out.reserve(data.size());
    const Vector eta = data.covariates * coefficients();
    for (std::size_t i = 0; i < data.size(); ++i)
      out.push_back(distribution_at_eta(eta[static_cast<Eigen::Index>(i)], data.trials_at(i)));
    return out;
  }
};

/// F(t | theta_hat, x).
inline double cond_cdf(const FittedModel& model, double t, RowRef x, double trials = 1.0) {
  return model.distribution(x, trials).cdf(t);
}

/// f(y | theta_hat, x): density or probability mass; 0 outside the support.
inline double cond_density(const FittedModel& model, double y, RowRef x, double trials = 1.0) {
  return model.distribution(x, trials).density(y);
}

/// One draw from F(. | theta_hat, x).
inline double sample_response(const FittedModel& model, RowRef x, Stream& rng,
                              double trials = 1.0) {
  return model.distribution(x, trials).sample(rng);
}

}  // namespace gofreg
