#pragma once

// Maximum-likelihood fitting by Fisher scoring.
//
// The optimizer works on u = (beta, log aux) so the auxiliary parameter
// stays positive. For every family here beta and aux are orthogonal, so the
// expected information is block diagonal: X' W X for beta and a scalar for
// log aux.

#include "gofreg/dataset.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace gofreg {

struct FitOptions {
  /// Bound on max_k |d loglik / d u_k| / n at the returned estimate.
  double tolerance = 1e-8;
  int max_iterations = 100;
  /// Warm start in natural parameters (beta, aux).
  std::optional<Vector> start;
};

namespace detail {

/// Contribution of one observation to the log-likelihood and its
/// derivatives with respect to eta and s = log aux.
struct ObservationTerms {
  double loglik = 0.0;
  double d_eta = 0.0;
  double w_eta = 0.0;  // expected -d2/deta2
  double d_s = 0.0;
  double w_s = 0.0;    // -d2/ds2 (expected where available)
  /// Sum of magnitudes of the pieces that cancel inside `loglik`; bounds its
  /// rounding error.
  double scale = 0.0;
};

inline constexpr double half_log_2pi = 0.91893853320467274178;

inline ObservationTerms observation_terms(const FamilySpec& spec, double y, double eta,
                                          double aux, double trials) {
  ObservationTerms t;
  switch (spec.kind) {
    case FamilyKind::gaussian_linear:
    case FamilyKind::log_gaussian_linear: {
      const bool logged = spec.kind == FamilyKind::log_gaussian_linear;
      const double z = logged ? std::log(y) : y;
      const double r = z - eta;
      const double var = aux * aux;
      t.loglik = -half_log_2pi - std::log(aux) - 0.5 * r * r / var - (logged ? z : 0.0);
      t.d_eta = r / var;
      t.w_eta = 1.0 / var;
      t.d_s = r * r / var - 1.0;
      t.w_s = 2.0;
      t.scale = 1.0 + std::abs(std::log(aux)) + 0.5 * r * r / var + std::abs(logged ? z : 0.0);
      break;
    }
    case FamilyKind::gamma_glm: {
      const double mu = apply_inverse_link(spec.link, eta);
      if (!(mu > 0.0)) {
        t.loglik = -std::numeric_limits<double>::infinity();
        return t;
      }
      const double dmu = spec.link == Link::log ? mu : 1.0;
      const double k = aux;
      t.loglik = k * std::log(k) - k * std::log(mu) + (k - 1.0) * std::log(y) - k * y / mu -
                 std::lgamma(k);
      t.d_eta = k * (y - mu) / (mu * mu) * dmu;
      t.w_eta = k / (mu * mu) * dmu * dmu;
      const double d_k = std::log(k) + 1.0 - std::log(mu) + std::log(y) - y / mu -
                         boost::math::digamma(k, boost_policy());
      t.d_s = k * d_k;
      t.w_s = k * k * (boost::math::trigamma(k, boost_policy()) - 1.0 / k);
      t.scale = std::abs(k * std::log(k)) + std::abs(k * std::log(mu)) +
                std::abs((k - 1.0) * std::log(y)) + k * y / mu + std::abs(std::lgamma(k));
      break;
    }
    case FamilyKind::poisson_glm: {
      const double mu = apply_inverse_link(Link::log, eta);
      t.loglik = y * eta - mu - std::lgamma(y + 1.0);
      t.d_eta = y - mu;
      t.w_eta = mu;
      t.scale = std::abs(y * eta) + mu + std::lgamma(y + 1.0);
      break;
    }
    case FamilyKind::negbin_glm: {
      const double mu = apply_inverse_link(Link::log, eta);
      const double r = aux;
      const double rpm = r + mu;
      t.loglik = std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1.0) -
                 r * std::log1p(mu / r) - y * std::log1p(r / mu);
      t.d_eta = (y - mu) * r / rpm;
      t.w_eta = mu * r / rpm;
      const double d_r = boost::math::digamma(y + r, boost_policy()) -
                         boost::math::digamma(r, boost_policy()) - std::log1p(mu / r) +
                         (mu - y) / rpm;
      const double d_rr = boost::math::trigamma(y + r, boost_policy()) -
                          boost::math::trigamma(r, boost_policy()) + 1.0 / r - 1.0 / rpm -
                          (mu - y) / (rpm * rpm);
      t.d_s = r * d_r;
      // Observed information; E[d_r] = 0 so the r * d_r term is dropped.
      t.w_s = -r * r * d_rr;
      t.scale = std::abs(std::lgamma(y + r)) + std::abs(std::lgamma(r)) + std::lgamma(y + 1.0) +
                r * std::log1p(mu / r) + y * std::log1p(r / mu);
      break;
    }
    case FamilyKind::binomial_glm: {
      const double pi = apply_inverse_link(Link::logit, eta);
      const double log1pexp = eta > 0.0 ? eta + std::log1p(std::exp(-eta))
                                        : std::log1p(std::exp(eta));
      t.loglik = std::lgamma(trials + 1.0) - std::lgamma(y + 1.0) -
                 std::lgamma(trials - y + 1.0) + y * eta - trials * log1pexp;
      t.d_eta = y - trials * pi;
      t.w_eta = trials * pi * (1.0 - pi);
      t.scale = 2.0 * std::lgamma(trials + 1.0) + std::abs(y * eta) + trials * log1pexp;
      break;
    }
  }
  return t;
}

struct Evaluation {
  double loglik = -std::numeric_limits<double>::infinity();
  /// Rounding-error bound for loglik.
  double noise = 0.0;
  Vector score;
  Eigen::MatrixXd info_beta;
  double info_s = 0.0;
};

/// Log-likelihood (and optionally score / information) at u = (beta, log aux).
inline Evaluation evaluate(const FamilySpec& spec, const Dataset& data, const Vector& u,
                           bool derivatives) {
  const auto p = static_cast<Eigen::Index>(spec.coefficients);
  const bool aux_present = has_auxiliary(spec.kind);
  const double aux = aux_present ? std::exp(u[p]) : 1.0;
  Evaluation ev;
  if (aux_present && !(aux > 0.0 && std::isfinite(aux))) return ev;

  const Vector eta = data.covariates * u.head(p);
  const auto n = static_cast<Eigen::Index>(data.size());
  Vector d_eta(n), w_eta(n);
  double loglik = 0.0, d_s = 0.0, w_s = 0.0, scale = 0.0;
  try {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto t = observation_terms(spec, data.responses[i], eta[i], aux,
                                       data.trials_at(static_cast<std::size_t>(i)));
      loglik += t.loglik;
      scale += t.scale;
      d_eta[i] = t.d_eta;
      w_eta[i] = t.w_eta;
      d_s += t.d_s;
      w_s += t.w_s;
    }
  } catch (const NumericRangeError&) {
    return ev;
  }
  if (!std::isfinite(loglik)) return ev;
  ev.loglik = loglik;
  ev.noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  if (!derivatives) return ev;

  ev.score.resize(static_cast<Eigen::Index>(spec.parameter_dimension()));
  ev.score.head(p) = data.covariates.transpose() * d_eta;
  if (aux_present) ev.score[p] = d_s;
  ev.info_beta = data.covariates.transpose() * w_eta.asDiagonal() * data.covariates;
  ev.info_s = w_s;
  return ev;
}

inline Vector least_squares(const Matrix& x, const Vector& z) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw RankDeficiencyError("design matrix has rank " + std::to_string(qr.rank()) + " < " +
                              std::to_string(x.cols()) + " columns");
  return qr.solve(z);
}

inline void check_support(const FamilySpec& spec, const Dataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double y = data.responses[static_cast<Eigen::Index>(i)];
    bool ok = true;
    switch (spec.kind) {
      case FamilyKind::gaussian_linear: break;
      case FamilyKind::log_gaussian_linear:
      case FamilyKind::gamma_glm: ok = y > 0.0; break;
      case FamilyKind::poisson_glm:
      case FamilyKind::negbin_glm: ok = is_count(y); break;
      case FamilyKind::binomial_glm:
        if (!data.has_trials()) throw DomainError("binomial_glm needs per-row trial counts");
        ok = is_count(y) && is_count(data.trials_at(i)) && y <= data.trials_at(i);
        break;
    }
    if (!ok)
      throw DomainError("response " + std::to_string(y) + " at row " + std::to_string(i + 1) +
                        " is outside the support of " + std::string(to_string(spec.kind)));
  }
}

/// Warm start: least squares on the link-transformed response, moments
/// for the auxiliary parameter. Returns u = (beta, log aux).
inline Vector initial_point(const FamilySpec& spec, const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(spec.coefficients);
  const Vector& y = data.responses;
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (spec.kind) {
      case FamilyKind::gaussian_linear: z[i] = y[i]; break;
      case FamilyKind::log_gaussian_linear: z[i] = std::log(y[i]); break;
      case FamilyKind::gamma_glm: z[i] = spec.link == Link::log ? std::log(y[i]) : y[i]; break;
      case FamilyKind::poisson_glm:
      case FamilyKind::negbin_glm: z[i] = std::log(std::max(y[i], 0.5)); break;
      case FamilyKind::binomial_glm: {
        const double N = data.trials_at(static_cast<std::size_t>(i));
        const double q = (y[i] + 0.5) / (N + 1.0);
        z[i] = std::log(q / (1.0 - q));
        break;
      }
    }
  }
  const Vector beta = least_squares(data.covariates, z);
  Vector u(static_cast<Eigen::Index>(spec.parameter_dimension()));
  u.head(p) = beta;
  if (!has_auxiliary(spec.kind)) return u;

  const Vector fitted = data.covariates * beta;
  switch (spec.kind) {
    case FamilyKind::gaussian_linear:
    case FamilyKind::log_gaussian_linear: {
      const double rss = (z - fitted).squaredNorm();
      const double scale = std::max(1.0, z.squaredNorm() / static_cast<double>(n));
      if (!(rss / static_cast<double>(n) > 1e-24 * scale))
        throw RankDeficiencyError(
            "zero residual variance: sigma_hat = 0 lies outside the parameter space");
      u[p] = 0.5 * std::log(rss / static_cast<double>(n));
      break;
    }
    case FamilyKind::gamma_glm: {
      double cv2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = apply_inverse_link(spec.link, fitted[i]);
        if (!(mu > 0.0))
          throw DomainError("least-squares start gives a nonpositive mean at row " +
                            std::to_string(i + 1) + " under the identity link");
        const double rel = (y[i] - mu) / mu;
        cv2 += rel * rel;
      }
      cv2 /= static_cast<double>(n);
      u[p] = std::log(cv2 > 0.0 ? 1.0 / cv2 : 1e3);
      break;
    }
    case FamilyKind::negbin_glm: {
      double excess = 0.0, mu2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = std::exp(fitted[i]);
        excess += (y[i] - mu) * (y[i] - mu) - mu;
        mu2 += mu * mu;
      }
      const double r = excess > 0.0 ? mu2 / excess : 100.0;
      u[p] = std::log(std::clamp(r, 1e-3, 1e6));
      break;
    }
    default: break;
  }
  return u;
}

inline double gradient_norm(const Vector& score, std::size_t n) {
  return score.cwiseAbs().maxCoeff() / static_cast<double>(n);
}

}  // namespace detail

/// Maximum-likelihood estimate of theta for `spec` on `data`.
inline FittedModel fit_mle(const FamilySpec& spec, const Dataset& data,
                           const FitOptions& options = {}) {
  spec.validate();
  data.validate();
  if (data.width() != spec.coefficients)
    throw DomainError("design has " + std::to_string(data.width()) + " columns but the family " +
                      "expects " + std::to_string(spec.coefficients));
  detail::check_support(spec, data);

  const auto p = static_cast<Eigen::Index>(spec.coefficients);
  const bool aux_present = has_auxiliary(spec.kind);
  const std::size_t n = data.size();

  Vector u;
  if (options.start) {
    if (static_cast<std::size_t>(options.start->size()) != spec.parameter_dimension())
      throw DomainError("start vector has the wrong length");
    u = *options.start;
    if (aux_present) {
      if (!(u[p] > 0.0)) throw DomainError("start auxiliary parameter must be positive");
      u[p] = std::log(u[p]);
    }
  } else {
    u = detail::initial_point(spec, data);
  }

  auto natural = [&](const Vector& v) {
    Vector theta = v;
    if (aux_present) theta[p] = std::exp(v[p]);
    return theta;
  };

  detail::Evaluation ev = detail::evaluate(spec, data, u, true);
  if (!std::isfinite(ev.loglik)) {
    if (!options.start) throw NumericRangeError("log-likelihood is not finite at the start");
    u = detail::initial_point(spec, data);
    ev = detail::evaluate(spec, data, u, true);
    if (!std::isfinite(ev.loglik))
      throw NumericRangeError("log-likelihood is not finite at the start");
  }

  // One Fisher-scoring step with step halving; nullopt when no step length
  // keeps the log-likelihood within its rounding noise of the current value.
  auto scoring_step = [&](const detail::Evaluation& at, const Vector& from,
                          int max_halvings) -> std::optional<Vector> {
    Vector step(from.size());
    Eigen::LLT<Eigen::MatrixXd> llt(at.info_beta);
    if (llt.info() != Eigen::Success)
      throw RankDeficiencyError("singular Fisher information for the coefficients");
    step.head(p) = llt.solve(at.score.head(p));
    if (aux_present) {
      double info_s = at.info_s;
      if (!(info_s > 1e-12 * static_cast<double>(n))) info_s = 0.25 * static_cast<double>(n);
      step[p] = at.score[p] / info_s;
    }
    const double slack = std::max(1e-12 * (1.0 + std::abs(at.loglik)), at.noise);
    double t = 1.0;
    for (int halving = 0; halving <= max_halvings; ++halving, t *= 0.5) {
      Vector candidate = from + t * step;
      const auto trial = detail::evaluate(spec, data, candidate, false);
      if (std::isfinite(trial.loglik) && trial.loglik >= at.loglik - slack) return candidate;
    }
    return std::nullopt;
  };

  int iterations = 0;
  double grad = detail::gradient_norm(ev.score, n);
  while (grad > options.tolerance && iterations < options.max_iterations) {
    ++iterations;
    const auto next = scoring_step(ev, u, 60);
    if (!next) break;
    u = *next;
    ev = detail::evaluate(spec, data, u, true);
    grad = detail::gradient_norm(ev.score, n);
  }

  // Scoring converges quadratically, so one more full step after meeting the
  // tolerance usually lands on the optimum to machine precision.
  if (grad <= options.tolerance && grad > 0.0) {
    if (const auto next = scoring_step(ev, u, 0)) {
      const auto polished = detail::evaluate(spec, data, *next, true);
      const double g = detail::gradient_norm(polished.score, n);
      if (std::isfinite(polished.loglik) && g < grad) {
        u = *next;
        ev = polished;
        grad = g;
      }
    }
  }

  if (!(grad <= options.tolerance))
    throw ConvergenceError("Fisher scoring did not converge for " +
                               std::string(to_string(spec.kind)) + " after " +
                               std::to_string(iterations) + " iterations (gradient norm " +
                               std::to_string(grad) + ")",
                           natural(u), grad, iterations);

  FittedModel model;
  model.spec = spec;
  model.theta_hat = natural(u);
  model.loglik = ev.loglik;
  model.converged = true;
  model.iterations = iterations;
  model.gradient_norm = grad;
  return model;
}

/// Sample log-likelihood sum_i log f(Y_i | theta, X_i) at natural theta.
inline double log_likelihood(const FamilySpec& spec, const Dataset& data, const Vector& theta) {
  Vector u = theta;
  const auto p = static_cast<Eigen::Index>(spec.coefficients);
  if (has_auxiliary(spec.kind)) u[p] = std::log(theta[p]);
  return detail::evaluate(spec, data, u, false).loglik;
}

}  // namespace gofreg
