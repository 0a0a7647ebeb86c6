// Closed-form references for the scalar recursion: static-regime gain decay,
// steady-state variance/gain, the implemented gain floor and the explicit
// history unrolling. These are written directly from the closed forms and
// share no code with the filter implementation, so agreement between the two
// is evidence rather than tautology.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "filt3r/types.hpp"

namespace filt3r::theory {

/// Gain of the zero-process-noise recursion at step t >= 1: 1 / (t + r/p0).
inline double static_gain(std::int64_t t, double p0, double r) {
  return 1.0 / (static_cast<double>(t) + r / p0);
}

/// Posterior variance of the same recursion after t >= 0 steps:
/// 1 / (1/p0 + t/r). Precision accumulates linearly with each observation.
inline double static_variance(std::int64_t t, double p0, double r) {
  return 1.0 / (1.0 / p0 + static_cast<double>(t) / r);
}

struct SteadyState {
  double p_star = 0.0;  ///< positive root of p^2 + q p - q r = 0
  double k_star = 0.0;  ///< (p_star + q) / (p_star + q + r)
  double q = 0.0;
  double r = 0.0;

  double quadratic_residual() const { return p_star * p_star + q * p_star - q * r; }
};

/// Unique positive fixed point of the constant-q scalar recursion.
inline SteadyState steady_state(double q, double r) {
  SteadyState s;
  s.q = q;
  s.r = r;
  const double disc = std::sqrt(q * q + 4.0 * q * r);
  s.p_star = (disc - q) / 2.0;
  s.k_star = (s.p_star + q) / (s.p_star + q + r);
  return s;
}

/// Stable-regime operating point implied by the process-noise lower bound:
/// the steady-state gain at q = q_min (about 0.132 at the default q_min = 0.02,
/// r = 1), before any clamping.
inline double gain_floor(double q_min, double r) {
  return steady_state(q_min, r).k_star;
}

/// Derivative of the variance recursion map f(p) = r (p + q) / (p + q + r);
/// strictly below 1 for all p >= 0, making f a contraction.
inline double variance_map_derivative(double p, double q, double r) {
  const double denom = p + q + r;
  return (r * r) / (denom * denom);
}

/// Explicit product weights of the unrolled smoothing recursion over T frames:
/// row 0 holds the per-token survival weight of the initial state,
/// row 1 + tau the weight of candidate tau. Per token the column sums to 1.
inline Eigen::MatrixXd unroll_weights(const std::vector<VarianceVector>& gains,
                                      Eigen::Index n_tokens) {
  const std::size_t frames = gains.size();
  Eigen::MatrixXd weights(static_cast<Eigen::Index>(frames) + 1, n_tokens);
  for (Eigen::Index i = 0; i < n_tokens; ++i) {
    double survival = 1.0;
    for (std::size_t u = 0; u < frames; ++u) {
      if (gains[u].size() != n_tokens) {
        throw ShapeError("unroll_weights: gain length does not match token count");
      }
      survival *= 1.0 - gains[u](i);
    }
    weights(0, i) = survival;
    for (std::size_t tau = 0; tau < frames; ++tau) {
      double w = gains[tau](i);
      for (std::size_t u = tau + 1; u < frames; ++u) {
        w *= 1.0 - gains[u](i);
      }
      weights(static_cast<Eigen::Index>(tau) + 1, i) = w;
    }
  }
  return weights;
}

/// State after T frames via the weighted history of past candidates rather
/// than the sequential recursion.
inline TokenMatrix unroll_state(const TokenMatrix& initial,
                                const std::vector<TokenMatrix>& candidates,
                                const std::vector<VarianceVector>& gains) {
  if (candidates.size() != gains.size()) {
    throw ShapeError("unroll_state: candidate and gain sequence lengths differ");
  }
  for (const TokenMatrix& c : candidates) {
    if (c.rows() != initial.rows() || c.cols() != initial.cols()) {
      throw ShapeError("unroll_state: candidate shape does not match initial state");
    }
  }
  const Eigen::MatrixXd weights = unroll_weights(gains, initial.rows());
  TokenMatrix result = initial.array().colwise() * weights.row(0).transpose().array();
  for (std::size_t tau = 0; tau < candidates.size(); ++tau) {
    result.array() += candidates[tau].array().colwise() *
                      weights.row(static_cast<Eigen::Index>(tau) + 1).transpose().array();
  }
  return result;
}

}  // namespace filt3r::theory
