// Scalar-per-token Kalman recursion: predict, gain, fuse, Joseph update.
#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

#include <Eigen/Core>

#include "filt3r/noise.hpp"
#include "filt3r/types.hpp"

namespace filt3r {

inline bool all_finite(const Eigen::Ref<const TokenMatrix>& m) {
  return m.allFinite();
}

inline void validate(const FilterConfig& config) {
  const auto fail = [](const std::string& field, const std::string& what) {
    throw InvalidConfig(field + ": " + what);
  };
  if (!(config.p0 > 0.0)) fail("p0", "must be positive");
  if (!(config.r > 0.0)) fail("r", "must be positive");
  if (!(config.q_min > 0.0)) fail("q_min", "must be positive");
  if (!(config.q_max > 0.0)) fail("q_max", "must be positive");
  if (config.q_min > config.q_max) fail("q_min", "must not exceed q_max");
  if (!(config.alpha_q > 0.0)) fail("alpha_q", "must be positive");
  if (!(config.tau_q > 0.0)) fail("tau_q", "must be positive");
  if (!(config.lambda_delta > 0.0) || config.lambda_delta > 1.0)
    fail("lambda_delta", "must lie in (0, 1]");
  if (!(config.delta_floor > 0.0)) fail("delta_floor", "must be positive");
  if (config.k_min < 0.0 || config.k_min >= 1.0) fail("k_min", "must lie in [0, 1)");
  if (!(config.k_max > 0.0) || config.k_max > 1.0) fail("k_max", "must lie in (0, 1]");
  if (config.k_min >= config.k_max) fail("k_min", "must be below k_max");
  if (!(config.epsilon > 0.0)) fail("epsilon", "must be positive");
}

// ---------------------------------------------------------------------------
// Elementary update steps
// ---------------------------------------------------------------------------

/// p^- = p + q elementwise.
inline VarianceVector predict_variance(const Eigen::Ref<const VarianceVector>& variance,
                                       const Eigen::Ref<const VarianceVector>& q) {
  if (variance.size() != q.size()) {
    throw ShapeError("predict_variance: variance and q lengths differ");
  }
  return variance + q;
}

/// k_i = clamp(p^-_i / (p^-_i + r + epsilon), k_min, k_max).
inline VarianceVector compute_gain(const Eigen::Ref<const VarianceVector>& predicted_variance,
                                   double r, double k_min, double k_max,
                                   double epsilon) {
  return predicted_variance.unaryExpr([&](double p) {
    const double raw = p / (p + r + epsilon);
    return std::clamp(raw, k_min, k_max);
  });
}

/// Per-token measurement noise variant of the gain (adaptive-r ablation).
inline VarianceVector compute_gain(const Eigen::Ref<const VarianceVector>& predicted_variance,
                                   const Eigen::Ref<const VarianceVector>& r, double k_min,
                                   double k_max, double epsilon) {
  if (predicted_variance.size() != r.size()) {
    throw ShapeError("compute_gain: predicted_variance and r lengths differ");
  }
  VarianceVector gains(predicted_variance.size());
  for (Eigen::Index i = 0; i < gains.size(); ++i) {
    const double raw =
        predicted_variance(i) / (predicted_variance(i) + r(i) + epsilon);
    gains(i) = std::clamp(raw, k_min, k_max);
  }
  return gains;
}

/// Row i of the result is (1 - k_i) * prev_i + k_i * candidate_i.
inline TokenMatrix fuse_state(const Eigen::Ref<const TokenMatrix>& prev,
                              const Eigen::Ref<const TokenMatrix>& candidate,
                              const Eigen::Ref<const VarianceVector>& gains) {
  if (prev.rows() != candidate.rows() || prev.cols() != candidate.cols()) {
    throw ShapeError("fuse_state: prev and candidate shapes differ");
  }
  if (gains.size() != prev.rows()) {
    throw ShapeError("fuse_state: gain length does not match token count");
  }
  const Eigen::ArrayXd k = gains.array();
  return (prev.array().colwise() * (1.0 - k) +
          candidate.array().colwise() * k)
      .matrix();
}

/// Scalar Joseph form: p_i = (1 - k_i)^2 p^-_i + k_i^2 r.
inline VarianceVector update_variance_joseph(
    const Eigen::Ref<const VarianceVector>& predicted_variance,
    const Eigen::Ref<const VarianceVector>& gains, double r) {
  if (predicted_variance.size() != gains.size()) {
    throw ShapeError("update_variance_joseph: predicted_variance and gain lengths differ");
  }
  const Eigen::ArrayXd k = gains.array();
  return ((1.0 - k).square() * predicted_variance.array() + k.square() * r).matrix();
}

/// Per-token measurement noise variant of the Joseph update.
inline VarianceVector update_variance_joseph(
    const Eigen::Ref<const VarianceVector>& predicted_variance,
    const Eigen::Ref<const VarianceVector>& gains,
    const Eigen::Ref<const VarianceVector>& r) {
  if (predicted_variance.size() != gains.size() || gains.size() != r.size()) {
    throw ShapeError("update_variance_joseph: input lengths differ");
  }
  const Eigen::ArrayXd k = gains.array();
  return ((1.0 - k).square() * predicted_variance.array() + k.square() * r.array())
      .matrix();
}

/// rho = mean_i ||s_i - s_prev_i|| / (mean_i ||candidate_i - s_prev_i|| + epsilon).
inline double update_ratio(const Eigen::Ref<const TokenMatrix>& prev_state,
                           const Eigen::Ref<const TokenMatrix>& new_state,
                           const Eigen::Ref<const TokenMatrix>& candidate,
                           double epsilon) {
  if (prev_state.rows() != new_state.rows() || prev_state.cols() != new_state.cols() ||
      prev_state.rows() != candidate.rows() || prev_state.cols() != candidate.cols()) {
    throw ShapeError("update_ratio: input shapes differ");
  }
  const double applied = (new_state - prev_state).rowwise().norm().mean();
  const double proposed = (candidate - prev_state).rowwise().norm().mean();
  return applied / (proposed + epsilon);
}

// ---------------------------------------------------------------------------
// Initialization and the per-frame step
// ---------------------------------------------------------------------------

/// First-frame handling: the state is a direct overwrite with the candidate,
/// every token starts at variance p0 and the previous-candidate buffer holds
/// the candidate itself. The drift EMA stays unset until the first temporal
/// difference is available.
inline FilterState init_state(const TokenMatrix& candidate, const FilterConfig& config) {
  validate(config);
  if (candidate.rows() < 1 || candidate.cols() < 1) {
    throw InvalidInput("init_state: candidate must be at least 1x1");
  }
  if (!all_finite(candidate)) {
    throw InvalidInput("init_state: candidate has non-finite entries");
  }
  FilterState state;
  state.fused = candidate;
  state.variance = VarianceVector::Constant(candidate.rows(), config.p0);
  state.prev_candidate = candidate;
  state.ema_drift = std::nullopt;
  state.ema_entropy = std::nullopt;
  state.frame_index = 1;
  state.config = config;
  return state;
}

/// Diagnostics row reported for an initialization frame: the candidate is
/// adopted verbatim, so the applied gain is 1 and no process noise exists yet.
inline StepDiagnostics init_diagnostics(const FilterState& state) {
  const Eigen::Index n = state.n_tokens();
  StepDiagnostics d;
  d.gains = VarianceVector::Ones(n);
  d.process_noise = VarianceVector::Zero(n);
  d.drift_scores = VarianceVector::Zero(n);
  d.predicted_variance = state.variance;
  d.posterior_variance = state.variance;
  d.mean_gain = 1.0;
  d.mean_posterior_variance = state.variance.mean();
  d.update_ratio = 1.0;
  d.mean_drift_score = 0.0;
  return d;
}

namespace detail {

/// Knobs the ablation policies adjust; the defaults are the full recursion.
struct StepOptions {
  bool reset_variance_to_p0 = false;            // ResetP
  bool normalize_drift = true;                  // false: NoEmaNorm
  std::optional<double> fixed_q;                // FixedQ
  const VarianceVector* per_token_r = nullptr;  // AdaptiveR
};

inline std::pair<FilterState, StepDiagnostics> step_impl(const FilterState& state,
                                                         const TokenMatrix& candidate,
                                                         const StepOptions& options) {
  if (candidate.rows() != state.fused.rows() || candidate.cols() != state.fused.cols()) {
    throw ShapeError("step: candidate shape does not match state");
  }
  if (!all_finite(candidate)) {
    throw InvalidInput("step: candidate has non-finite entries");
  }
  const FilterConfig& cfg = state.config;
  const double eps = cfg.effective_epsilon();

  // Drift and EMA baseline (updated with the current frame before scoring).
  auto [drift, mean_drift] = compute_drift(candidate, state.prev_candidate);
  const double ema = update_ema_baseline(state.ema_drift, mean_drift,
                                         cfg.lambda_delta, cfg.delta_floor);
  const VarianceVector scores =
      options.normalize_drift ? drift_scores(drift, ema, eps) : VarianceVector(drift);

  // Process noise: sigmoid gate, a policy constant, or a verification override.
  VarianceVector q;
  if (cfg.hooks.forced_q.has_value()) {
    q = VarianceVector::Constant(drift.size(), *cfg.hooks.forced_q);
  } else if (options.fixed_q.has_value()) {
    q = VarianceVector::Constant(drift.size(), *options.fixed_q);
  } else {
    q = process_noise(scores, cfg);
  }

  VarianceVector reset_prior;
  const VarianceVector* prior = &state.variance;
  if (options.reset_variance_to_p0) {
    reset_prior = VarianceVector::Constant(drift.size(), cfg.p0);
    prior = &reset_prior;
  }

  const VarianceVector predicted = predict_variance(*prior, q);
  const double lo = cfg.hooks.clamp_gain ? cfg.k_min : 0.0;
  const double hi = cfg.hooks.clamp_gain ? cfg.k_max : 1.0;

  VarianceVector gains;
  VarianceVector posterior;
  if (options.per_token_r != nullptr) {
    gains = compute_gain(predicted, *options.per_token_r, lo, hi, eps);
    posterior = update_variance_joseph(predicted, gains, *options.per_token_r);
  } else {
    gains = compute_gain(predicted, cfg.r, lo, hi, eps);
    posterior = update_variance_joseph(predicted, gains, cfg.r);
  }

  FilterState next;
  next.fused = fuse_state(state.fused, candidate, gains);
  next.variance = posterior;
  next.prev_candidate = candidate;
  next.ema_drift = ema;
  next.ema_entropy = state.ema_entropy;
  next.frame_index = state.frame_index + 1;
  next.config = cfg;

  StepDiagnostics diag;
  diag.gains = std::move(gains);
  diag.process_noise = std::move(q);
  diag.drift_scores = scores;
  diag.predicted_variance = predicted;
  diag.posterior_variance = next.variance;
  diag.mean_gain = diag.gains.mean();
  diag.mean_posterior_variance = next.variance.mean();
  diag.update_ratio = update_ratio(state.fused, next.fused, candidate, eps);
  diag.mean_drift_score = diag.drift_scores.mean();
  return {std::move(next), std::move(diag)};
}

}  // namespace detail

/// One frame of the full recursion, in order: drift + EMA update, process
/// noise gate, variance predict, gain, state fusion, Joseph variance update,
/// candidate buffering. Pure function of (state, candidate); repeated calls
/// yield bitwise identical results.
inline std::pair<FilterState, StepDiagnostics> step(const FilterState& state,
                                                    const TokenMatrix& candidate) {
  return detail::step_impl(state, candidate, detail::StepOptions{});
}

}  // namespace filt3r
