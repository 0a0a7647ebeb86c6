#include "filt3r/policies.hpp"

#include <cmath>

#include "filt3r/filter.hpp"
#include "filt3r/noise.hpp"

namespace filt3r {

namespace {

/// Shared drift bookkeeping for the policies that bypass the Kalman update
/// entirely (Overwrite, FixedBeta). The EMA baseline still advances so the
/// transition-score diagnostics stay comparable across policies.
struct DriftInfo {
  VarianceVector drift;
  double mean_drift = 0.0;
  double ema = 0.0;
  VarianceVector scores;
};

DriftInfo drift_info(const FilterState& state, const TokenMatrix& candidate) {
  const FilterConfig& cfg = state.config;
  DriftInfo info;
  auto [drift, mean] = compute_drift(candidate, state.prev_candidate);
  info.drift = std::move(drift);
  info.mean_drift = mean;
  info.ema = update_ema_baseline(state.ema_drift, mean, cfg.lambda_delta, cfg.delta_floor);
  info.scores = drift_scores(info.drift, info.ema, cfg.effective_epsilon());
  return info;
}

std::pair<FilterState, StepDiagnostics> interpolation_step(const FilterState& state,
                                                           const TokenMatrix& candidate,
                                                           double beta) {
  if (candidate.rows() != state.fused.rows() || candidate.cols() != state.fused.cols()) {
    throw ShapeError("policy_step: candidate shape does not match state");
  }
  if (!all_finite(candidate)) {
    throw InvalidInput("policy_step: candidate has non-finite entries");
  }
  const DriftInfo info = drift_info(state, candidate);
  const Eigen::Index n = state.n_tokens();
  const VarianceVector gains = VarianceVector::Constant(n, beta);

  FilterState next;
  // beta == 1 is the overwrite limit; adopt the candidate verbatim so the
  // reduction holds bitwise.
  next.fused = beta == 1.0 ? candidate : fuse_state(state.fused, candidate, gains);
  next.variance = state.variance;  // no variance recursion for fixed gains
  next.prev_candidate = candidate;
  next.ema_drift = info.ema;
  next.ema_entropy = state.ema_entropy;
  next.frame_index = state.frame_index + 1;
  next.config = state.config;

  StepDiagnostics diag;
  diag.gains = gains;
  diag.process_noise = VarianceVector::Zero(n);
  diag.drift_scores = info.scores;
  diag.predicted_variance = state.variance;
  diag.posterior_variance = next.variance;
  diag.mean_gain = beta;
  diag.mean_posterior_variance = next.variance.mean();
  diag.update_ratio = update_ratio(state.fused, next.fused, candidate,
                                   state.config.effective_epsilon());
  diag.mean_drift_score = info.scores.mean();
  return {std::move(next), std::move(diag)};
}

std::pair<FilterState, StepDiagnostics> adaptive_r_step(
    const UpdatePolicy& policy, const FilterState& state, const TokenMatrix& candidate,
    const std::optional<AttentionSummary>& attention) {
  if (!attention.has_value()) {
    throw MissingInput("policy_step: adaptive-r requires an attention summary");
  }
  if (attention->weights.rows() != state.fused.rows()) {
    throw ShapeError("policy_step: attention row count does not match token count");
  }
  auto [r_tokens, ema_entropy] =
      adaptive_measurement_noise(*attention, state.ema_entropy, policy.adaptive_r,
                                 state.config.effective_epsilon());
  detail::StepOptions options;
  options.per_token_r = &r_tokens;
  auto [next, diag] = detail::step_impl(state, candidate, options);
  next.ema_entropy = ema_entropy;
  return {std::move(next), std::move(diag)};
}

std::pair<FilterState, StepDiagnostics> periodic_reset_step(
    const UpdatePolicy& policy, const FilterState& state, const TokenMatrix& candidate,
    const std::optional<AttentionSummary>& attention) {
  if (policy.reset_interval < 1) {
    throw InvalidConfig("reset_interval: must be at least 1");
  }
  const UpdatePolicy inner =
      policy.inner ? *policy.inner : UpdatePolicy::filt3r_full();
  if (state.frame_index % policy.reset_interval == 0) {
    // Hard reset: re-initialize on the current candidate; temporal buffers
    // (previous candidate, drift and entropy EMAs) are cleared.
    FilterState fresh = init_state(candidate, state.config);
    StepDiagnostics diag = init_diagnostics(fresh);
    return {std::move(fresh), std::move(diag)};
  }
  return policy_step(inner, state, candidate, attention);
}

}  // namespace

std::pair<FilterState, StepDiagnostics> policy_step(
    const UpdatePolicy& policy, const FilterState& state, const TokenMatrix& candidate,
    const std::optional<AttentionSummary>& attention) {
  switch (policy.kind) {
    case PolicyKind::Filt3rFull:
      return detail::step_impl(state, candidate, detail::StepOptions{});
    case PolicyKind::Overwrite:
      return interpolation_step(state, candidate, 1.0);
    case PolicyKind::FixedBeta:
      if (policy.beta < 0.0 || policy.beta > 1.0) {
        throw InvalidConfig("beta: must lie in [0, 1]");
      }
      return interpolation_step(state, candidate, policy.beta);
    case PolicyKind::FixedQ: {
      if (!(policy.q_bar > 0.0)) {
        throw InvalidConfig("q_bar: must be positive");
      }
      detail::StepOptions options;
      options.fixed_q = policy.q_bar;
      return detail::step_impl(state, candidate, options);
    }
    case PolicyKind::ResetP: {
      detail::StepOptions options;
      options.reset_variance_to_p0 = true;
      return detail::step_impl(state, candidate, options);
    }
    case PolicyKind::NoEmaNorm: {
      detail::StepOptions options;
      options.normalize_drift = false;
      return detail::step_impl(state, candidate, options);
    }
    case PolicyKind::AdaptiveR:
      return adaptive_r_step(policy, state, candidate, attention);
    case PolicyKind::PeriodicReset:
      return periodic_reset_step(policy, state, candidate, attention);
  }
  throw InvalidConfig("policy: unknown kind");
}

std::string policy_name(const UpdatePolicy& policy) {
  switch (policy.kind) {
    case PolicyKind::Filt3rFull: return "filt3r-full";
    case PolicyKind::Overwrite: return "overwrite";
    case PolicyKind::FixedBeta: return "fixed-beta";
    case PolicyKind::FixedQ: return "fixed-q";
    case PolicyKind::ResetP: return "reset-p";
    case PolicyKind::NoEmaNorm: return "no-ema-norm";
    case PolicyKind::AdaptiveR: return "adaptive-r";
    case PolicyKind::PeriodicReset:
      return "periodic-reset[" +
             policy_name(policy.inner ? *policy.inner : UpdatePolicy::filt3r_full()) + "]";
  }
  return "unknown";
}

UpdatePolicy policy_from_name(const std::string& name) {
  if (name == "filt3r-full") return UpdatePolicy::filt3r_full();
  if (name == "overwrite") return UpdatePolicy::overwrite();
  if (name == "fixed-beta") return UpdatePolicy::fixed_beta(0.05);
  if (name == "fixed-q") return UpdatePolicy::fixed_q();
  if (name == "reset-p") return UpdatePolicy::reset_p();
  if (name == "no-ema-norm") return UpdatePolicy::no_ema_norm();
  if (name == "adaptive-r") return UpdatePolicy::adaptive_r();
  const std::string reset_prefix = "periodic-reset[";
  if (name.rfind(reset_prefix, 0) == 0 && name.back() == ']') {
    const std::string inner =
        name.substr(reset_prefix.size(), name.size() - reset_prefix.size() - 1);
    return UpdatePolicy::periodic_reset(100, policy_from_name(inner));
  }
  if (name == "periodic-reset") {
    return UpdatePolicy::periodic_reset(100, UpdatePolicy::filt3r_full());
  }
  throw InvalidConfig("policy: unknown name '" + name + "'");
}

}  // namespace filt3r
