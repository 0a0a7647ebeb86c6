// Core domain types for the token-state filtering layer.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace filt3r {

using Scalar = double;

/// N x D matrix of token states; row i is the D-dimensional token i.
/// Holds fused states, candidate states and synthetic measurements alike.
using TokenMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Length-N vector of per-token scalars (variances, gains, drift scores, ...).
using VarianceVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidConfig : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Update policies
// ---------------------------------------------------------------------------

enum class PolicyKind {
  Filt3rFull,     ///< full adaptive recursion
  Overwrite,      ///< fused state := candidate, gain 1
  FixedBeta,      ///< constant interpolation weight, no variance recursion
  FixedQ,         ///< constant process noise, variance recursion kept
  ResetP,         ///< variance reset to p0 before every predict
  NoEmaNorm,      ///< sigmoid gate fed raw drift instead of normalized score
  AdaptiveR,      ///< per-token measurement noise from attention entropy
  PeriodicReset,  ///< wraps another policy, hard-resets every `interval` frames
};

/// Parameters of the attention-entropy measurement-noise estimate.
struct AdaptiveRParams {
  double r_min = 1.0;
  double r_scale = 1.0;
  double alpha_r = 8.0;
  double tau_r = 1.0;
  double entropy_ema_rate = 0.05;
};

struct UpdatePolicy {
  PolicyKind kind = PolicyKind::Filt3rFull;

  double beta = 0.05;  ///< FixedBeta weight (tuned ablation value)
  double q_bar = 0.26; ///< FixedQ constant, (q_min + q_max) / 2 at defaults
  AdaptiveRParams adaptive_r;
  std::int64_t reset_interval = 100;            ///< PeriodicReset period
  std::shared_ptr<const UpdatePolicy> inner;    ///< PeriodicReset wrapped policy

  static UpdatePolicy filt3r_full() { return {}; }
  static UpdatePolicy overwrite() { return with_kind(PolicyKind::Overwrite); }
  static UpdatePolicy fixed_beta(double beta) {
    UpdatePolicy p = with_kind(PolicyKind::FixedBeta);
    p.beta = beta;
    return p;
  }
  static UpdatePolicy fixed_q(double q_bar = 0.26) {
    UpdatePolicy p = with_kind(PolicyKind::FixedQ);
    p.q_bar = q_bar;
    return p;
  }
  static UpdatePolicy reset_p() { return with_kind(PolicyKind::ResetP); }
  static UpdatePolicy no_ema_norm() { return with_kind(PolicyKind::NoEmaNorm); }
  static UpdatePolicy adaptive_r(AdaptiveRParams params = {}) {
    UpdatePolicy p = with_kind(PolicyKind::AdaptiveR);
    p.adaptive_r = params;
    return p;
  }
  static UpdatePolicy periodic_reset(std::int64_t interval, UpdatePolicy wrapped) {
    UpdatePolicy p = with_kind(PolicyKind::PeriodicReset);
    p.reset_interval = interval;
    p.inner = std::make_shared<const UpdatePolicy>(std::move(wrapped));
    return p;
  }

 private:
  static UpdatePolicy with_kind(PolicyKind kind) {
    UpdatePolicy p;
    p.kind = kind;
    return p;
  }
};

/// Kebab-case policy name as used on the CLI and in output file names,
/// e.g. "filt3r-full", "fixed-beta", "periodic-reset[overwrite]".
std::string policy_name(const UpdatePolicy& policy);

// ---------------------------------------------------------------------------
// Filter configuration
// ---------------------------------------------------------------------------

/// Test-only switches needed to realize the idealized closed forms
/// (no clamps, no epsilon, constant process noise). Never exposed on the
/// CLI or in config files.
struct VerificationHooks {
  bool clamp_gain = true;
  bool use_epsilon = true;
  std::optional<double> forced_q;  ///< bypasses the sigmoid gate when set

  bool active() const { return !clamp_gain || !use_epsilon || forced_q.has_value(); }
};

struct FilterConfig {
  double p0 = 1.5;            ///< initial per-token variance
  double r = 1.0;             ///< fixed scalar measurement noise
  double q_min = 0.02;        ///< process noise lower bound
  double q_max = 0.5;         ///< process noise upper bound
  double alpha_q = 20.0;      ///< gate sharpness
  double tau_q = 3.0;         ///< gate midpoint
  double lambda_delta = 0.05; ///< drift EMA rate
  double delta_floor = 0.01;  ///< drift EMA floor
  double k_min = 0.01;        ///< gain clamp lower bound
  double k_max = 0.99;        ///< gain clamp upper bound
  double epsilon = 1e-6;      ///< numerical stability constant

  UpdatePolicy policy;        ///< default update rule selection
  VerificationHooks hooks;    ///< test-only; defaults are the deployed filter

  /// Effective epsilon after the verification hooks are applied.
  double effective_epsilon() const { return hooks.use_epsilon ? epsilon : 0.0; }
};

// ---------------------------------------------------------------------------
// Filter state and per-frame diagnostics
// ---------------------------------------------------------------------------

/// Persistent per-stream state. Single-writer: step() must not run
/// concurrently on the same state; states are self-contained values and
/// independent streams may be filtered in parallel.
struct FilterState {
  TokenMatrix fused;             ///< s_{t-1}
  VarianceVector variance;       ///< p_{t-1}, strictly positive
  TokenMatrix prev_candidate;    ///< candidate buffered from the previous frame
  std::optional<double> ema_drift;    ///< drift EMA baseline, unset before frame 2
  std::optional<double> ema_entropy;  ///< attention-entropy EMA (adaptive-r only)
  std::int64_t frame_index = 0;  ///< frames absorbed since (re)initialization
  FilterConfig config;

  Eigen::Index n_tokens() const { return fused.rows(); }
  Eigen::Index dim() const { return fused.cols(); }
};

struct StepDiagnostics {
  VarianceVector gains;               ///< applied per-token gain (post clamp)
  VarianceVector process_noise;       ///< per-token q
  VarianceVector drift_scores;        ///< score fed to the gate
  VarianceVector predicted_variance;  ///< p^- = p + q
  VarianceVector posterior_variance;  ///< p after the Joseph update
  double mean_gain = 0.0;
  double mean_posterior_variance = 0.0;
  double update_ratio = 0.0;     ///< applied / candidate update magnitude
  double mean_drift_score = 0.0; ///< transition score, mean of drift_scores
};

// ---------------------------------------------------------------------------
// Attention summaries (adaptive-r ablation input)
// ---------------------------------------------------------------------------

/// Absolute aggregated cross-attention from each of the N state tokens to
/// K image tokens. Rows must be nonnegative with at least one positive entry.
struct AttentionSummary {
  Eigen::MatrixXd weights;  // N x K

  Eigen::Index n_image_tokens() const { return weights.cols(); }
};

}  // namespace filt3r
