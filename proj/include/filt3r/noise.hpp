// Drift measurement, EMA baselines and the sigmoid process-noise gate.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include <Eigen/Core>

#include "filt3r/types.hpp"

namespace filt3r {

/// Numerically stable logistic sigmoid. Exact 0.5 at x = 0.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Per-token drift of consecutive candidates plus its stream-level mean.
/// Drift of token i is the Euclidean distance between its current and
/// previous candidate rows.
struct DriftReport {
  VarianceVector per_token_drift;
  double mean_drift = 0.0;
  double ema_after = 0.0;
  VarianceVector scores;
};

inline std::pair<VarianceVector, double> compute_drift(
    const Eigen::Ref<const TokenMatrix>& candidate,
    const Eigen::Ref<const TokenMatrix>& prev_candidate) {
  if (candidate.rows() != prev_candidate.rows() ||
      candidate.cols() != prev_candidate.cols()) {
    throw ShapeError("compute_drift: candidate and prev_candidate shapes differ");
  }
  VarianceVector drift = (candidate - prev_candidate).rowwise().norm();
  const double mean = drift.size() > 0 ? drift.mean() : 0.0;
  return {std::move(drift), mean};
}

/// EMA baseline of the stream-level mean drift. An unset baseline is
/// initialized from the incoming mean drift; the stored value is always
/// clamped to the floor.
inline double update_ema_baseline(std::optional<double> ema, double mean_drift,
                                  double lambda_delta, double delta_floor) {
  const double updated =
      ema.has_value() ? (1.0 - lambda_delta) * *ema + lambda_delta * mean_drift
                      : mean_drift;
  return std::max(updated, delta_floor);
}

/// Normalized drift scores g_i = drift_i / (ema + epsilon).
inline VarianceVector drift_scores(const Eigen::Ref<const VarianceVector>& per_token_drift,
                                   double ema, double epsilon) {
  return per_token_drift / (ema + epsilon);
}

/// Sigmoid gate mapping drift scores to per-token process noise in
/// (q_min, q_max): q_i = q_min + (q_max - q_min) * sigma(alpha_q (g_i - tau_q)).
inline VarianceVector process_noise(const Eigen::Ref<const VarianceVector>& scores,
                                    const FilterConfig& config) {
  return scores.unaryExpr([&](double g) {
    return config.q_min +
           (config.q_max - config.q_min) * sigmoid(config.alpha_q * (g - config.tau_q));
  });
}

/// Token-wise measurement noise from normalized attention entropy
/// (ablation-only path). Row weights are normalized into a distribution,
/// its entropy is normalized by log K, and the sequence-mean entropy EMA
/// calibrates the per-token ratio fed to a sigmoid:
///   r_i = r_min + r_scale * sigma(alpha_r (H_i / ema - tau_r)).
/// Returns the per-token noise and the updated entropy EMA (initialized
/// from the first sequence-mean entropy).
inline std::pair<VarianceVector, double> adaptive_measurement_noise(
    const AttentionSummary& attention, std::optional<double> ema_entropy,
    const AdaptiveRParams& params, double epsilon) {
  const Eigen::MatrixXd& w = attention.weights;
  if (w.rows() < 1 || w.cols() < 1) {
    throw InvalidInput("adaptive_measurement_noise: empty attention matrix");
  }
  if ((w.array() < 0.0).any()) {
    throw InvalidInput("adaptive_measurement_noise: negative attention weight");
  }

  const double log_k = std::log(static_cast<double>(w.cols()));
  VarianceVector entropy(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double row_sum = w.row(i).sum();
    if (row_sum <= 0.0) {
      throw InvalidInput("adaptive_measurement_noise: attention row sums to zero");
    }
    double h = 0.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double p = w(i, j) / (row_sum + epsilon);
      if (p > 0.0) {
        h -= p * std::log(p);
      }
    }
    entropy(i) = h / (log_k + epsilon);
  }

  const double mean_entropy = entropy.mean();
  const double ema =
      ema_entropy.has_value()
          ? (1.0 - params.entropy_ema_rate) * *ema_entropy +
                params.entropy_ema_rate * mean_entropy
          : mean_entropy;

  VarianceVector noise = entropy.unaryExpr([&](double h) {
    return params.r_min +
           params.r_scale * sigmoid(params.alpha_r * (h / (ema + epsilon) - params.tau_r));
  });
  return {std::move(noise), ema};
}

}  // namespace filt3r
