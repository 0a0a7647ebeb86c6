// Synthetic token-stream generator and policy evaluation harness.
//
// The generator realizes the random-walk state-space model the filter
// assumes: a latent token matrix evolves by Gaussian increments (optionally
// with injected scene transitions) and candidates observe it through i.i.d.
// Gaussian noise. Filtering quality is then measurable as state RMSE against
// the known latent.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "filt3r/types.hpp"

namespace filt3r::sim {

struct Transition {
  std::int64_t frame = 0;   ///< 1-based frame at which the latent jumps
  double magnitude = 0.0;   ///< Euclidean jump size per token
};

struct StreamScenario {
  Eigen::Index n_tokens = 16;
  Eigen::Index dim = 4;
  std::int64_t length = 100;          ///< frames, numbered 1..length
  double base_process_std = 0.0;      ///< sqrt(q) of the true latent walk
  double measurement_std = 1.0;       ///< sqrt(r) of candidate noise
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;
  Eigen::Index n_attention_tokens = 0;  ///< K > 0 adds scripted attention
};

/// Throws InvalidConfig naming the offending field.
void validate(const StreamScenario& scenario);

struct StreamTrace {
  StreamScenario scenario;
  std::string generator;  ///< RNG algorithm tag, recorded for reproducibility
  std::vector<TokenMatrix> true_latents;   ///< length T
  std::vector<TokenMatrix> candidates;     ///< length T
  std::vector<Eigen::MatrixXd> attention;  ///< empty, or length T of N x K
  std::vector<std::int64_t> transition_frames;

  std::int64_t length() const { return static_cast<std::int64_t>(candidates.size()); }
};

/// Deterministic in the scenario (including seed): repeated calls produce
/// bitwise identical traces.
StreamTrace generate(const StreamScenario& scenario);

struct EvaluationReport {
  std::vector<double> per_frame_rmse;          ///< state vs. true latent, per frame
  std::vector<StepDiagnostics> diagnostics;    ///< frame 1 is the init row
};

/// RMSE over all entries of all frames up to and including prefix_length.
double prefix_rmse(const EvaluationReport& report, std::int64_t prefix_length);

/// Runs the policy over the whole trace (frame 1 initializes the state) and
/// collects per-frame error and diagnostics.
EvaluationReport evaluate(const StreamTrace& trace, const UpdatePolicy& policy,
                          const FilterConfig& config);

}  // namespace filt3r::sim
