// Update-policy dispatch: the full recursion plus the ablation variants
// (overwrite, fixed-beta EMA, fixed-Q, reset-P, raw-drift gate, adaptive
// measurement noise, periodic hard reset).
#pragma once

#include <optional>
#include <string>
#include <utility>

#include "filt3r/types.hpp"

namespace filt3r {

/// One frame under the given policy. Every policy emits a complete
/// StepDiagnostics so traces are schema-uniform: overwrite reports all-one
/// gains, the fixed-interpolation variants echo the untouched variance, and
/// the drift/EMA pipeline runs for every policy for diagnostic comparability.
/// AdaptiveR requires an attention summary and throws MissingInput without one.
std::pair<FilterState, StepDiagnostics> policy_step(
    const UpdatePolicy& policy, const FilterState& state, const TokenMatrix& candidate,
    const std::optional<AttentionSummary>& attention = std::nullopt);

/// Parses a kebab-case policy name produced by policy_name(). Composite
/// names use brackets, e.g. "periodic-reset[filt3r-full]".
UpdatePolicy policy_from_name(const std::string& name);

}  // namespace filt3r
