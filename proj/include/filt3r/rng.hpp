// Deterministic Gaussian sampling for reproducible synthetic streams.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace filt3r::sim {

/// Seeded Gaussian stream built from std::mt19937_64 (whose output sequence
/// is pinned by the standard) and the Marsaglia polar transform, which uses
/// only sqrt/log and no library sin/cos. std::normal_distribution is
/// deliberately avoided: its algorithm is implementation-defined, so traces
/// produced with it would not be stable across toolchains.
class GaussianStream {
 public:
  /// Algorithm tag written into trace headers; bump on any change to the
  /// sampling scheme below.
  static constexpr std::string_view kAlgorithm = "mt19937_64/polar/v1";

  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform_open() - 1.0;
      v = 2.0 * uniform_open() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace filt3r::sim
