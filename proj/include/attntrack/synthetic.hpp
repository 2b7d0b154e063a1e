#pragma once

// Deterministic generator of attention traces with a planted distraction
// effect. No model is involved: the generator only reproduces the
// structure the detector relies on (a few heads whose instruction attention
// drops under attack).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attntrack/trace.hpp"

namespace attntrack {

struct SyntheticConfig {
  int num_layers = 8;
  int num_heads = 8;
  std::size_t seq_len = 64;
  Span instruction_span{4, 16};
  Span data_span{20, 60};
  std::vector<HeadId> planted_heads;
  /// Mean instruction attention of planted heads on normal data.
  double base_instruction_mass = 0.8;
  /// Fraction of planted-head instruction mass moved into the data span on
  /// attack data.
  double distraction_strength = 0.6;
  /// Mean instruction attention of every other head, for both labels.
  double background_instruction_mass = 0.3;
  /// Standard deviation of the additive mass noise. The noise is uniform on
  /// [-sqrt(3), sqrt(3)) * noise_scale, so it is bounded.
  double noise_scale = 0.02;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";

  /// Throws ValidationError when a parameter is out of range or the noise
  /// could push a mass outside (0, 1).
  void validate() const;
};

/// Picks `count` distinct heads uniformly at random, returned sorted.
std::vector<HeadId> random_planted_heads(int num_layers, int num_heads, std::size_t count,
                                         std::uint64_t seed);

/// Trace `index` of the given label. Pure function of its arguments.
/// `label` must be normal or attack.
AttentionTrace generate_trace(const SyntheticConfig& config, Label label, std::size_t index);

/// Normal traces 0..n_normal-1 followed by attack traces 0..n_attack-1.
std::vector<AttentionTrace> generate_corpus(const SyntheticConfig& config, std::size_t n_normal,
                                            std::size_t n_attack);

/// Same config with the data span stretched by `multiplier` (>= 1); later
/// positions and seq_len shift accordingly.
SyntheticConfig stretch_data_span(const SyntheticConfig& config, double multiplier);

}  // namespace attntrack
