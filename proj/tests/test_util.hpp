#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the code paths it is used to check.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attntrack/synthetic.hpp"
#include "attntrack/trace.hpp"

namespace attntrack::testing {

/// Trace whose rows are given explicitly (layer-major, head-minor).
inline AttentionTrace trace_from_rows(int layers, int heads,
                                      const std::vector<std::vector<float>>& rows, Span instr,
                                      Span data, Label label = Label::normal) {
  const std::size_t t = rows.front().size();
  std::vector<float> attn;
  for (const auto& r : rows) attn.insert(attn.end(), r.begin(), r.end());
  return AttentionTrace("test-model", {layers, heads, t}, std::move(attn), instr, data, label);
}

/// Every row uniform over T positions.
inline AttentionTrace uniform_trace(int layers, int heads, std::size_t t, Span instr, Span data) {
  std::vector<std::vector<float>> rows(static_cast<std::size_t>(layers * heads),
                                       std::vector<float>(t, 1.0f / static_cast<float>(t)));
  return trace_from_rows(layers, heads, rows, instr, data);
}

/// Random trace with rows normalized in double and rounded to float.
inline AttentionTrace random_trace(std::mt19937_64& rng, Label label = Label::unlabeled,
                                   bool with_tokens = false) {
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_int_distribution<std::size_t> len(4, 24);
  const int layers = dim(rng);
  const int heads = dim(rng);
  const std::size_t t = len(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<float> attn;
  for (int r = 0; r < layers * heads; ++r) {
    std::vector<double> row(t);
    double total = 0.0;
    for (auto& v : row) total += (v = u(rng));
    for (double v : row) attn.push_back(static_cast<float>(v / total));
  }
  const std::size_t split = t / 2;
  std::vector<std::string> tokens;
  if (with_tokens) {
    for (std::size_t i = 0; i < t; ++i) tokens.push_back("tok" + std::to_string(i) + "\xC3\xA9");
  }
  std::map<std::string, std::string> meta;
  if (with_tokens) meta["producer"] = "random";
  return AttentionTrace("random-" + std::to_string(layers) + "x" + std::to_string(heads),
                        {layers, heads, t}, std::move(attn), {0, split}, {split, t}, label,
                        std::move(tokens), std::move(meta));
}

/// Default planted configuration of the acceptance experiments.
inline SyntheticConfig planted_config(std::uint64_t seed, double strength = 0.6) {
  SyntheticConfig c;
  c.num_layers = 8;
  c.num_heads = 8;
  c.base_instruction_mass = 0.8;
  c.background_instruction_mass = 0.3;
  c.distraction_strength = strength;
  c.noise_scale = 0.02;
  c.seed = seed;
  c.planted_heads = random_planted_heads(8, 8, 5, seed);
  return c;
}

/// Oracle: direct summation of a head's row over a span.
inline double direct_sum(const AttentionTrace& trace, HeadId head, Span span) {
  const auto values = trace.values();
  const std::size_t t = trace.seq_len();
  const std::size_t base =
      (static_cast<std::size_t>(head.layer) * trace.num_heads() + head.head) * t;
  double sum = 0.0;
  for (std::size_t i = span.start; i < span.end; ++i) sum += values[base + i];
  return sum;
}

/// Oracle: O(n*m) pairwise AUROC, ties counted half.
inline double brute_force_auroc(std::span<const double> normal, std::span<const double> attack) {
  double wins = 0.0;
  for (double n : normal) {
    for (double a : attack) {
      if (n > a) {
        wins += 1.0;
      } else if (n == a) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(normal.size()) * static_cast<double>(attack.size()));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("attntrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace attntrack::testing
