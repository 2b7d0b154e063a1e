#include "attntrack/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "attntrack/error.hpp"
#include "attntrack/random.hpp"

namespace attntrack {

namespace {

constexpr std::uint64_t kNormalStream = 1;
constexpr std::uint64_t kAttackStream = 2;
constexpr std::uint64_t kPlantStream = 3;

double noise_bound(double noise_scale) { return std::sqrt(3.0) * noise_scale; }

void require_open_unit(const char* name, double lo, double hi) {
  if (!(lo > 0.0 && hi < 1.0)) {
    throw ValidationError(std::string(name) + " in (0,1)",
                          "mass range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                              "] leaves (0, 1)");
  }
}

// Spreads `mass` over the positions of `span` with random positive weights.
void spread(std::vector<double>& row, Span span, double mass, RandomStream& rng) {
  if (span.empty()) return;
  std::vector<double> weights(span.size());
  double total = 0.0;
  for (auto& w : weights) {
    w = 0.5 + rng.uniform();
    total += w;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) row[span.start + i] += mass * weights[i] / total;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (num_layers <= 0 || num_heads <= 0 || seq_len == 0) {
    throw ValidationError("positive dimensions", "layers, heads and seq_len must be positive");
  }
  for (const auto& [name, span] : {std::pair{"instruction_span", instruction_span},
                                   std::pair{"data_span", data_span}}) {
    if (span.start >= span.end || span.end > seq_len) {
      throw ValidationError(std::string(name) + " bounds", "span outside [0, seq_len)");
    }
  }
  if (instruction_span.overlaps(data_span)) {
    throw ValidationError("disjoint spans", "instruction_span and data_span overlap");
  }
  if (!(distraction_strength >= 0.0 && distraction_strength <= 1.0)) {
    throw ValidationError("distraction_strength in [0,1]", std::to_string(distraction_strength));
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ValidationError("noise_scale >= 0", std::to_string(noise_scale));
  }
  const double b = noise_bound(noise_scale);
  require_open_unit("base_instruction_mass", base_instruction_mass, base_instruction_mass);
  require_open_unit("background_instruction_mass", background_instruction_mass,
                    background_instruction_mass);
  require_open_unit("attacked planted mass",
                    base_instruction_mass * (1.0 - distraction_strength),
                    base_instruction_mass * (1.0 - distraction_strength));
  require_open_unit("noisy planted mass", base_instruction_mass * (1.0 - distraction_strength) - b,
                    base_instruction_mass + b);
  require_open_unit("noisy background mass", background_instruction_mass - b,
                    background_instruction_mass + b);

  std::vector<HeadId> sorted = planted_heads;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("distinct planted heads", "planted_heads contains duplicates");
  }
  for (const auto& h : sorted) {
    if (h.layer < 0 || h.layer >= num_layers || h.head < 0 || h.head >= num_heads) {
      throw ValidationError("planted heads in bounds", "head (" + std::to_string(h.layer) +
                                                           ", " + std::to_string(h.head) + ")");
    }
  }
}

std::vector<HeadId> random_planted_heads(int num_layers, int num_heads, std::size_t count,
                                         std::uint64_t seed) {
  auto heads = all_heads(num_layers, num_heads);
  if (count > heads.size()) throw DomainError("more planted heads than heads");
  RandomStream rng(seed, kPlantStream, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(heads.size() - i));
    std::swap(heads[i], heads[j]);
  }
  heads.resize(count);
  std::sort(heads.begin(), heads.end());
  return heads;
}

AttentionTrace generate_trace(const SyntheticConfig& config, Label label, std::size_t index) {
  config.validate();
  if (label == Label::unlabeled) throw DomainError("synthetic traces are normal or attack");
  const bool attack = label == Label::attack;
  RandomStream rng(config.seed, attack ? kAttackStream : kNormalStream, index);

  std::vector<HeadId> planted = config.planted_heads;
  std::sort(planted.begin(), planted.end());

  const TraceShape shape{config.num_layers, config.num_heads, config.seq_len};
  const double b = noise_bound(config.noise_scale);
  const Span instr = config.instruction_span;
  const Span data = config.data_span;

  std::vector<float> attn;
  attn.reserve(shape.element_count());
  std::vector<double> row(config.seq_len);
  for (const HeadId head : all_heads(config.num_layers, config.num_heads)) {
    const bool is_planted = std::binary_search(planted.begin(), planted.end(), head);
    double target = config.background_instruction_mass;
    double shift = 0.0;
    if (is_planted) {
      target = config.base_instruction_mass;
      if (attack) {
        shift = config.base_instruction_mass * config.distraction_strength;
        target -= shift;
      }
    }
    const double mass = target + rng.uniform(-b, b);
    const double rest = 1.0 - mass - shift;

    std::fill(row.begin(), row.end(), 0.0);
    spread(row, instr, mass, rng);
    spread(row, data, shift, rng);
    // Remaining mass goes to every non-instruction position.
    std::vector<double> weights(config.seq_len, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < config.seq_len; ++i) {
      if (instr.contains(i)) continue;
      weights[i] = 0.5 + rng.uniform();
      total += weights[i];
    }
    for (std::size_t i = 0; i < config.seq_len; ++i) row[i] += rest * weights[i] / total;

    for (double v : row) attn.push_back(static_cast<float>(v));
  }

  std::map<std::string, std::string> metadata{
      {"producer", "synthetic"},
      {"precision", "float32"},
      {"seed", std::to_string(config.seed)},
      {"index", std::to_string(index)},
  };
  return AttentionTrace(config.model_id, shape, std::move(attn), instr, data, label, {},
                        std::move(metadata), ValidationOptions::strict());
}

std::vector<AttentionTrace> generate_corpus(const SyntheticConfig& config, std::size_t n_normal,
                                            std::size_t n_attack) {
  config.validate();
  std::vector<AttentionTrace> corpus;
  corpus.reserve(n_normal + n_attack);
  for (std::size_t i = 0; i < n_normal; ++i) {
    corpus.push_back(generate_trace(config, Label::normal, i));
  }
  for (std::size_t i = 0; i < n_attack; ++i) {
    corpus.push_back(generate_trace(config, Label::attack, i));
  }
  return corpus;
}

SyntheticConfig stretch_data_span(const SyntheticConfig& config, double multiplier) {
  if (!(multiplier >= 1.0) || !std::isfinite(multiplier)) {
    throw DomainError("length multiplier must be >= 1");
  }
  SyntheticConfig out = config;
  const std::size_t old_len = config.data_span.size();
  const auto new_len = static_cast<std::size_t>(std::llround(old_len * multiplier));
  const std::size_t delta = new_len - old_len;
  out.data_span.end += delta;
  out.seq_len += delta;
  if (out.instruction_span.start >= config.data_span.end) {
    out.instruction_span.start += delta;
    out.instruction_span.end += delta;
  }
  return out;
}

}  // namespace attntrack
