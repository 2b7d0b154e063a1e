#pragma once

// Attention-trace data model.
//
// A trace holds, for one prompt, the attention row of the prompt's last token
// at the first generated position, for every layer and head:
// attn(l, h, i) is the weight the last token puts on prompt position i.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attntrack {

/// Default row-sum tolerance; accepts reduced-precision producers.
inline constexpr double kRowTolerance = 1e-2;
/// Opt-in strict row-sum tolerance.
inline constexpr double kStrictRowTolerance = 1e-6;

enum class Label { normal, attack, unlabeled };

std::string_view to_string(Label label) noexcept;
/// Throws DomainError for anything but "normal", "attack", "unlabeled".
Label parse_label(std::string_view text);

/// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > start ? end - start : 0; }
  bool empty() const noexcept { return end <= start; }
  bool contains(std::size_t i) const noexcept { return i >= start && i < end; }
  bool overlaps(const Span& other) const noexcept {
    return start < other.end && other.start < end;
  }
  friend bool operator==(const Span&, const Span&) = default;
};

struct HeadId {
  int layer = 0;
  int head = 0;

  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

struct TraceShape {
  int num_layers = 0;
  int num_heads = 0;
  std::size_t seq_len = 0;

  std::size_t head_count() const noexcept {
    return static_cast<std::size_t>(num_layers) * static_cast<std::size_t>(num_heads);
  }
  std::size_t element_count() const noexcept { return head_count() * seq_len; }
  friend bool operator==(const TraceShape&, const TraceShape&) = default;
};

struct ValidationOptions {
  double row_tolerance = kRowTolerance;

  static ValidationOptions strict() { return {kStrictRowTolerance}; }
};

/// Immutable attention trace. Construction validates every invariant and
/// throws ValidationError naming the first one that fails.
class AttentionTrace {
 public:
  AttentionTrace(std::string model_id, TraceShape shape, std::vector<float> attn,
                 Span instruction_span, Span data_span, Label label = Label::unlabeled,
                 std::vector<std::string> tokens = {},
                 std::map<std::string, std::string> metadata = {},
                 ValidationOptions options = {});

  const std::string& model_id() const noexcept { return model_id_; }
  const TraceShape& shape() const noexcept { return shape_; }
  int num_layers() const noexcept { return shape_.num_layers; }
  int num_heads() const noexcept { return shape_.num_heads; }
  std::size_t seq_len() const noexcept { return shape_.seq_len; }
  const Span& instruction_span() const noexcept { return instruction_span_; }
  const Span& data_span() const noexcept { return data_span_; }
  Label label() const noexcept { return label_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

  /// Layer-major, head-major, position-minor tensor.
  std::span<const float> values() const noexcept { return attn_; }
  /// Attention row of one head. Throws IndexError when out of bounds.
  std::span<const float> row(HeadId head) const;

  bool contains(HeadId head) const noexcept {
    return head.layer >= 0 && head.layer < shape_.num_layers && head.head >= 0 &&
           head.head < shape_.num_heads;
  }

  /// Copy carrying a different label.
  AttentionTrace with_label(Label label) const;

  /// Re-runs validation with different options (e.g. strict row sums).
  void validate(ValidationOptions options) const;

  friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;

 private:
  std::string model_id_;
  TraceShape shape_;
  std::vector<float> attn_;
  Span instruction_span_;
  Span data_span_;
  Label label_;
  std::vector<std::string> tokens_;
  std::map<std::string, std::string> metadata_;
};

/// Sum of one head's row over a span, accumulated in double. No clamping.
double span_attention(const AttentionTrace& trace, HeadId head, Span span);

/// Attn(I) for one head before clamping; for diagnostics.
double instruction_attention_raw(const AttentionTrace& trace, HeadId head);

/// Attn(I): the head's attention mass on the instruction span, clamped to
/// [0, 1 + kRowTolerance].
double instruction_attention(const AttentionTrace& trace, HeadId head);

/// Mean over the layer's heads of the attention placed on one token.
double layer_mean_attention(const AttentionTrace& trace, int layer, std::size_t token_index);

/// Total instruction attention over every head of every layer.
double aggregate_all_heads(const AttentionTrace& trace);

/// Every head of a shape in layer-major order.
std::vector<HeadId> all_heads(int num_layers, int num_heads);

}  // namespace attntrack
