#include "attntrack/trace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "attntrack/error.hpp"

namespace attntrack {

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::normal:
      return "normal";
    case Label::attack:
      return "attack";
    case Label::unlabeled:
      break;
  }
  return "unlabeled";
}

Label parse_label(std::string_view text) {
  if (text == "normal") return Label::normal;
  if (text == "attack") return Label::attack;
  if (text == "unlabeled") return Label::unlabeled;
  throw DomainError("unknown label '" + std::string(text) + "'");
}

namespace {

void check_span(const char* name, const Span& span, std::size_t seq_len) {
  if (span.start >= span.end || span.end > seq_len) {
    throw ValidationError(std::string(name) + " bounds",
                          "[" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                              ") must satisfy 0 <= start < end <= seq_len=" +
                              std::to_string(seq_len));
  }
}

}  // namespace

AttentionTrace::AttentionTrace(std::string model_id, TraceShape shape, std::vector<float> attn,
                               Span instruction_span, Span data_span, Label label,
                               std::vector<std::string> tokens,
                               std::map<std::string, std::string> metadata,
                               ValidationOptions options)
    : model_id_(std::move(model_id)),
      shape_(shape),
      attn_(std::move(attn)),
      instruction_span_(instruction_span),
      data_span_(data_span),
      label_(label),
      tokens_(std::move(tokens)),
      metadata_(std::move(metadata)) {
  validate(options);
}

void AttentionTrace::validate(ValidationOptions options) const {
  if (shape_.num_layers <= 0 || shape_.num_heads <= 0 || shape_.seq_len == 0) {
    throw ValidationError("positive dimensions",
                          "num_layers, num_heads and seq_len must all be positive");
  }
  if (attn_.size() != shape_.element_count()) {
    throw ValidationError("tensor size", "expected " + std::to_string(shape_.element_count()) +
                                             " values, got " + std::to_string(attn_.size()));
  }
  check_span("instruction_span", instruction_span_, shape_.seq_len);
  check_span("data_span", data_span_, shape_.seq_len);
  if (instruction_span_.overlaps(data_span_)) {
    throw ValidationError("disjoint spans", "instruction_span and data_span overlap");
  }
  if (!tokens_.empty() && tokens_.size() != shape_.seq_len) {
    throw ValidationError("token count", "tokens list has " + std::to_string(tokens_.size()) +
                                             " entries for seq_len " +
                                             std::to_string(shape_.seq_len));
  }
  const std::size_t t = shape_.seq_len;
  for (std::size_t r = 0; r < shape_.head_count(); ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const float v = attn_[r * t + i];
      if (!(v >= 0.0f) || !std::isfinite(v)) {
        throw ValidationError("non-negative attention",
                              "entry " + std::to_string(i) + " of row " + std::to_string(r) +
                                  " is " + std::to_string(v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > options.row_tolerance) {
      throw ValidationError("row sum", "row " + std::to_string(r) + " sums to " +
                                           std::to_string(sum) + ", tolerance " +
                                           std::to_string(options.row_tolerance));
    }
  }
}

AttentionTrace AttentionTrace::with_label(Label label) const {
  AttentionTrace copy = *this;
  copy.label_ = label;
  return copy;
}

std::span<const float> AttentionTrace::row(HeadId head) const {
  if (!contains(head)) {
    throw IndexError("head (" + std::to_string(head.layer) + ", " + std::to_string(head.head) +
                     ") outside " + std::to_string(shape_.num_layers) + "x" +
                     std::to_string(shape_.num_heads));
  }
  const std::size_t offset =
      (static_cast<std::size_t>(head.layer) * static_cast<std::size_t>(shape_.num_heads) +
       static_cast<std::size_t>(head.head)) *
      shape_.seq_len;
  return std::span<const float>(attn_).subspan(offset, shape_.seq_len);
}

double span_attention(const AttentionTrace& trace, HeadId head, Span span) {
  const auto row = trace.row(head);
  if (span.end > row.size()) throw IndexError("span exceeds seq_len");
  double sum = 0.0;
  for (std::size_t i = span.start; i < span.end; ++i) sum += row[i];
  return sum;
}

double instruction_attention_raw(const AttentionTrace& trace, HeadId head) {
  if (trace.instruction_span().empty()) throw DomainError("instruction span empty");
  return span_attention(trace, head, trace.instruction_span());
}

double instruction_attention(const AttentionTrace& trace, HeadId head) {
  return std::clamp(instruction_attention_raw(trace, head), 0.0, 1.0 + kRowTolerance);
}

double layer_mean_attention(const AttentionTrace& trace, int layer, std::size_t token_index) {
  if (layer < 0 || layer >= trace.num_layers()) {
    throw IndexError("layer " + std::to_string(layer) + " out of range");
  }
  if (token_index >= trace.seq_len()) {
    throw IndexError("token " + std::to_string(token_index) + " out of range");
  }
  double sum = 0.0;
  for (int h = 0; h < trace.num_heads(); ++h) sum += trace.row({layer, h})[token_index];
  return sum / trace.num_heads();
}

double aggregate_all_heads(const AttentionTrace& trace) {
  double total = 0.0;
  for (int l = 0; l < trace.num_layers(); ++l) {
    for (int h = 0; h < trace.num_heads(); ++h) total += instruction_attention(trace, {l, h});
  }
  return total;
}

std::vector<HeadId> all_heads(int num_layers, int num_heads) {
  std::vector<HeadId> heads;
  heads.reserve(static_cast<std::size_t>(std::max(0, num_layers * num_heads)));
  for (int l = 0; l < num_layers; ++l) {
    for (int h = 0; h < num_heads; ++h) heads.push_back({l, h});
  }
  return heads;
}

}  // namespace attntrack
