#include "attntrack/detector.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "attntrack/error.hpp"

namespace attntrack {

double focus_score(std::span<const double> head_attention) {
  if (head_attention.empty()) throw DomainError("no important heads; refit with smaller k");
  double sum = 0.0;
  for (double v : head_attention) sum += v;
  return sum / static_cast<double>(head_attention.size());
}

double focus_score(const AttentionTrace& trace, const HeadSet& head_set) {
  if (head_set.empty()) throw DomainError("no important heads; refit with smaller k");
  std::vector<double> values;
  values.reserve(head_set.size());
  for (const HeadId head : head_set.heads) {
    if (!trace.contains(head)) {
      throw ShapeError("head (" + std::to_string(head.layer) + ", " + std::to_string(head.head) +
                       ") not present in a " + std::to_string(trace.num_layers()) + "x" +
                       std::to_string(trace.num_heads()) + " trace");
    }
    values.push_back(instruction_attention(trace, head));
  }
  // Summation order fixed by head id so the score does not depend on the
  // order heads are listed in.
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return head_set.heads[a] < head_set.heads[b]; });
  std::vector<double> ordered;
  ordered.reserve(values.size());
  for (std::size_t i : order) ordered.push_back(values[i]);
  return focus_score(ordered);
}

DetectionResult detect(const AttentionTrace& trace, const HeadSet& head_set, double threshold,
                       std::string trace_id) {
  DetectionResult r;
  r.trace_id = std::move(trace_id);
  r.focus_score = focus_score(trace, head_set);
  r.threshold = threshold;
  r.rejected = r.focus_score < threshold;
  r.head_count = head_set.size();
  return r;
}

double calibrate_threshold(std::span<const double> normal_scores, double quantile) {
  if (normal_scores.empty()) throw DomainError("threshold calibration needs normal scores");
  if (!(quantile > 0.0 && quantile < 1.0)) throw DomainError("quantile must lie in (0, 1)");
  std::vector<double> sorted(normal_scores.begin(), normal_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto index =
      static_cast<std::size_t>(std::floor(quantile * static_cast<double>(sorted.size() - 1)));
  return sorted[index];
}

void write_detection_record(const DetectionResult& result, std::ostream& out) {
  const auto old_precision = out.precision(9);
  out << result.trace_id << '\t' << result.focus_score << '\t' << result.threshold << '\t'
      << (result.rejected ? "reject" : "accept") << '\n';
  out.precision(old_precision);
}

}  // namespace attntrack
