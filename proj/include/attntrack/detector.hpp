#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>

#include "attntrack/heads.hpp"
#include "attntrack/trace.hpp"

namespace attntrack {

inline constexpr double kDefaultQuantile = 0.01;

struct DetectionResult {
  std::string trace_id;
  double focus_score = 0.0;
  double threshold = 0.0;
  bool rejected = false;
  std::size_t head_count = 0;
};

/// Mean of per-head instruction attention values. Throws DomainError on an
/// empty list.
double focus_score(std::span<const double> head_attention);

/// Focus score: mean instruction attention over the head set.
/// Throws DomainError for an empty set, ShapeError for a head the trace does
/// not have.
double focus_score(const AttentionTrace& trace, const HeadSet& head_set);

/// Rejects the query iff its focus score is strictly below `threshold`.
DetectionResult detect(const AttentionTrace& trace, const HeadSet& head_set, double threshold,
                       std::string trace_id = {});

/// Empirical quantile of normal focus scores with lower interpolation:
/// sorted[floor(q * (n - 1))]. q must lie in (0, 1).
double calibrate_threshold(std::span<const double> normal_scores,
                           double quantile = kDefaultQuantile);

/// "trace_id<TAB>focus_score<TAB>threshold<TAB>accept|reject" line.
void write_detection_record(const DetectionResult& result, std::ostream& out);

}  // namespace attntrack
