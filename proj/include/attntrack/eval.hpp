#pragma once

// Detection-quality evaluation: AUROC, corpus reports, the k sweep and the
// data-length ablation.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attntrack/heads.hpp"
#include "attntrack/synthetic.hpp"
#include "attntrack/trace.hpp"

namespace attntrack {

/// AUROC with attack as the positive class and a lower focus score meaning
/// "more suspicious": P(normal > attack) + P(normal == attack) / 2.
/// Rank-based (midranks), O(n log n). Throws DomainError on an empty list.
double auroc(std::span<const double> normal_scores, std::span<const double> attack_scores);

struct ScoreSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Order-independent summary (values are sorted before summation).
ScoreSummary summarize(std::span<const double> values);

struct ScoredTrace {
  std::string trace_id;
  Label label = Label::unlabeled;
  double focus_score = 0.0;
};

struct EvalReport {
  double auroc = 0.0;
  std::size_t n_normal = 0;
  std::size_t n_attack = 0;
  ScoreSummary normal;
  ScoreSummary attack;
  std::string model_id;
  double k = 0.0;
  std::size_t head_count = 0;
  std::vector<HeadId> heads;
  /// In input order.
  std::vector<ScoredTrace> records;
};

/// Scores every labeled trace. Unlabeled traces are ignored; a collection
/// missing either label throws DomainError. `trace_ids`, when given, must
/// match `traces` in length.
EvalReport evaluate(std::span<const AttentionTrace> traces, const HeadSet& head_set,
                    std::span<const std::string> trace_ids = {});

struct KSweepRow {
  /// nullopt for the "All" row.
  std::optional<double> k;
  std::size_t head_count = 0;
  double proportion = 0.0;
  /// nullopt when no head was selected.
  std::optional<double> auroc;
};

/// Fits a head set on `fit` for each k and evaluates it on `eval`. The first
/// row uses every head.
std::vector<KSweepRow> k_sweep(std::span<const AttentionTrace> fit,
                               std::span<const AttentionTrace> eval,
                               std::span<const double> k_values);

inline constexpr double kDefaultSweepKValues[] = {0, 1, 2, 3, 4, 5};

struct LengthAblationRow {
  double multiplier = 1.0;
  std::size_t data_length = 0;
  std::size_t seq_len = 0;
  double mean_focus_normal = 0.0;
  double mean_focus_attack = 0.0;
};

/// For each multiplier, stretches the data span, generates n_per_label
/// normal and attack traces and reports their mean focus score over
/// `head_set` (the config's planted heads when empty).
std::vector<LengthAblationRow> length_ablation(const SyntheticConfig& config,
                                               std::span<const double> multipliers,
                                               std::size_t n_per_label,
                                               const HeadSet& head_set = {});

void write_report_json(const EvalReport& report, std::ostream& out);
/// One row per trace: trace_id,label,focus_score.
void write_report_csv(const EvalReport& report, std::ostream& out);
void write_k_sweep_csv(std::span<const KSweepRow> rows, std::ostream& out);
void write_k_sweep_json(std::span<const KSweepRow> rows, std::ostream& out);
void write_length_ablation_csv(std::span<const LengthAblationRow> rows, std::ostream& out);
void write_length_ablation_json(std::span<const LengthAblationRow> rows, std::ostream& out);

}  // namespace attntrack
