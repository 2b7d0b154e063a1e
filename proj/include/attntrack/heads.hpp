#pragma once

// Important-head discovery.
//
// For every head the instruction attention of each calibration trace is
// collected into a normal and an attack list. A head is important when
//
//   mean(normal) - k * std(normal)  >  mean(attack) + k * std(attack)
//
// i.e. the two distributions stay apart after each is shifted towards the
// other by k standard deviations. std is the population standard deviation.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "attntrack/trace.hpp"

namespace attntrack {

inline constexpr double kDefaultK = 4.0;
inline constexpr int kHeadSetFormatVersion = 1;

struct ScoreDistributions {
  int num_layers = 0;
  int num_heads = 0;
  std::size_t n_normal = 0;
  std::size_t n_attack = 0;
  std::string model_id;
  /// Indexed by flat head index (layer * num_heads + head), then by trace.
  std::vector<std::vector<double>> normal;
  std::vector<std::vector<double>> attack;

  std::size_t index(HeadId head) const;
  std::span<const double> normal_scores(HeadId head) const { return normal[index(head)]; }
  std::span<const double> attack_scores(HeadId head) const { return attack[index(head)]; }
};

struct HeadSet {
  std::vector<HeadId> heads;
  double k = kDefaultK;
  std::string model_id;
  std::size_t n_normal = 0;
  std::size_t n_attack = 0;
  /// Shape of the model the set was fitted on; 0 when unknown.
  int num_layers = 0;
  int num_heads = 0;
  std::map<std::string, std::string> metadata;

  bool empty() const noexcept { return heads.empty(); }
  std::size_t size() const noexcept { return heads.size(); }
  /// Fraction of all heads selected; 0 when the shape is unknown.
  double proportion() const noexcept;

  friend bool operator==(const HeadSet&, const HeadSet&) = default;
};

/// Per-head, per-label matrix [num_layers x num_heads], row-major.
struct HeadMatrix {
  int num_layers = 0;
  int num_heads = 0;
  std::vector<double> values;

  double at(HeadId head) const {
    return values[static_cast<std::size_t>(head.layer) * num_heads + head.head];
  }
};

double mean(std::span<const double> values);
/// Population standard deviation (divisor n).
double population_stddev(std::span<const double> values);

/// Throws ShapeError when traces disagree on (layers, heads), DomainError
/// when either list is empty.
ScoreDistributions collect_distributions(std::span<const AttentionTrace> normal,
                                         std::span<const AttentionTrace> attack);

/// mean_n - k*std_n - (mean_a + k*std_a). Throws DomainError on an empty
/// list or k < 0.
double candidate_score(std::span<const double> normal_scores,
                       std::span<const double> attack_scores, double k);

/// Heads with strictly positive candidate score, layer-major. An empty
/// selection is returned as an empty set with metadata "warning" set.
HeadSet select_important_heads(const ScoreDistributions& dists, double k = kDefaultK);

/// Candidate score of every head at the given k.
HeadMatrix candidate_scores(const ScoreDistributions& dists, double k);

/// mean(normal) - mean(attack) for every head.
HeadMatrix head_mean_difference(const ScoreDistributions& dists);

/// HeadSet that uses every head of the shape ("All" baseline).
HeadSet all_heads_set(int num_layers, int num_heads, std::string model_id = {});

void write_head_set(const HeadSet& set, std::ostream& out);
void write_head_set_file(const HeadSet& set, const std::string& path);
/// Throws FormatError when fields are missing or malformed.
HeadSet read_head_set(std::istream& in);
HeadSet read_head_set_file(const std::string& path);

/// Matrix as delimiter-separated text: "layer<sep>head<sep>value" rows.
void write_head_matrix(const HeadMatrix& matrix, std::ostream& out, char sep = ',');

}  // namespace attntrack
