#include "attntrack/heads.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "attntrack/error.hpp"
#include "json.hpp"

namespace attntrack {

std::size_t ScoreDistributions::index(HeadId head) const {
  if (head.layer < 0 || head.layer >= num_layers || head.head < 0 || head.head >= num_heads) {
    throw IndexError("head outside score distributions");
  }
  return static_cast<std::size_t>(head.layer) * static_cast<std::size_t>(num_heads) +
         static_cast<std::size_t>(head.head);
}

double HeadSet::proportion() const noexcept {
  const long total = static_cast<long>(num_layers) * num_heads;
  return total > 0 ? static_cast<double>(heads.size()) / static_cast<double>(total) : 0.0;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean of an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_stddev(std::span<const double> values) {
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

ScoreDistributions collect_distributions(std::span<const AttentionTrace> normal,
                                         std::span<const AttentionTrace> attack) {
  if (normal.empty() || attack.empty()) {
    throw DomainError("head discovery needs at least one normal and one attack trace");
  }
  ScoreDistributions d;
  d.num_layers = normal.front().num_layers();
  d.num_heads = normal.front().num_heads();
  d.model_id = normal.front().model_id();
  d.n_normal = normal.size();
  d.n_attack = attack.size();
  const auto heads = all_heads(d.num_layers, d.num_heads);
  d.normal.assign(heads.size(), {});
  d.attack.assign(heads.size(), {});

  auto collect = [&](std::span<const AttentionTrace> traces, auto& out) {
    for (const auto& trace : traces) {
      if (trace.num_layers() != d.num_layers || trace.num_heads() != d.num_heads) {
        throw ShapeError("trace with " + std::to_string(trace.num_layers()) + "x" +
                         std::to_string(trace.num_heads()) + " heads in a " +
                         std::to_string(d.num_layers) + "x" + std::to_string(d.num_heads) +
                         " corpus");
      }
      for (std::size_t i = 0; i < heads.size(); ++i) {
        out[i].push_back(instruction_attention(trace, heads[i]));
      }
    }
  };
  collect(normal, d.normal);
  collect(attack, d.attack);
  return d;
}

double candidate_score(std::span<const double> normal_scores,
                       std::span<const double> attack_scores, double k) {
  if (normal_scores.empty() || attack_scores.empty()) {
    throw DomainError("candidate score needs non-empty score lists");
  }
  if (!(k >= 0.0)) throw DomainError("k must be >= 0");
  const double shifted_normal = mean(normal_scores) - k * population_stddev(normal_scores);
  const double shifted_attack = mean(attack_scores) + k * population_stddev(attack_scores);
  return shifted_normal - shifted_attack;
}

HeadMatrix candidate_scores(const ScoreDistributions& dists, double k) {
  HeadMatrix m{dists.num_layers, dists.num_heads, {}};
  m.values.reserve(dists.normal.size());
  for (std::size_t i = 0; i < dists.normal.size(); ++i) {
    m.values.push_back(candidate_score(dists.normal[i], dists.attack[i], k));
  }
  return m;
}

HeadSet select_important_heads(const ScoreDistributions& dists, double k) {
  if (dists.normal.size() != static_cast<std::size_t>(dists.num_layers) * dists.num_heads ||
      dists.attack.size() != dists.normal.size()) {
    throw ShapeError("score distributions do not match their shape");
  }
  const HeadMatrix scores = candidate_scores(dists, k);
  HeadSet set;
  set.k = k;
  set.model_id = dists.model_id;
  set.n_normal = dists.n_normal;
  set.n_attack = dists.n_attack;
  set.num_layers = dists.num_layers;
  set.num_heads = dists.num_heads;
  for (const HeadId head : all_heads(dists.num_layers, dists.num_heads)) {
    if (scores.at(head) > 0.0) set.heads.push_back(head);
  }
  if (set.heads.empty()) set.metadata["warning"] = "no important heads selected";
  return set;
}

HeadMatrix head_mean_difference(const ScoreDistributions& dists) {
  HeadMatrix m{dists.num_layers, dists.num_heads, {}};
  m.values.reserve(dists.normal.size());
  for (std::size_t i = 0; i < dists.normal.size(); ++i) {
    m.values.push_back(mean(dists.normal[i]) - mean(dists.attack[i]));
  }
  return m;
}

HeadSet all_heads_set(int num_layers, int num_heads, std::string model_id) {
  HeadSet set;
  set.heads = all_heads(num_layers, num_heads);
  set.k = std::nan("");
  set.model_id = std::move(model_id);
  set.num_layers = num_layers;
  set.num_heads = num_heads;
  set.metadata["selection"] = "all";
  return set;
}

namespace {

using nlohmann::json;

json head_set_json(const HeadSet& set) {
  json heads = json::array();
  for (const auto& h : set.heads) heads.push_back({h.layer, h.head});
  json doc = {
      {"format_version", kHeadSetFormatVersion},
      {"model_id", set.model_id},
      {"k", std::isnan(set.k) ? json(nullptr) : json(set.k)},
      {"n_normal", set.n_normal},
      {"n_attack", set.n_attack},
      {"num_layers", set.num_layers},
      {"num_heads", set.num_heads},
      {"heads", heads},
  };
  if (!set.metadata.empty()) doc["metadata"] = set.metadata;
  return doc;
}

}  // namespace

void write_head_set(const HeadSet& set, std::ostream& out) {
  out << head_set_json(set).dump(2) << '\n';
  if (!out) throw IoError("failed to write head set");
}

void write_head_set_file(const HeadSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_head_set(set, out);
}

HeadSet read_head_set(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("unparsable head set: ") + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kHeadSetFormatVersion) {
      throw FormatError("unsupported head set format_version");
    }
    HeadSet set;
    set.model_id = doc.at("model_id").get<std::string>();
    set.k = doc.at("k").is_null() ? std::nan("") : doc.at("k").get<double>();
    set.n_normal = doc.at("n_normal").get<std::size_t>();
    set.n_attack = doc.at("n_attack").get<std::size_t>();
    set.num_layers = doc.value("num_layers", 0);
    set.num_heads = doc.value("num_heads", 0);
    for (const auto& pair : doc.at("heads")) {
      if (!pair.is_array() || pair.size() != 2) throw FormatError("head entry is not [layer, head]");
      set.heads.push_back({pair[0].get<int>(), pair[1].get<int>()});
    }
    if (doc.contains("metadata")) {
      set.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
    }
    std::vector<HeadId> sorted = set.heads;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw FormatError("duplicate head in head set");
    }
    set.heads = std::move(sorted);
    return set;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed head set: ") + e.what());
  }
}

HeadSet read_head_set_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open head set '" + path + "'");
  return read_head_set(in);
}

void write_head_matrix(const HeadMatrix& matrix, std::ostream& out, char sep) {
  out << "layer" << sep << "head" << sep << "value\n";
  const auto old_precision = out.precision(17);
  for (const HeadId head : all_heads(matrix.num_layers, matrix.num_heads)) {
    out << head.layer << sep << head.head << sep << matrix.at(head) << '\n';
  }
  out.precision(old_precision);
}

}  // namespace attntrack
