#include "attntrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "attntrack/detector.hpp"
#include "attntrack/error.hpp"
#include "json.hpp"

namespace attntrack {

double auroc(std::span<const double> normal_scores, std::span<const double> attack_scores) {
  if (normal_scores.empty() || attack_scores.empty()) {
    throw DomainError("AUROC needs non-empty normal and attack scores");
  }
  struct Item {
    double score;
    bool normal;
  };
  std::vector<Item> items;
  items.reserve(normal_scores.size() + attack_scores.size());
  for (double s : normal_scores) items.push_back({s, true});
  for (double s : attack_scores) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });

  // Sum of the (1-based, midranked) ranks of the normal scores.
  double normal_rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::size_t normals = 0;
    while (j < items.size() && items[j].score == items[i].score) {
      normals += items[j].normal ? 1 : 0;
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    normal_rank_sum += midrank * static_cast<double>(normals);
    i = j;
  }
  const auto n = static_cast<double>(normal_scores.size());
  const auto a = static_cast<double>(attack_scores.size());
  const double u = normal_rank_sum - n * (n + 1.0) / 2.0;
  return u / (n * a);
}

ScoreSummary summarize(std::span<const double> values) {
  ScoreSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  s.mean = mean(sorted);
  s.stddev = population_stddev(sorted);
  s.min = sorted.front();
  s.max = sorted.back();
  return s;
}

EvalReport evaluate(std::span<const AttentionTrace> traces, const HeadSet& head_set,
                    std::span<const std::string> trace_ids) {
  if (!trace_ids.empty() && trace_ids.size() != traces.size()) {
    throw DomainError("trace id count does not match trace count");
  }
  EvalReport report;
  report.model_id = head_set.model_id;
  report.k = head_set.k;
  report.head_count = head_set.size();
  report.heads = head_set.heads;

  std::vector<double> normal;
  std::vector<double> attack;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& trace = traces[i];
    if (trace.label() == Label::unlabeled) continue;
    const double fs = focus_score(trace, head_set);
    (trace.label() == Label::normal ? normal : attack).push_back(fs);
    report.records.push_back(
        {trace_ids.empty() ? std::to_string(i) : trace_ids[i], trace.label(), fs});
  }
  if (normal.empty() || attack.empty()) {
    throw DomainError("evaluation needs both normal and attack traces");
  }
  report.n_normal = normal.size();
  report.n_attack = attack.size();
  report.auroc = auroc(normal, attack);
  report.normal = summarize(normal);
  report.attack = summarize(attack);
  return report;
}

namespace {

std::pair<std::vector<AttentionTrace>, std::vector<AttentionTrace>> split_by_label(
    std::span<const AttentionTrace> traces) {
  std::vector<AttentionTrace> normal;
  std::vector<AttentionTrace> attack;
  for (const auto& t : traces) {
    if (t.label() == Label::normal) normal.push_back(t);
    if (t.label() == Label::attack) attack.push_back(t);
  }
  return {std::move(normal), std::move(attack)};
}

}  // namespace

std::vector<KSweepRow> k_sweep(std::span<const AttentionTrace> fit,
                               std::span<const AttentionTrace> eval,
                               std::span<const double> k_values) {
  const auto [normal, attack] = split_by_label(fit);
  const ScoreDistributions dists = collect_distributions(normal, attack);

  std::vector<KSweepRow> rows;
  const HeadSet everything = all_heads_set(dists.num_layers, dists.num_heads, dists.model_id);
  rows.push_back({std::nullopt, everything.size(), 1.0, evaluate(eval, everything).auroc});
  for (double k : k_values) {
    const HeadSet set = select_important_heads(dists, k);
    KSweepRow row{k, set.size(), set.proportion(), std::nullopt};
    if (!set.empty()) row.auroc = evaluate(eval, set).auroc;
    rows.push_back(row);
  }
  return rows;
}

std::vector<LengthAblationRow> length_ablation(const SyntheticConfig& config,
                                               std::span<const double> multipliers,
                                               std::size_t n_per_label,
                                               const HeadSet& head_set) {
  if (n_per_label == 0) throw DomainError("length ablation needs at least one trace per label");
  HeadSet heads = head_set;
  if (heads.empty()) {
    heads.heads = config.planted_heads;
    std::sort(heads.heads.begin(), heads.heads.end());
    heads.num_layers = config.num_layers;
    heads.num_heads = config.num_heads;
  }
  std::vector<LengthAblationRow> rows;
  for (double m : multipliers) {
    const SyntheticConfig stretched = stretch_data_span(config, m);
    std::vector<double> normal;
    std::vector<double> attack;
    for (std::size_t i = 0; i < n_per_label; ++i) {
      normal.push_back(focus_score(generate_trace(stretched, Label::normal, i), heads));
      attack.push_back(focus_score(generate_trace(stretched, Label::attack, i), heads));
    }
    rows.push_back({m, stretched.data_span.size(), stretched.seq_len, mean(normal),
                    mean(attack)});
  }
  return rows;
}

namespace {

using nlohmann::json;

json summary_json(const ScoreSummary& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

}  // namespace

void write_report_json(const EvalReport& report, std::ostream& out) {
  json heads = json::array();
  for (const auto& h : report.heads) heads.push_back({h.layer, h.head});
  json records = json::array();
  for (const auto& r : report.records) {
    records.push_back({{"trace", r.trace_id},
                       {"label", std::string(to_string(r.label))},
                       {"focus_score", r.focus_score}});
  }
  const json doc = {
      {"auroc", report.auroc},
      {"n_normal", report.n_normal},
      {"n_attack", report.n_attack},
      {"normal", summary_json(report.normal)},
      {"attack", summary_json(report.attack)},
      {"model_id", report.model_id},
      {"k", finite_or_null(report.k)},
      {"head_count", report.head_count},
      {"heads", heads},
      {"records", records},
  };
  out << doc.dump(2) << '\n';
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "trace,label,focus_score\n";
  for (const auto& r : report.records) {
    out << r.trace_id << ',' << to_string(r.label) << ',' << r.focus_score << '\n';
  }
  out.precision(old_precision);
}

void write_k_sweep_csv(std::span<const KSweepRow> rows, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "k,head_count,proportion,auroc\n";
  for (const auto& r : rows) {
    if (r.k) {
      out << *r.k;
    } else {
      out << "All";
    }
    out << ',' << r.head_count << ',' << r.proportion << ',';
    if (r.auroc) {
      out << *r.auroc;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  out.precision(old_precision);
}

void write_k_sweep_json(std::span<const KSweepRow> rows, std::ostream& out) {
  json doc = json::array();
  for (const auto& r : rows) {
    doc.push_back({{"k", r.k ? json(*r.k) : json("All")},
                   {"head_count", r.head_count},
                   {"proportion", r.proportion},
                   {"auroc", optional_json(r.auroc)}});
  }
  out << doc.dump(2) << '\n';
}

void write_length_ablation_csv(std::span<const LengthAblationRow> rows, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "multiplier,data_length,seq_len,mean_focus_normal,mean_focus_attack\n";
  for (const auto& r : rows) {
    out << r.multiplier << ',' << r.data_length << ',' << r.seq_len << ','
        << r.mean_focus_normal << ',' << r.mean_focus_attack << '\n';
  }
  out.precision(old_precision);
}

void write_length_ablation_json(std::span<const LengthAblationRow> rows, std::ostream& out) {
  json doc = json::array();
  for (const auto& r : rows) {
    doc.push_back({{"multiplier", r.multiplier},
                   {"data_length", r.data_length},
                   {"seq_len", r.seq_len},
                   {"mean_focus_normal", r.mean_focus_normal},
                   {"mean_focus_attack", r.mean_focus_attack}});
  }
  out << doc.dump(2) << '\n';
}

}  // namespace attntrack
