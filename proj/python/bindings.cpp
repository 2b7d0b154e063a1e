#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "attntrack/calibration.hpp"
#include "attntrack/detector.hpp"
#include "attntrack/error.hpp"
#include "attntrack/eval.hpp"
#include "attntrack/heads.hpp"
#include "attntrack/synthetic.hpp"
#include "attntrack/trace.hpp"
#include "attntrack/trace_io.hpp"

namespace py = pybind11;
using namespace attntrack;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Span to_span(const std::pair<std::size_t, std::size_t>& p) { return {p.first, p.second}; }
std::pair<std::size_t, std::size_t> from_span(const Span& s) { return {s.start, s.end}; }

HeadId to_head(const std::pair<int, int>& p) { return {p.first, p.second}; }

std::vector<std::pair<int, int>> head_pairs(const std::vector<HeadId>& heads) {
  std::vector<std::pair<int, int>> out;
  for (const auto& h : heads) out.emplace_back(h.layer, h.head);
  return out;
}

std::vector<HeadId> head_ids(const std::vector<std::pair<int, int>>& pairs) {
  std::vector<HeadId> out;
  for (const auto& p : pairs) out.push_back(to_head(p));
  return out;
}

AttentionTrace make_trace(FloatArray attn, std::pair<std::size_t, std::size_t> instruction_span,
                          std::pair<std::size_t, std::size_t> data_span, Label label,
                          std::string model_id, std::vector<std::string> tokens,
                          std::map<std::string, std::string> metadata, bool strict) {
  if (attn.ndim() != 3) throw ShapeError("attn must have shape [layers, heads, positions]");
  const TraceShape shape{static_cast<int>(attn.shape(0)), static_cast<int>(attn.shape(1)),
                         static_cast<std::size_t>(attn.shape(2))};
  std::vector<float> values(attn.data(), attn.data() + attn.size());
  return AttentionTrace(std::move(model_id), shape, std::move(values), to_span(instruction_span),
                        to_span(data_span), label, std::move(tokens), std::move(metadata),
                        strict ? ValidationOptions::strict() : ValidationOptions{});
}

py::array_t<double> matrix_array(const HeadMatrix& m) {
  py::array_t<double> out({m.num_layers, m.num_heads});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention-trace prompt injection detection";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<IndexError>(m, "IndexError", error.ptr());
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<LengthError>(m, "LengthError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());

  py::enum_<Label>(m, "Label")
      .value("normal", Label::normal)
      .value("attack", Label::attack)
      .value("unlabeled", Label::unlabeled);

  py::class_<AttentionTrace>(m, "AttentionTrace")
      .def(py::init(&make_trace), py::arg("attn"), py::arg("instruction_span"),
           py::arg("data_span"), py::arg("label") = Label::unlabeled,
           py::arg("model_id") = "", py::arg("tokens") = std::vector<std::string>{},
           py::arg("metadata") = std::map<std::string, std::string>{},
           py::arg("strict") = false)
      .def_property_readonly("model_id", &AttentionTrace::model_id)
      .def_property_readonly("num_layers", &AttentionTrace::num_layers)
      .def_property_readonly("num_heads", &AttentionTrace::num_heads)
      .def_property_readonly("seq_len", &AttentionTrace::seq_len)
      .def_property_readonly("label", &AttentionTrace::label)
      .def_property_readonly("tokens", &AttentionTrace::tokens)
      .def_property_readonly("metadata", &AttentionTrace::metadata)
      .def_property_readonly("instruction_span",
                             [](const AttentionTrace& t) { return from_span(t.instruction_span()); })
      .def_property_readonly("data_span",
                             [](const AttentionTrace& t) { return from_span(t.data_span()); })
      .def_property_readonly("attn",
                             [](const AttentionTrace& t) {
                               py::array_t<float> out(
                                   {t.num_layers(), t.num_heads(), static_cast<int>(t.seq_len())});
                               std::copy(t.values().begin(), t.values().end(), out.mutable_data());
                               return out;
                             })
      .def("__eq__", [](const AttentionTrace& a, const AttentionTrace& b) { return a == b; });

  m.def("instruction_attention",
        [](const AttentionTrace& t, std::pair<int, int> h) {
          return instruction_attention(t, to_head(h));
        });
  m.def("layer_mean_attention", &layer_mean_attention, py::arg("trace"), py::arg("layer"),
        py::arg("token_index"));
  m.def("aggregate_all_heads", &aggregate_all_heads);

  m.def("encode_trace", [](const AttentionTrace& t) { return py::bytes(encode_trace(t)); });
  m.def(
      "decode_trace",
      [](const py::bytes& b, bool strict) {
        return decode_trace(std::string(b),
                            strict ? ValidationOptions::strict() : ValidationOptions{});
      },
      py::arg("data"), py::arg("strict") = false);
  m.def("write_trace", [](const AttentionTrace& t, const std::filesystem::path& p) {
    return write_trace_file(t, p);
  });
  m.def(
      "read_trace",
      [](const std::filesystem::path& p, bool strict) {
        return read_trace_file(p, strict ? ValidationOptions::strict() : ValidationOptions{});
      },
      py::arg("path"), py::arg("strict") = false);
  m.def("load_collection", [](const std::filesystem::path& location) {
    const auto scan = scan_collection(location);
    std::vector<std::pair<std::string, std::string>> warnings;
    for (const auto& w : scan.warnings) warnings.emplace_back(w.path.string(), w.message);
    return py::make_tuple(load_traces(scan.traces), warnings);
  });

  py::class_<SyntheticConfig>(m, "SyntheticConfig")
      .def(py::init<>())
      .def_readwrite("num_layers", &SyntheticConfig::num_layers)
      .def_readwrite("num_heads", &SyntheticConfig::num_heads)
      .def_readwrite("seq_len", &SyntheticConfig::seq_len)
      .def_property(
          "instruction_span", [](const SyntheticConfig& c) { return from_span(c.instruction_span); },
          [](SyntheticConfig& c, std::pair<std::size_t, std::size_t> s) {
            c.instruction_span = to_span(s);
          })
      .def_property(
          "data_span", [](const SyntheticConfig& c) { return from_span(c.data_span); },
          [](SyntheticConfig& c, std::pair<std::size_t, std::size_t> s) { c.data_span = to_span(s); })
      .def_property(
          "planted_heads", [](const SyntheticConfig& c) { return head_pairs(c.planted_heads); },
          [](SyntheticConfig& c, const std::vector<std::pair<int, int>>& h) {
            c.planted_heads = head_ids(h);
          })
      .def_readwrite("base_instruction_mass", &SyntheticConfig::base_instruction_mass)
      .def_readwrite("distraction_strength", &SyntheticConfig::distraction_strength)
      .def_readwrite("background_instruction_mass", &SyntheticConfig::background_instruction_mass)
      .def_readwrite("noise_scale", &SyntheticConfig::noise_scale)
      .def_readwrite("seed", &SyntheticConfig::seed)
      .def_readwrite("model_id", &SyntheticConfig::model_id)
      .def("validate", &SyntheticConfig::validate);

  m.def("random_planted_heads",
        [](int layers, int heads, std::size_t count, std::uint64_t seed) {
          return head_pairs(random_planted_heads(layers, heads, count, seed));
        },
        py::arg("num_layers"), py::arg("num_heads"), py::arg("count"), py::arg("seed"));
  m.def("generate_trace", &generate_trace, py::arg("config"), py::arg("label"), py::arg("index"));
  m.def("generate_corpus", &generate_corpus, py::arg("config"), py::arg("n_normal"),
        py::arg("n_attack"));

  py::class_<HeadSet>(m, "HeadSet")
      .def(py::init<>())
      .def_property(
          "heads", [](const HeadSet& s) { return head_pairs(s.heads); },
          [](HeadSet& s, const std::vector<std::pair<int, int>>& h) { s.heads = head_ids(h); })
      .def_readwrite("k", &HeadSet::k)
      .def_readwrite("model_id", &HeadSet::model_id)
      .def_readwrite("n_normal", &HeadSet::n_normal)
      .def_readwrite("n_attack", &HeadSet::n_attack)
      .def_readwrite("num_layers", &HeadSet::num_layers)
      .def_readwrite("num_heads", &HeadSet::num_heads)
      .def_readwrite("metadata", &HeadSet::metadata)
      .def("proportion", &HeadSet::proportion)
      .def("__len__", &HeadSet::size);

  m.def("candidate_score", [](const std::vector<double>& n, const std::vector<double>& a,
                              double k) { return candidate_score(n, a, k); });

  m.def(
      "select_important_heads",
      [](const std::vector<AttentionTrace>& normal, const std::vector<AttentionTrace>& attack,
         double k) { return select_important_heads(collect_distributions(normal, attack), k); },
      py::arg("normal"), py::arg("attack"), py::arg("k") = kDefaultK);
  m.def("head_mean_difference",
        [](const std::vector<AttentionTrace>& normal, const std::vector<AttentionTrace>& attack) {
          return matrix_array(head_mean_difference(collect_distributions(normal, attack)));
        });
  m.def("instruction_attention_distributions",
        [](const std::vector<AttentionTrace>& normal, const std::vector<AttentionTrace>& attack) {
          const auto d = collect_distributions(normal, attack);
          py::array_t<double> n({d.num_layers, d.num_heads, static_cast<int>(d.n_normal)});
          py::array_t<double> a({d.num_layers, d.num_heads, static_cast<int>(d.n_attack)});
          auto* pn = n.mutable_data();
          auto* pa = a.mutable_data();
          for (const auto& row : d.normal) pn = std::copy(row.begin(), row.end(), pn);
          for (const auto& row : d.attack) pa = std::copy(row.begin(), row.end(), pa);
          return py::make_tuple(n, a);
        });
  m.def("write_head_set",
        [](const HeadSet& s, const std::string& path) { write_head_set_file(s, path); });
  m.def("read_head_set", &read_head_set_file);

  py::class_<DetectionResult>(m, "DetectionResult")
      .def_readonly("trace_id", &DetectionResult::trace_id)
      .def_readonly("focus_score", &DetectionResult::focus_score)
      .def_readonly("threshold", &DetectionResult::threshold)
      .def_readonly("rejected", &DetectionResult::rejected)
      .def_readonly("head_count", &DetectionResult::head_count);

  m.def("focus_score", [](const AttentionTrace& t, const HeadSet& s) { return focus_score(t, s); });
  m.def("detect", &detect, py::arg("trace"), py::arg("head_set"), py::arg("threshold"),
        py::arg("trace_id") = "");
  m.def(
      "calibrate_threshold",
      [](const std::vector<double>& scores, double q) { return calibrate_threshold(scores, q); },
      py::arg("normal_scores"), py::arg("quantile") = kDefaultQuantile);

  m.def("auroc", [](const std::vector<double>& n, const std::vector<double>& a) {
    return auroc(n, a);
  });

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("auroc", &EvalReport::auroc)
      .def_readonly("n_normal", &EvalReport::n_normal)
      .def_readonly("n_attack", &EvalReport::n_attack)
      .def_readonly("head_count", &EvalReport::head_count)
      .def_property_readonly("normal_mean", [](const EvalReport& r) { return r.normal.mean; })
      .def_property_readonly("attack_mean", [](const EvalReport& r) { return r.attack.mean; })
      .def("to_json", [](const EvalReport& r) {
        std::ostringstream out;
        write_report_json(r, out);
        return out.str();
      });
  m.def("evaluate", [](const std::vector<AttentionTrace>& traces, const HeadSet& s) {
    return evaluate(traces, s);
  });

  m.def(
      "k_sweep",
      [](const std::vector<AttentionTrace>& fit, const std::vector<AttentionTrace>& eval,
         const std::vector<double>& ks) {
        py::list rows;
        for (const auto& r : k_sweep(fit, eval, ks)) {
          py::dict row;
          row["k"] = r.k ? py::cast(*r.k) : py::str("All");
          row["head_count"] = r.head_count;
          row["proportion"] = r.proportion;
          row["auroc"] = r.auroc ? py::cast(*r.auroc) : py::none();
          rows.append(row);
        }
        return rows;
      },
      py::arg("fit"), py::arg("eval"),
      py::arg("k_values") = std::vector<double>(std::begin(kDefaultSweepKValues), std::end(kDefaultSweepKValues)));

  m.def(
      "length_ablation",
      [](const SyntheticConfig& c, const std::vector<double>& multipliers, std::size_t n) {
        py::list rows;
        for (const auto& r : length_ablation(c, multipliers, n)) {
          py::dict row;
          row["multiplier"] = r.multiplier;
          row["data_length"] = r.data_length;
          row["seq_len"] = r.seq_len;
          row["mean_focus_normal"] = r.mean_focus_normal;
          row["mean_focus_attack"] = r.mean_focus_attack;
          rows.append(row);
        }
        return rows;
      },
      py::arg("config"), py::arg("multipliers"), py::arg("n_per_label") = 50);

  py::enum_<AttackKind>(m, "AttackKind")
      .value("naive", AttackKind::naive)
      .value("escape", AttackKind::escape)
      .value("ignore", AttackKind::ignore)
      .value("fake_complete", AttackKind::fake_complete)
      .value("combined", AttackKind::combined);

  py::class_<TextExample>(m, "TextExample")
      .def(py::init([](std::string instruction, std::string data) {
             return TextExample{std::move(instruction), std::move(data), Label::normal,
                                std::nullopt, std::nullopt};
           }),
           py::arg("instruction"), py::arg("data"))
      .def_readonly("instruction", &TextExample::instruction)
      .def_readonly("data", &TextExample::data)
      .def_readonly("label", &TextExample::label)
      .def_readonly("attack_kind", &TextExample::attack_kind)
      .def_readonly("injected_instruction", &TextExample::injected_instruction);

  m.def(
      "apply_attack",
      [](const TextExample& ex, AttackKind kind, const std::string& injected,
         std::optional<std::string> fake_answer) {
        std::optional<std::string_view> answer;
        if (fake_answer) answer = *fake_answer;
        return apply_attack(ex, kind, injected, answer);
      },
      py::arg("example"), py::arg("kind"), py::arg("injected_instruction"),
      py::arg("fake_answer") = py::none());
  m.def(
      "build_calibration_set",
      [](std::optional<std::vector<std::string>> corpus, std::uint64_t seed) {
        return corpus ? build_calibration_set(*corpus, seed).examples
                      : build_calibration_set(seed).examples;
      },
      py::arg("corpus") = py::none(), py::arg("seed") = 0);

  m.attr("IGNORE_PHRASE") = std::string(kIgnorePhrase);
  m.attr("FIXED_INSTRUCTION") = std::string(kFixedInstruction);
  m.attr("DEFAULT_K") = kDefaultK;
}
