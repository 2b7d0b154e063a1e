#include "attntrack/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "attntrack/calibration.hpp"
#include "attntrack/detector.hpp"
#include "attntrack/error.hpp"
#include "attntrack/eval.hpp"
#include "attntrack/heads.hpp"
#include "attntrack/synthetic.hpp"
#include "attntrack/trace_io.hpp"

namespace attntrack {

namespace {

namespace fs = std::filesystem;

struct SyntheticFlags {
  int layers = 8;
  int heads = 8;
  std::size_t seq_len = 64;
  std::vector<std::size_t> instruction_span{4, 16};
  std::vector<std::size_t> data_span{20, 60};
  std::vector<std::string> planted;
  std::size_t num_planted = 5;
  double base_mass = 0.8;
  double background_mass = 0.3;
  double strength = 0.6;
  double noise = 0.02;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";
};

struct RunConfig {
  bool verbose = false;
  bool strict = false;

  SyntheticFlags synthetic;
  std::string out_path;
  std::size_t n_normal = 30;
  std::size_t n_attack = 30;

  std::string corpus;
  std::string normal_dir;
  std::string attack_dir;
  double k = kDefaultK;
  std::string mean_diff_path;
  std::string scores_path;

  std::vector<std::string> trace_paths;
  std::string heads_path;
  std::optional<double> threshold;
  std::optional<double> quantile;
  std::string calibration_corpus;

  std::string report_path;
  std::string csv_path;
  bool k_sweep = false;
  std::string fit_corpus;
  std::vector<double> k_values{std::begin(kDefaultSweepKValues), std::end(kDefaultSweepKValues)};
  bool length_ablation = false;
  std::vector<double> multipliers{1, 2, 4, 8};
  std::size_t n_per_label = 50;

  std::string corpus_file;
  std::uint64_t calibration_seed = 0;

  ValidationOptions validation() const {
    return strict ? ValidationOptions::strict() : ValidationOptions{};
  }
};

// Raised for usage problems detected after parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

HeadId parse_head(const std::string& text) {
  const auto sep = text.find_first_of(":,");
  if (sep == std::string::npos) throw UsageError("head '" + text + "' must be LAYER:HEAD");
  try {
    return {std::stoi(text.substr(0, sep)), std::stoi(text.substr(sep + 1))};
  } catch (const std::exception&) {
    throw UsageError("head '" + text + "' must be LAYER:HEAD");
  }
}

SyntheticConfig to_config(const SyntheticFlags& f) {
  SyntheticConfig c;
  c.num_layers = f.layers;
  c.num_heads = f.heads;
  c.seq_len = f.seq_len;
  c.instruction_span = {f.instruction_span.at(0), f.instruction_span.at(1)};
  c.data_span = {f.data_span.at(0), f.data_span.at(1)};
  c.base_instruction_mass = f.base_mass;
  c.background_instruction_mass = f.background_mass;
  c.distraction_strength = f.strength;
  c.noise_scale = f.noise;
  c.seed = f.seed;
  c.model_id = f.model_id;
  if (!f.planted.empty()) {
    for (const auto& p : f.planted) c.planted_heads.push_back(parse_head(p));
  } else if (f.layers > 0 && f.heads > 0) {
    c.planted_heads = random_planted_heads(f.layers, f.heads, f.num_planted, f.seed);
  }
  c.validate();
  return c;
}

void add_synthetic_flags(CLI::App* cmd, SyntheticFlags& f) {
  cmd->add_option("--num-layers", f.layers, "Number of layers")->capture_default_str();
  cmd->add_option("--num-heads", f.heads, "Heads per layer")->capture_default_str();
  cmd->add_option("--seq-len", f.seq_len, "Prompt length in tokens")->capture_default_str();
  cmd->add_option("--instruction-span", f.instruction_span, "Instruction tokens START END")
      ->expected(2)
      ->capture_default_str();
  cmd->add_option("--data-span", f.data_span, "Data tokens START END")
      ->expected(2)
      ->capture_default_str();
  auto* planted = cmd->add_option("--planted", f.planted, "Planted heads as LAYER:HEAD");
  auto* num = cmd->add_option("--num-planted", f.num_planted,
                              "Number of planted heads drawn from the seed")
                  ->capture_default_str();
  planted->excludes(num);
  cmd->add_option("--base-mass", f.base_mass, "Planted-head instruction mass (normal)")
      ->capture_default_str();
  cmd->add_option("--background-mass", f.background_mass, "Instruction mass of other heads")
      ->capture_default_str();
  cmd->add_option("--strength", f.strength, "Distraction strength in [0, 1]")
      ->capture_default_str();
  cmd->add_option("--noise", f.noise, "Noise standard deviation")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Generator seed")->capture_default_str();
  cmd->add_option("--model-id", f.model_id, "Model id written to traces")->capture_default_str();
}

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::string file_name(std::size_t index, Label label) {
  std::ostringstream name;
  name << to_string(label) << '_' << std::setw(5) << std::setfill('0') << index << kTraceExtension;
  return name.str();
}

struct LoadedCorpus {
  std::vector<AttentionTrace> traces;
  std::vector<std::string> ids;
};

// Loads a directory or manifest, or a single .atrc file.
LoadedCorpus load_collection(const std::string& location, const RunConfig& cfg,
                             std::ostream& err) {
  LoadedCorpus corpus;
  const fs::path path(location);
  if (fs::is_regular_file(path) && path.extension() == kTraceExtension) {
    corpus.traces.push_back(read_trace_file(path, cfg.validation()));
    corpus.ids.push_back(path.filename().string());
    return corpus;
  }
  const ScanResult scan = scan_collection(path, cfg.validation());
  for (const auto& w : scan.warnings) {
    err << "warning: skipping " << w.path.string() << ": " << w.message << '\n';
  }
  corpus.traces = load_traces(scan.traces, cfg.validation());
  for (const auto& ref : scan.traces) corpus.ids.push_back(ref.path.filename().string());
  if (cfg.verbose) err << "loaded " << corpus.traces.size() << " traces from " << location << '\n';
  return corpus;
}

std::vector<AttentionTrace> with_label(std::vector<AttentionTrace> traces, Label keep) {
  std::erase_if(traces, [&](const AttentionTrace& t) {
    return t.label() != keep && t.label() != Label::unlabeled;
  });
  return traces;
}

std::vector<AttentionTrace> only_label(const std::vector<AttentionTrace>& traces, Label keep) {
  std::vector<AttentionTrace> out;
  for (const auto& t : traces) {
    if (t.label() == keep) out.push_back(t);
  }
  return out;
}

int cmd_gen_synthetic(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.out_path.empty()) {
    throw UsageError(std::string("--out is required (or set ") + kDataDirEnv + ")");
  }
  const SyntheticConfig config = to_config(cfg.synthetic);
  const fs::path dir(cfg.out_path);
  fs::create_directories(dir);
  std::size_t bytes = 0;
  for (const Label label : {Label::normal, Label::attack}) {
    const std::size_t n = label == Label::normal ? cfg.n_normal : cfg.n_attack;
    for (std::size_t i = 0; i < n; ++i) {
      bytes += write_trace_file(generate_trace(config, label, i), dir / file_name(i, label));
    }
  }
  HeadSet planted;
  planted.heads = config.planted_heads;
  std::sort(planted.heads.begin(), planted.heads.end());
  planted.k = std::nan("");
  planted.model_id = config.model_id;
  planted.num_layers = config.num_layers;
  planted.num_heads = config.num_heads;
  planted.metadata["selection"] = "planted";
  write_head_set_file(planted, (dir / "planted_heads.json").string());
  out << "wrote " << cfg.n_normal << " normal and " << cfg.n_attack << " attack traces ("
      << bytes << " bytes) to " << dir.string() << '\n';
  if (cfg.verbose) err << "planted heads: " << planted.size() << '\n';
  return kExitOk;
}

int cmd_find_heads(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<AttentionTrace> normal;
  std::vector<AttentionTrace> attack;
  if (!cfg.corpus.empty()) {
    const auto corpus = load_collection(cfg.corpus, cfg, err);
    normal = only_label(corpus.traces, Label::normal);
    attack = only_label(corpus.traces, Label::attack);
  } else if (!cfg.normal_dir.empty() && !cfg.attack_dir.empty()) {
    normal = with_label(load_collection(cfg.normal_dir, cfg, err).traces, Label::normal);
    attack = with_label(load_collection(cfg.attack_dir, cfg, err).traces, Label::attack);
  } else {
    throw UsageError("find-heads needs --corpus or both --normal and --attack");
  }
  const ScoreDistributions dists = collect_distributions(normal, attack);
  HeadSet set = select_important_heads(dists, cfg.k);
  write_head_set_file(set, cfg.out_path);
  if (!cfg.mean_diff_path.empty()) {
    auto f = open_output(cfg.mean_diff_path);
    write_head_matrix(head_mean_difference(dists), f);
  }
  if (!cfg.scores_path.empty()) {
    auto f = open_output(cfg.scores_path);
    write_head_matrix(candidate_scores(dists, cfg.k), f);
  }
  if (set.empty()) {
    err << "warning: no important heads at k=" << cfg.k << "; refit with a smaller k\n";
  }
  out << "selected " << set.size() << " of " << dists.normal.size() << " heads at k=" << cfg.k
      << " from " << dists.n_normal << " normal and " << dists.n_attack << " attack traces\n";
  return kExitOk;
}

int cmd_detect(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const HeadSet set = read_head_set_file(cfg.heads_path);
  double threshold = 0.0;
  if (cfg.threshold) {
    threshold = *cfg.threshold;
  } else if (!cfg.calibration_corpus.empty()) {
    const auto calib = with_label(load_collection(cfg.calibration_corpus, cfg, err).traces,
                                  Label::normal);
    std::vector<double> scores;
    for (const auto& t : calib) scores.push_back(focus_score(t, set));
    threshold = calibrate_threshold(scores, cfg.quantile.value_or(kDefaultQuantile));
    if (cfg.verbose) err << "calibrated threshold " << threshold << '\n';
  } else {
    throw UsageError("detect needs --threshold or --calibration-corpus");
  }

  std::vector<DetectionResult> results;
  for (const auto& path : cfg.trace_paths) {
    const auto corpus = load_collection(path, cfg, err);
    for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
      results.push_back(detect(corpus.traces[i], set, threshold, corpus.ids[i]));
    }
  }
  std::ofstream file;
  std::ostream* sink = &out;
  if (!cfg.out_path.empty()) {
    file = open_output(cfg.out_path);
    sink = &file;
  }
  *sink << "trace\tfocus_score\tthreshold\tdecision\n";
  bool any_rejected = false;
  for (const auto& r : results) {
    write_detection_record(r, *sink);
    any_rejected = any_rejected || r.rejected;
  }
  return any_rejected ? kExitRejected : kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::ofstream report_file;
  std::ostream* report = &out;
  if (!cfg.report_path.empty()) {
    report_file = open_output(cfg.report_path);
    report = &report_file;
  }

  if (cfg.length_ablation) {
    const SyntheticConfig config = to_config(cfg.synthetic);
    HeadSet heads;
    if (!cfg.heads_path.empty()) heads = read_head_set_file(cfg.heads_path);
    const auto rows = length_ablation(config, cfg.multipliers, cfg.n_per_label, heads);
    write_length_ablation_json(rows, *report);
    if (!cfg.csv_path.empty()) {
      auto f = open_output(cfg.csv_path);
      write_length_ablation_csv(rows, f);
    }
    return kExitOk;
  }

  if (cfg.corpus.empty()) {
    throw UsageError(std::string("--corpus is required (or set ") + kDataDirEnv + ")");
  }
  const auto corpus = load_collection(cfg.corpus, cfg, err);

  if (cfg.k_sweep) {
    if (cfg.fit_corpus.empty()) throw UsageError("--k-sweep needs --fit-corpus");
    const auto fit = load_collection(cfg.fit_corpus, cfg, err);
    const auto rows = k_sweep(fit.traces, corpus.traces, cfg.k_values);
    write_k_sweep_json(rows, *report);
    if (!cfg.csv_path.empty()) {
      auto f = open_output(cfg.csv_path);
      write_k_sweep_csv(rows, f);
    }
    return kExitOk;
  }

  if (cfg.heads_path.empty()) throw UsageError("evaluate needs --heads");
  const HeadSet set = read_head_set_file(cfg.heads_path);
  const EvalReport r = evaluate(corpus.traces, set, corpus.ids);
  write_report_json(r, *report);
  if (!cfg.csv_path.empty()) {
    auto f = open_output(cfg.csv_path);
    write_report_csv(r, f);
  }
  if (!cfg.report_path.empty()) {
    out << "AUROC " << std::setprecision(6) << r.auroc << " over " << r.n_normal << " normal and "
        << r.n_attack << " attack traces\n";
  }
  return kExitOk;
}

int cmd_build_calibration(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  CalibrationSet set;
  if (cfg.corpus_file.empty()) {
    set = build_calibration_set(cfg.calibration_seed);
  } else {
    set = build_calibration_set(read_corpus_file(cfg.corpus_file), cfg.calibration_seed);
  }
  auto f = open_output(cfg.out_path);
  write_calibration_set(set, f);
  out << "wrote " << set.pair_count() << " calibration pairs to " << cfg.out_path << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-based prompt injection detection toolkit", "attntrack"};
  app.set_config("--config", "", "TOML/INI configuration file; command-line flags win");
  app.require_subcommand(1);

  RunConfig cfg;
  app.add_flag("-v,--verbose", cfg.verbose, "Progress messages on stderr");
  app.add_flag("--strict", cfg.strict, "Validate row sums at 1e-6 instead of 1e-2");

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic .atrc corpus");
  add_synthetic_flags(gen, cfg.synthetic);
  gen->add_option("-o,--out", cfg.out_path, "Output directory")->envname(kDataDirEnv);
  gen->add_option("--n-normal", cfg.n_normal, "Normal traces")->capture_default_str();
  gen->add_option("--n-attack", cfg.n_attack, "Attack traces")->capture_default_str();

  auto* find = app.add_subcommand("find-heads", "Select important heads from a labeled corpus");
  auto* corpus_opt = find->add_option("--corpus", cfg.corpus, "Labeled corpus (dir or manifest)");
  auto* normal_opt = find->add_option("--normal", cfg.normal_dir, "Normal traces");
  auto* attack_opt = find->add_option("--attack", cfg.attack_dir, "Attack traces");
  corpus_opt->excludes(normal_opt)->excludes(attack_opt);
  normal_opt->needs(attack_opt);
  attack_opt->needs(normal_opt);
  find->add_option("-k,--k", cfg.k, "Standard-deviation shift")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  find->add_option("-o,--out", cfg.out_path, "Head set output file")->required();
  find->add_option("--mean-diff", cfg.mean_diff_path, "Per-head mean difference CSV");
  find->add_option("--scores", cfg.scores_path, "Per-head candidate score CSV");

  auto* det = app.add_subcommand("detect", "Accept or reject traces");
  det->add_option("traces", cfg.trace_paths, "Trace files or collections")->required();
  det->add_option("--heads", cfg.heads_path, "Head set file")->required();
  auto* thr = det->add_option("--threshold", cfg.threshold, "Reject when focus score < threshold");
  auto* q = det->add_option("--quantile", cfg.quantile, "Calibration quantile")
                ->check(CLI::Range(0.0, 1.0));
  auto* calib =
      det->add_option("--calibration-corpus", cfg.calibration_corpus, "Normal traces for calibration");
  thr->excludes(q)->excludes(calib);
  q->needs(calib);
  det->add_option("-o,--out", cfg.out_path, "Write records here instead of stdout");

  auto* ev = app.add_subcommand("evaluate", "AUROC report, k sweep or length ablation");
  ev->add_option("--corpus", cfg.corpus, "Labeled evaluation corpus")->envname(kDataDirEnv);
  ev->add_option("--heads", cfg.heads_path, "Head set file");
  ev->add_option("--report", cfg.report_path, "JSON report (stdout when omitted)");
  ev->add_option("--csv", cfg.csv_path, "Delimiter-separated table");
  auto* sweep = ev->add_flag("--k-sweep", cfg.k_sweep, "Fit and evaluate over several k");
  ev->add_option("--fit-corpus", cfg.fit_corpus, "Corpus used to fit heads in the sweep");
  ev->add_option("--k-values", cfg.k_values, "k values of the sweep")->capture_default_str();
  auto* ablation =
      ev->add_flag("--length-ablation", cfg.length_ablation, "Synthetic data-length ablation");
  sweep->excludes(ablation);
  ev->add_option("--multipliers", cfg.multipliers, "Data length multipliers")
      ->capture_default_str();
  ev->add_option("--n-per-label", cfg.n_per_label, "Traces per label and length")
      ->capture_default_str();
  add_synthetic_flags(ev, cfg.synthetic);

  auto* cal = app.add_subcommand("build-calibration", "Write the paired calibration text set");
  cal->add_option("--corpus-file", cfg.corpus_file, "One sentence per line")
      ->check(CLI::ExistingFile);
  cal->add_option("--seed", cfg.calibration_seed, "Random word seed")->capture_default_str();
  cal->add_option("-o,--out", cfg.out_path, "JSON Lines output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(cfg, out, err);
    if (find->parsed()) return cmd_find_heads(cfg, out, err);
    if (det->parsed()) return cmd_detect(cfg, out, err);
    if (ev->parsed()) return cmd_evaluate(cfg, out, err);
    if (cal->parsed()) return cmd_build_calibration(cfg, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(args.size()), argv.data(), out, err);
}

}  // namespace attntrack
