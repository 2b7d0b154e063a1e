#include "attntrack/calibration.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include "attntrack/error.hpp"
#include "attntrack/random.hpp"
#include "json.hpp"

namespace attntrack {

namespace {

constexpr std::uint64_t kWordStream = 11;

constexpr std::array<std::string_view, 30> kCorpus = {
    "The morning train was late because of heavy fog along the coast.",
    "My grandmother keeps a jar of buttons on the kitchen windowsill.",
    "A small red kite drifted over the park and caught in an oak tree.",
    "The library extended its opening hours during the exam season.",
    "Fresh bread from the corner bakery sells out before nine o'clock.",
    "He repaired the old bicycle with parts he found in the garage.",
    "The river froze early this year, and children skated near the bridge.",
    "Our team finished the puzzle just as the lights went out.",
    "She planted tomatoes, basil and peppers in the raised garden bed.",
    "The museum opened a new wing dedicated to ancient navigation tools.",
    "A gentle rain began to fall while we waited for the bus.",
    "The chef tasted the soup and added a pinch of smoked salt.",
    "Two cats watched the pigeons from the balcony all afternoon.",
    "The concert hall was quiet until the first violin began to play.",
    "He wrote a letter to his pen pal describing the mountain village.",
    "The hiking trail climbs steeply before opening onto a wide meadow.",
    "Our neighbor built a wooden bench for the shared courtyard.",
    "The lighthouse keeper logged every passing ship in a leather notebook.",
    "A bright comet was visible low on the horizon just after sunset.",
    "The students measured the height of the school flagpole with shadows.",
    "She found an old map folded inside a secondhand novel.",
    "The farmer's market had more varieties of apples than ever before.",
    "Snow covered the rooftops, and the streets were unusually silent.",
    "The orchestra rehearsed the final movement three more times.",
    "A fox crossed the road and disappeared into the tall grass.",
    "The new bridge shortened the commute between the two towns.",
    "He keeps a journal of every bird he spots on his morning walks.",
    "The bakery window displayed a cake shaped like a sailing ship.",
    "Our flight was delayed, so we explored the airport bookshop.",
    "The old clock in the town square chimes a little after the hour.",
};

constexpr std::array<std::string_view, 48> kWords = {
    "amber",   "banjo",   "cactus",  "dolphin", "ember",   "falcon",  "glacier", "harbor",
    "igloo",   "jasmine", "kettle",  "lantern", "meadow",  "nutmeg",  "orchid",  "pebble",
    "quartz",  "raven",   "saffron", "tulip",   "umbrella", "velvet", "walnut",  "yodel",
    "zephyr",  "anchor",  "biscuit", "cobalt",  "drizzle", "eclipse", "fjord",   "gizmo",
    "hazel",   "indigo",  "jigsaw",  "koala",   "lemon",   "marble",  "nebula",  "otter",
    "pepper",  "quill",   "ripple",  "sprocket", "thimble", "violet", "willow",  "zucchini",
};

std::string fill_word(std::string_view tmpl, std::string_view word) {
  std::string out(tmpl);
  const auto pos = out.find("{word}");
  if (pos != std::string::npos) out.replace(pos, 6, word);
  return out;
}

}  // namespace

std::string_view to_string(AttackKind kind) noexcept {
  switch (kind) {
    case AttackKind::naive:
      return "naive";
    case AttackKind::escape:
      return "escape";
    case AttackKind::ignore:
      return "ignore";
    case AttackKind::fake_complete:
      return "fake_complete";
    case AttackKind::combined:
      break;
  }
  return "combined";
}

AttackKind parse_attack_kind(std::string_view text) {
  for (auto kind : {AttackKind::naive, AttackKind::escape, AttackKind::ignore,
                    AttackKind::fake_complete, AttackKind::combined}) {
    if (text == to_string(kind)) return kind;
  }
  throw DomainError("unknown attack kind '" + std::string(text) + "'");
}

std::span<const std::string_view> default_corpus() { return kCorpus; }
std::span<const std::string_view> default_words() { return kWords; }

TextExample apply_attack(const TextExample& normal, AttackKind kind,
                         std::string_view injected_instruction,
                         std::optional<std::string_view> fake_answer) {
  if (normal.label != Label::normal) throw DomainError("attacks apply to normal examples");
  if (injected_instruction.empty()) throw DomainError("injected instruction is empty");
  const bool needs_answer = kind == AttackKind::fake_complete || kind == AttackKind::combined;
  if (needs_answer && !fake_answer) {
    throw DomainError(std::string(to_string(kind)) + " attack requires a fake answer");
  }

  std::string data = normal.data;
  const std::string injected(injected_instruction);
  switch (kind) {
    case AttackKind::naive:
      data += " " + injected;
      break;
    case AttackKind::escape:
      data += "\n" + injected;
      break;
    case AttackKind::ignore:
      data += " " + std::string(kIgnorePhrase) + " " + injected;
      break;
    case AttackKind::fake_complete:
      data += " " + std::string(*fake_answer) + " " + injected;
      break;
    case AttackKind::combined:
      data += " " + std::string(*fake_answer) + "\n" + std::string(kIgnorePhrase) + " " + injected;
      break;
  }

  TextExample attack;
  attack.instruction = normal.instruction;
  attack.data = std::move(data);
  attack.label = Label::attack;
  attack.attack_kind = kind;
  attack.injected_instruction = injected;
  return attack;
}

CalibrationSet build_calibration_set(std::span<const std::string> corpus, std::uint64_t seed) {
  if (corpus.empty()) throw DomainError("calibration corpus is empty");
  RandomStream rng(seed, kWordStream, 0);
  auto word = [&] { return kWords[static_cast<std::size_t>(rng.below(kWords.size()))]; };

  CalibrationSet set;
  set.provenance = "seed=" + std::to_string(seed) + "; sentences=" + std::to_string(corpus.size());
  const std::string instruction = fill_word(kInstructionTemplate, word());
  set.examples.reserve(corpus.size() * 2);
  for (const auto& sentence : corpus) {
    TextExample normal{instruction, sentence, Label::normal, std::nullopt, std::nullopt};
    TextExample attack =
        apply_attack(normal, AttackKind::ignore, fill_word(kInjectedTemplate, word()));
    set.examples.push_back(std::move(normal));
    set.examples.push_back(std::move(attack));
  }
  return set;
}

CalibrationSet build_calibration_set(std::uint64_t seed) {
  const std::vector<std::string> corpus(kCorpus.begin(), kCorpus.end());
  CalibrationSet set = build_calibration_set(corpus, seed);
  set.provenance += "; corpus=bundled";
  return set;
}

std::vector<std::string> read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path.string() + "'");
  std::vector<std::string> sentences;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    sentences.push_back(line);
  }
  return sentences;
}

void write_calibration_set(const CalibrationSet& set, std::ostream& out) {
  using nlohmann::json;
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    const auto& ex = set.examples[i];
    json line = {
        {"instruction", ex.instruction},
        {"data", ex.data},
        {"label", std::string(to_string(ex.label))},
        {"attack_kind", ex.attack_kind ? json(std::string(to_string(*ex.attack_kind))) : json()},
        {"injected_instruction",
         ex.injected_instruction ? json(*ex.injected_instruction) : json()},
        {"pair", i / 2},
    };
    out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  if (!out) throw IoError("failed to write calibration set");
}

CalibrationSet read_calibration_set(std::istream& in) {
  using nlohmann::json;
  CalibrationSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json doc = json::parse(line);
      TextExample ex;
      ex.instruction = doc.at("instruction").get<std::string>();
      ex.data = doc.at("data").get<std::string>();
      ex.label = parse_label(doc.at("label").get<std::string>());
      if (doc.contains("attack_kind") && !doc["attack_kind"].is_null()) {
        ex.attack_kind = parse_attack_kind(doc["attack_kind"].get<std::string>());
      }
      if (doc.contains("injected_instruction") && !doc["injected_instruction"].is_null()) {
        ex.injected_instruction = doc["injected_instruction"].get<std::string>();
      }
      const bool is_attack = ex.label == Label::attack;
      if (is_attack != ex.attack_kind.has_value() ||
          is_attack != ex.injected_instruction.has_value()) {
        throw FormatError("attack fields must be present exactly on attack examples");
      }
      const bool expect_attack = set.examples.size() % 2 == 1;
      if (is_attack != expect_attack) throw FormatError("examples must alternate normal, attack");
      if (is_attack && ex.data.rfind(set.examples.back().data, 0) != 0) {
        throw FormatError("attack data does not extend its normal data");
      }
      set.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DomainError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (set.examples.size() % 2 != 0) throw FormatError("unpaired normal example at end of file");
  if (!set.examples.empty()) set.provenance = "file";
  return set;
}

}  // namespace attntrack
