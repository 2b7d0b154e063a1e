#include "attntrack/trace_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>

#include "attntrack/error.hpp"
#include "json.hpp"

namespace attntrack {

namespace {

using nlohmann::json;

// Guards against allocating absurd buffers on corrupted length fields.
constexpr std::uint32_t kMaxHeaderBytes = 64u << 20;

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

json span_json(const Span& s) { return json::array({s.start, s.end}); }

Span parse_span(const json& header, const char* key) {
  const auto& v = header.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() ||
      !v[1].is_number_unsigned()) {
    throw FormatError(std::string("header field '") + key + "' must be [start, end]");
  }
  return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

template <typename T>
T required(const json& header, const char* key) {
  if (!header.contains(key)) throw FormatError(std::string("header missing '") + key + "'");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("header field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string encode_trace_header(const AttentionTrace& trace) {
  json header = {
      {"format_version", kTraceFormatVersion},
      {"model_id", trace.model_id()},
      {"num_layers", trace.num_layers()},
      {"num_heads", trace.num_heads()},
      {"seq_len", trace.seq_len()},
      {"instruction_span", span_json(trace.instruction_span())},
      {"data_span", span_json(trace.data_span())},
      {"label", std::string(to_string(trace.label()))},
  };
  if (!trace.tokens().empty()) header["tokens"] = trace.tokens();
  if (!trace.metadata().empty()) header["metadata"] = trace.metadata();
  return header.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string encode_trace(const AttentionTrace& trace) {
  const std::string header = encode_trace_header(trace);
  const auto values = trace.values();
  std::string out;
  out.reserve(kTraceMagic.size() + 4 + header.size() + values.size() * 4);
  out.append(kTraceMagic);
  append_u32le(out, static_cast<std::uint32_t>(header.size()));
  out.append(header);
  for (float v : values) append_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::size_t write_trace(const AttentionTrace& trace, std::ostream& sink) {
  const std::string bytes = encode_trace(trace);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  sink.flush();
  if (!sink) throw IoError("failed to write trace");
  return bytes.size();
}

std::size_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return write_trace(trace, out);
}

AttentionTrace decode_trace(std::string_view bytes, ValidationOptions options) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t prefix = kTraceMagic.size() + 4;
  if (bytes.size() < kTraceMagic.size() || bytes.substr(0, kTraceMagic.size()) != kTraceMagic) {
    throw FormatError("bad magic; not an ATRC1 trace");
  }
  if (bytes.size() < prefix) throw LengthError("truncated header length field");
  const std::uint32_t header_len = load_u32le(p + kTraceMagic.size());
  if (header_len > kMaxHeaderBytes) throw FormatError("implausible header length");
  if (bytes.size() < prefix + header_len) throw LengthError("truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(prefix, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("unparsable header: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("header is not an object");
  if (required<int>(header, "format_version") != kTraceFormatVersion) {
    throw FormatError("unsupported format_version");
  }

  TraceShape shape{required<int>(header, "num_layers"), required<int>(header, "num_heads"),
                   required<std::size_t>(header, "seq_len")};
  if (shape.num_layers <= 0 || shape.num_heads <= 0 || shape.seq_len == 0) {
    throw ValidationError("positive dimensions", "header dimensions must be positive");
  }
  Label label = Label::unlabeled;
  try {
    label = parse_label(required<std::string>(header, "label"));
  } catch (const DomainError& e) {
    throw FormatError(e.what());
  }
  std::vector<std::string> tokens;
  if (header.contains("tokens")) tokens = required<std::vector<std::string>>(header, "tokens");
  std::map<std::string, std::string> metadata;
  if (header.contains("metadata")) {
    metadata = required<std::map<std::string, std::string>>(header, "metadata");
  }

  const std::size_t payload_offset = prefix + header_len;
  const std::size_t count = shape.element_count();
  const std::size_t available = bytes.size() - payload_offset;
  if (available < count * 4) {
    throw LengthError("payload has " + std::to_string(available) + " bytes, expected " +
                      std::to_string(count * 4));
  }
  if (available > count * 4) throw FormatError("trailing bytes after payload");

  std::vector<float> attn(count);
  for (std::size_t i = 0; i < count; ++i) {
    attn[i] = std::bit_cast<float>(load_u32le(p + payload_offset + 4 * i));
  }
  return AttentionTrace(required<std::string>(header, "model_id"), shape, std::move(attn),
                        parse_span(header, "instruction_span"), parse_span(header, "data_span"),
                        label, std::move(tokens), std::move(metadata), options);
}

AttentionTrace read_trace(std::istream& source, ValidationOptions options) {
  std::string bytes{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
  if (source.bad()) throw IoError("failed to read trace stream");
  return decode_trace(bytes, options);
}

AttentionTrace read_trace_file(const std::filesystem::path& path, ValidationOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_trace(in, options);
}

namespace {

struct Entry {
  std::filesystem::path path;
  std::optional<Label> manifest_label;
};

std::vector<Entry> manifest_entries(const std::filesystem::path& manifest,
                                    std::vector<ScanWarning>& warnings) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const auto base = manifest.parent_path();
  std::vector<Entry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    Entry entry;
    const auto tab = line.find('\t');
    entry.path = base / line.substr(0, tab);
    if (tab != std::string::npos) {
      try {
        entry.manifest_label = parse_label(line.substr(tab + 1));
      } catch (const DomainError& e) {
        warnings.push_back({entry.path, e.what()});
        continue;
      }
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace

ScanResult scan_collection(const std::filesystem::path& location, ValidationOptions options) {
  namespace fs = std::filesystem;
  if (!fs::exists(location)) throw IoError("'" + location.string() + "' does not exist");

  ScanResult result;
  std::vector<Entry> entries;
  if (fs::is_directory(location)) {
    for (const auto& item : fs::directory_iterator(location)) {
      if (item.is_regular_file() && item.path().extension() == kTraceExtension) {
        entries.push_back({item.path(), std::nullopt});
      }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.path.filename().string() < b.path.filename().string();
    });
  } else {
    entries = manifest_entries(location, result.warnings);
  }

  for (auto& entry : entries) {
    try {
      const AttentionTrace trace = read_trace_file(entry.path, options);
      Label label = trace.label();
      if (label == Label::unlabeled && entry.manifest_label) label = *entry.manifest_label;
      result.traces.push_back({entry.path, label, trace.shape(), trace.model_id()});
    } catch (const Error& e) {
      result.warnings.push_back({entry.path, e.what()});
    }
  }
  return result;
}

std::vector<AttentionTrace> load_traces(const std::vector<TraceRef>& refs,
                                        ValidationOptions options) {
  std::vector<AttentionTrace> traces;
  traces.reserve(refs.size());
  for (const auto& ref : refs) {
    AttentionTrace trace = read_trace_file(ref.path, options);
    if (trace.label() != ref.label) trace = trace.with_label(ref.label);
    traces.push_back(std::move(trace));
  }
  return traces;
}

}  // namespace attntrack
