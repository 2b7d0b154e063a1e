#pragma once

// ".atrc" trace files.
//
// Layout (all integers little-endian):
//   bytes 0..4   magic "ATRC1"
//   bytes 5..8   uint32 header length N
//   next N bytes UTF-8 JSON header (compact, keys sorted)
//   remainder    L*H*T IEEE-754 binary32 values, layer-major, head-major,
//                position-minor
//
// See docs/atrc-format.md for the header fields.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "attntrack/trace.hpp"

namespace attntrack {

inline constexpr std::string_view kTraceMagic = "ATRC1";
inline constexpr int kTraceFormatVersion = 1;
inline constexpr std::string_view kTraceExtension = ".atrc";

/// The JSON header document exactly as it is written to disk.
std::string encode_trace_header(const AttentionTrace& trace);

/// Full serialized byte image of a trace.
std::string encode_trace(const AttentionTrace& trace);

/// Writes the trace and returns the number of bytes emitted.
/// Throws IoError when the sink fails.
std::size_t write_trace(const AttentionTrace& trace, std::ostream& sink);
std::size_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path);

/// Throws FormatError (bad magic, bad header), LengthError (truncated
/// payload) or ValidationError (invariant violated).
AttentionTrace read_trace(std::istream& source, ValidationOptions options = {});
AttentionTrace decode_trace(std::string_view bytes, ValidationOptions options = {});
AttentionTrace read_trace_file(const std::filesystem::path& path, ValidationOptions options = {});

struct TraceRef {
  std::filesystem::path path;
  Label label = Label::unlabeled;
  TraceShape shape;
  std::string model_id;
};

struct ScanWarning {
  std::filesystem::path path;
  std::string message;
};

struct ScanResult {
  std::vector<TraceRef> traces;
  std::vector<ScanWarning> warnings;
};

/// Lists a collection.
///
/// `location` is either a directory (every *.atrc directly inside it, sorted
/// by file name) or a manifest file: one relative path per line, optionally
/// followed by a tab and a label; blank lines and lines starting with '#'
/// are ignored. The header label wins; a manifest label is only used for
/// unlabeled traces. Unreadable entries become warnings.
ScanResult scan_collection(const std::filesystem::path& location, ValidationOptions options = {});

/// Loads every trace listed by a scan, in scan order.
std::vector<AttentionTrace> load_traces(const std::vector<TraceRef>& refs,
                                        ValidationOptions options = {});

}  // namespace attntrack
