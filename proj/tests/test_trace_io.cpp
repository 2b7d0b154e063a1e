#include <fstream>
#include <sstream>

#include "attntrack/error.hpp"
#include "attntrack/trace_io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace attntrack;
using attntrack::testing::random_trace;
using attntrack::testing::temp_dir;
using attntrack::testing::trace_from_rows;

namespace {

std::uint32_t header_length(const std::string& bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[5 + i])) << (8 * i);
  return v;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

}  // namespace

TEST_CASE("file layout") {
  const auto trace = trace_from_rows(1, 1, {{0.25f, 0.75f}}, {0, 1}, {1, 2});
  std::ostringstream sink;
  const std::size_t n = write_trace(trace, sink);
  const std::string bytes = sink.str();
  CHECK(n == bytes.size());
  CHECK(bytes.substr(0, 5) == "ATRC1");
  const std::uint32_t hlen = header_length(bytes);
  CHECK(hlen == encode_trace_header(trace).size());
  // L=1, H=1, T=2: exactly 8 payload bytes.
  CHECK(bytes.size() - 9 - hlen == 8);
  // 0.25f little-endian.
  CHECK(static_cast<unsigned char>(bytes[9 + hlen + 3]) == 0x3e);
  CHECK(static_cast<unsigned char>(bytes[9 + hlen + 2]) == 0x80);
}

TEST_CASE("round trip is field-for-field and byte-for-byte") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto trace = random_trace(rng, static_cast<Label>(i % 3), i % 2 == 0);
    const std::string first = encode_trace(trace);
    const auto back = decode_trace(first);
    CHECK(back == trace);
    CHECK(encode_trace(back) == first);
    CHECK(encode_trace(trace) == first);
  }
}

TEST_CASE("reader errors") {
  const auto trace = trace_from_rows(1, 2, {{0.5f, 0.5f}, {1.0f, 0.0f}}, {0, 1}, {1, 2});
  const std::string good = encode_trace(trace);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[4] = '9';
    CHECK_THROWS_AS(decode_trace(bad), FormatError);
    CHECK_THROWS_AS(decode_trace("AT"), FormatError);
  }
  SUBCASE("truncated payload") {
    CHECK_THROWS_AS(decode_trace(good.substr(0, good.size() - 1)), LengthError);
    CHECK_THROWS_AS(decode_trace(good.substr(0, good.size() - 8)), LengthError);
  }
  SUBCASE("truncated header") { CHECK_THROWS_AS(decode_trace(good.substr(0, 12)), LengthError); }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(decode_trace(good + "x"), FormatError); }
  SUBCASE("unparsable header") {
    std::string bad = good;
    bad[9] = '[';
    CHECK_THROWS_AS(decode_trace(bad), FormatError);
  }
  SUBCASE("invariant violation in payload") {
    std::string bad = good;
    // Zero the first value so row 0 sums to 0.5.
    const std::size_t payload = good.size() - 16;
    for (int i = 0; i < 4; ++i) bad[payload + i] = 0;
    try {
      decode_trace(bad);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(e.invariant() == "row sum");
    }
  }
}

TEST_CASE("header fields") {
  std::mt19937_64 rng(1);
  const auto trace = random_trace(rng, Label::attack, true);
  const std::string header = encode_trace_header(trace);
  for (const char* key : {"\"format_version\":1", "\"label\":\"attack\"", "\"instruction_span\"",
                          "\"data_span\"", "\"tokens\"", "\"metadata\"", "\"model_id\""}) {
    CHECK(header.find(key) != std::string::npos);
  }
}

TEST_CASE("file helpers") {
  const auto dir = temp_dir("io_files");
  std::mt19937_64 rng(8);
  const auto trace = random_trace(rng, Label::normal);
  const auto path = dir / "one.atrc";
  const std::size_t n = write_trace_file(trace, path);
  CHECK(std::filesystem::file_size(path) == n);
  CHECK(read_trace_file(path) == trace);
  CHECK_THROWS_AS(read_trace_file(dir / "missing.atrc"), IoError);
}

TEST_CASE("scan: empty directory") {
  const auto dir = temp_dir("scan_empty");
  const auto result = scan_collection(dir);
  CHECK(result.traces.empty());
  CHECK(result.warnings.empty());
}

TEST_CASE("scan: lexicographic order and labels from headers") {
  const auto dir = temp_dir("scan_order");
  std::mt19937_64 rng(4);
  write_trace_file(random_trace(rng, Label::attack), dir / "c.atrc");
  write_trace_file(random_trace(rng, Label::normal), dir / "a.atrc");
  write_trace_file(random_trace(rng, Label::unlabeled), dir / "b.atrc");
  write_bytes(dir / "notes.txt", "ignored");
  const auto result = scan_collection(dir);
  REQUIRE(result.traces.size() == 3);
  CHECK(result.traces[0].path.filename() == "a.atrc");
  CHECK(result.traces[1].path.filename() == "b.atrc");
  CHECK(result.traces[2].path.filename() == "c.atrc");
  CHECK(result.traces[0].label == Label::normal);
  CHECK(result.traces[1].label == Label::unlabeled);
  CHECK(result.traces[2].label == Label::attack);
}

TEST_CASE("scan: invalid files become warnings") {
  const auto dir = temp_dir("scan_mixed");
  std::mt19937_64 rng(5);
  std::vector<std::string> valid;
  for (int i = 0; i < 4; ++i) {
    const std::string name = "ok" + std::to_string(i) + ".atrc";
    write_trace_file(random_trace(rng, Label::normal), dir / name);
    valid.push_back(name);
  }
  const std::string good = encode_trace(random_trace(rng, Label::attack));
  write_bytes(dir / "bad_magic.atrc", "ATRC9" + good.substr(5));
  write_bytes(dir / "truncated.atrc", good.substr(0, good.size() - 3));
  write_bytes(dir / "empty.atrc", "");

  const auto result = scan_collection(dir);
  CHECK(result.traces.size() == valid.size());
  CHECK(result.warnings.size() == 3);
  for (const auto& ref : result.traces) CHECK(ref.path.filename().string().rfind("ok", 0) == 0);
  CHECK(load_traces(result.traces).size() == valid.size());
}

TEST_CASE("scan: manifest") {
  const auto dir = temp_dir("scan_manifest");
  std::mt19937_64 rng(6);
  std::filesystem::create_directories(dir / "sub");
  write_trace_file(random_trace(rng, Label::unlabeled), dir / "sub" / "x.atrc");
  write_trace_file(random_trace(rng, Label::attack), dir / "y.atrc");
  {
    std::ofstream m(dir / "manifest.tsv");
    m << "# comment\n\nsub/x.atrc\tnormal\ny.atrc\tnormal\nmissing.atrc\n";
  }
  const auto result = scan_collection(dir / "manifest.tsv");
  REQUIRE(result.traces.size() == 2);
  // Manifest label fills in for unlabeled traces; header labels win.
  CHECK(result.traces[0].label == Label::normal);
  CHECK(result.traces[1].label == Label::attack);
  CHECK(result.warnings.size() == 1);
  const auto loaded = load_traces(result.traces);
  CHECK(loaded[0].label() == Label::normal);
}

TEST_CASE("scan: missing path") {
  CHECK_THROWS_AS(scan_collection("/nonexistent/attntrack/path"), IoError);
}
