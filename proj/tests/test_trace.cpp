#include "attntrack/error.hpp"
#include "attntrack/trace.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace attntrack;
using attntrack::testing::direct_sum;
using attntrack::testing::random_trace;
using attntrack::testing::trace_from_rows;
using attntrack::testing::uniform_trace;

TEST_CASE("instruction attention: full mass on the instruction") {
  const auto trace = trace_from_rows(1, 1, {{0.5f, 0.5f, 0.0f, 0.0f}}, {0, 2}, {2, 4});
  CHECK(instruction_attention(trace, {0, 0}) == 1.0);
}

TEST_CASE("instruction attention: uniform row") {
  const auto trace = uniform_trace(1, 1, 10, {0, 4}, {4, 10});
  CHECK(instruction_attention(trace, {0, 0}) == doctest::Approx(0.4).epsilon(1e-7));
}

TEST_CASE("instruction attention matches direct summation on a planted synthetic trace") {
  SyntheticConfig config;
  config.num_layers = 2;
  config.num_heads = 3;
  config.planted_heads = {{1, 2}};
  config.base_instruction_mass = 0.85;
  config.noise_scale = 0.0;
  const auto trace = generate_trace(config, Label::normal, 7);
  const double oracle = direct_sum(trace, {1, 2}, trace.instruction_span());
  CHECK(instruction_attention(trace, {1, 2}) == oracle);
  CHECK(oracle == doctest::Approx(0.85).epsilon(1e-6));
}

TEST_CASE("instruction attention errors") {
  const auto trace = uniform_trace(2, 2, 6, {0, 2}, {2, 6});
  CHECK_THROWS_AS(instruction_attention(trace, {2, 0}), IndexError);
  CHECK_THROWS_AS(instruction_attention(trace, {0, -1}), IndexError);
}

TEST_CASE("instruction attention is clamped; raw value is kept for diagnostics") {
  // Row sums to 1.008, inside the default tolerance.
  const auto trace = trace_from_rows(1, 1, {{0.6f, 0.408f, 0.0f}}, {0, 2}, {2, 3});
  CHECK(instruction_attention_raw(trace, {0, 0}) == doctest::Approx(1.008).epsilon(1e-6));
  CHECK(instruction_attention(trace, {0, 0}) <= 1.0 + kRowTolerance);
}

TEST_CASE("layer mean attention") {
  SUBCASE("constant") {
    const auto trace = trace_from_rows(1, 3, {{0.2f, 0.8f}, {0.2f, 0.8f}, {0.2f, 0.8f}}, {0, 1},
                                       {1, 2});
    CHECK(layer_mean_attention(trace, 0, 0) == doctest::Approx(0.2).epsilon(1e-7));
  }
  SUBCASE("two-point mean") {
    const auto trace = trace_from_rows(1, 2, {{0.1f, 0.9f}, {0.3f, 0.7f}}, {0, 1}, {1, 2});
    CHECK(layer_mean_attention(trace, 0, 0) == doctest::Approx(0.2).epsilon(1e-7));
  }
  SUBCASE("matches a loop oracle on random traces") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const auto trace = random_trace(rng);
      for (int l = 0; l < trace.num_layers(); ++l) {
        for (std::size_t i = 0; i < trace.seq_len(); ++i) {
          double sum = 0.0;
          for (int h = 0; h < trace.num_heads(); ++h) {
            sum += trace.values()[(static_cast<std::size_t>(l) * trace.num_heads() + h) *
                                      trace.seq_len() +
                                  i];
          }
          CHECK(std::abs(layer_mean_attention(trace, l, i) - sum / trace.num_heads()) < 1e-12);
        }
      }
    }
  }
  SUBCASE("bounds") {
    const auto trace = uniform_trace(2, 2, 4, {0, 1}, {1, 4});
    CHECK_THROWS_AS(layer_mean_attention(trace, 2, 0), IndexError);
    CHECK_THROWS_AS(layer_mean_attention(trace, 0, 4), IndexError);
  }
}

TEST_CASE("aggregate over all heads") {
  SUBCASE("full mass") {
    std::vector<std::vector<float>> rows(6, {0.25f, 0.75f, 0.0f});
    const auto trace = trace_from_rows(2, 3, rows, {0, 2}, {2, 3});
    CHECK(aggregate_all_heads(trace) == 6.0);
  }
  SUBCASE("uniform") {
    const auto trace = uniform_trace(2, 3, 10, {0, 4}, {4, 10});
    CHECK(aggregate_all_heads(trace) == doctest::Approx(2.4).epsilon(1e-6));
  }
  SUBCASE("attack aggregate below matched normal on 100 seeded pairs") {
    auto config = attntrack::testing::planted_config(5);
    int ordered = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      ordered += aggregate_all_heads(generate_trace(config, Label::attack, i)) <
                 aggregate_all_heads(generate_trace(config, Label::normal, i));
    }
    CHECK(ordered == 100);
  }
}

TEST_CASE("span properties on random traces") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto trace = random_trace(rng);
    const Span instr = trace.instruction_span();
    double aggregate = 0.0;
    for (const HeadId head : all_heads(trace.num_layers(), trace.num_heads())) {
      // Additivity over a partition of the instruction span.
      if (instr.size() >= 2) {
        const std::size_t mid = instr.start + instr.size() / 2;
        const double parts =
            span_attention(trace, head, {instr.start, mid}) + span_attention(trace, head, {mid, instr.end});
        CHECK(std::abs(parts - instruction_attention_raw(trace, head)) < 1e-9);
      }
      // Instruction + data + rest equals the row sum.
      const double row_sum = span_attention(trace, head, {0, trace.seq_len()});
      double rest = 0.0;
      for (std::size_t i = 0; i < trace.seq_len(); ++i) {
        if (!instr.contains(i) && !trace.data_span().contains(i)) rest += trace.row(head)[i];
      }
      CHECK(std::abs(instruction_attention_raw(trace, head) +
                     span_attention(trace, head, trace.data_span()) + rest - row_sum) < 1e-9);
      aggregate += instruction_attention(trace, head);
    }
    CHECK(std::abs(aggregate - aggregate_all_heads(trace)) < 1e-9);
  }
}

TEST_CASE("validation names the failed invariant") {
  auto invariant_of = [](auto&& make) -> std::string {
    try {
      make();
    } catch (const ValidationError& e) {
      return e.invariant();
    }
    return "";
  };
  CHECK(invariant_of([] { trace_from_rows(1, 1, {{0.5f, 0.5f}}, {0, 0}, {1, 2}); }) ==
        "instruction_span bounds");
  CHECK(invariant_of([] { trace_from_rows(1, 1, {{0.5f, 0.5f}}, {0, 1}, {1, 3}); }) ==
        "data_span bounds");
  CHECK(invariant_of([] { trace_from_rows(1, 1, {{0.5f, 0.5f, 0.0f}}, {0, 2}, {1, 3}); }) ==
        "disjoint spans");
  CHECK(invariant_of([] { trace_from_rows(1, 1, {{1.5f, -0.5f}}, {0, 1}, {1, 2}); }) ==
        "non-negative attention");
  CHECK(invariant_of([] { trace_from_rows(1, 1, {{0.5f, 0.4f}}, {0, 1}, {1, 2}); }) == "row sum");
  CHECK(invariant_of([] {
          AttentionTrace("m", {1, 1, 3}, {0.5f, 0.5f}, {0, 1}, {1, 2});
        }) == "tensor size");
}

TEST_CASE("row-sum tolerance: default accepts half-precision drift, strict does not") {
  const auto trace = trace_from_rows(1, 1, {{0.5f, 0.505f}}, {0, 1}, {1, 2});
  CHECK_NOTHROW(trace.validate({}));
  CHECK_THROWS_AS(trace.validate(ValidationOptions::strict()), ValidationError);
}

TEST_CASE("labels round-trip through text") {
  for (auto l : {Label::normal, Label::attack, Label::unlabeled}) CHECK(parse_label(to_string(l)) == l);
  CHECK_THROWS_AS(parse_label("benign"), DomainError);
}
