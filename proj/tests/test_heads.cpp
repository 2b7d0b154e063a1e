#include <cmath>
#include <limits>
#include <sstream>

#include "attntrack/error.hpp"
#include "attntrack/heads.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace attntrack;
using attntrack::testing::planted_config;
using attntrack::testing::random_trace;
using attntrack::testing::uniform_trace;

namespace {

std::pair<std::vector<AttentionTrace>, std::vector<AttentionTrace>> split(
    const std::vector<AttentionTrace>& corpus) {
  std::vector<AttentionTrace> n;
  std::vector<AttentionTrace> a;
  for (const auto& t : corpus) (t.label() == Label::normal ? n : a).push_back(t);
  return {n, a};
}

double ulp_distance(double a, double b) {
  return std::abs(a - b) / std::numeric_limits<double>::epsilon() / std::abs(b);
}

}  // namespace

TEST_CASE("candidate score arithmetic") {
  const std::vector<double> n{0.8, 0.9};
  const std::vector<double> a{0.1, 0.2};
  // (0.85 - 4*0.05) - (0.15 + 4*0.05) = 0.30, up to binary64 rounding.
  CHECK(ulp_distance(candidate_score(n, a, 4.0), 0.30) <= 2.0);
  CHECK(ulp_distance(candidate_score(n, a, 0.0), 0.70) <= 2.0);
  const std::vector<double> same{0.5, 0.7};
  CHECK(ulp_distance(candidate_score(same, same, 1.0), -0.2) <= 2.0);
  // Singleton lists have zero spread.
  CHECK(candidate_score(std::vector<double>{0.6}, std::vector<double>{0.1}, 10.0) ==
        doctest::Approx(0.5));
}

TEST_CASE("candidate score errors") {
  const std::vector<double> empty;
  const std::vector<double> one{0.5};
  CHECK_THROWS_AS(candidate_score(empty, one, 1.0), DomainError);
  CHECK_THROWS_AS(candidate_score(one, empty, 1.0), DomainError);
  CHECK_THROWS_AS(candidate_score(one, one, -1.0), DomainError);
}

TEST_CASE("population standard deviation") {
  CHECK(population_stddev(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9}) == 2.0);
  CHECK(population_stddev(std::vector<double>{3.0}) == 0.0);
}

TEST_CASE("collect distributions") {
  std::mt19937_64 rng(17);
  auto c = planted_config(17);
  const auto corpus = generate_corpus(c, 3, 2);
  const auto [normal, attack] = split(corpus);
  const auto d = collect_distributions(normal, attack);
  CHECK(d.n_normal == 3);
  CHECK(d.n_attack == 2);
  for (const HeadId h : all_heads(8, 8)) {
    REQUIRE(d.normal_scores(h).size() == 3);
    REQUIRE(d.attack_scores(h).size() == 2);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(d.normal_scores(h)[i] -
                     attntrack::testing::direct_sum(normal[i], h, normal[i].instruction_span())) <
            1e-12);
    }
  }

  SUBCASE("single pair") {
    const std::vector<AttentionTrace> one_n{normal[0]};
    const std::vector<AttentionTrace> one_a{attack[0]};
    const auto single = collect_distributions(one_n, one_a);
    CHECK(single.normal_scores({0, 0}).size() == 1);
    CHECK(single.attack_scores({7, 7}).size() == 1);
  }
  SUBCASE("shape mismatch") {
    const std::vector<AttentionTrace> other{uniform_trace(2, 2, 10, {0, 2}, {2, 10})};
    CHECK_THROWS_AS(collect_distributions(normal, other), ShapeError);
  }
  SUBCASE("empty corpus") {
    CHECK_THROWS_AS(collect_distributions({}, attack), DomainError);
    CHECK_THROWS_AS(collect_distributions(normal, {}), DomainError);
  }
}

TEST_CASE("selection on a planted corpus recovers the planted heads") {
  const auto c = planted_config(1);
  const auto [normal, attack] = split(generate_corpus(c, 30, 30));
  const auto d = collect_distributions(normal, attack);
  const auto set = select_important_heads(d, 4.0);
  CHECK(set.heads == c.planted_heads);
  CHECK(set.k == 4.0);
  CHECK(set.n_normal == 30);
  CHECK(set.n_attack == 30);
  CHECK(set.proportion() == doctest::Approx(5.0 / 64.0));
  CHECK(set.metadata.count("warning") == 0);

  const auto diff = head_mean_difference(d);
  std::vector<std::pair<double, HeadId>> ranked;
  for (const HeadId h : all_heads(8, 8)) ranked.push_back({diff.at(h), h});
  std::sort(ranked.begin(), ranked.end(), [](auto& x, auto& y) { return x.first > y.first; });
  std::vector<HeadId> top;
  for (int i = 0; i < 5; ++i) top.push_back(ranked[i].second);
  std::sort(top.begin(), top.end());
  CHECK(top == c.planted_heads);
}

TEST_CASE("identical distributions select nothing") {
  auto c = planted_config(2);
  const auto corpus = generate_corpus(c, 10, 0);
  const auto d = collect_distributions(corpus, corpus);
  for (double k : {0.5, 1.0, 4.0}) {
    const auto set = select_important_heads(d, k);
    CHECK(set.empty());
    CHECK(set.metadata.at("warning") == "no important heads selected");
  }
  for (double v : head_mean_difference(d).values) CHECK(v == 0.0);
}

TEST_CASE("properties over random corpora") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> strength(0.0, 0.9);
  std::uniform_real_distribution<double> noise(0.0, 0.04);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = planted_config(seed);
    c.distraction_strength = strength(rng);
    c.noise_scale = noise(rng);
    const auto [normal, attack] = split(generate_corpus(c, 12, 12));
    const auto d = collect_distributions(normal, attack);

    // Nesting.
    for (double k1 = 0.0; k1 <= 5.0; k1 += 0.5) {
      const auto small = select_important_heads(d, k1).heads;
      const auto large = select_important_heads(d, k1 + 0.5).heads;
      CHECK(std::includes(small.begin(), small.end(), large.begin(), large.end()));
    }
    // Mean difference equals the k = 0 candidate score.
    const auto diff = head_mean_difference(d);
    const auto k0 = candidate_scores(d, 0.0);
    for (std::size_t i = 0; i < diff.values.size(); ++i) {
      CHECK(std::abs(diff.values[i] - k0.values[i]) <= 1e-12);
    }
    for (const HeadId h : all_heads(8, 8)) {
      const auto sn = d.normal_scores(h);
      const auto sa = d.attack_scores(h);
      // Self-comparison is never positive.
      CHECK(candidate_score(sn, sn, 2.0) <= 0.0);
      // Power-of-two scaling is exact: score scales, selection is unchanged.
      std::vector<double> n2(sn.begin(), sn.end());
      std::vector<double> a2(sa.begin(), sa.end());
      for (auto& v : n2) v *= 4.0;
      for (auto& v : a2) v *= 4.0;
      const double s = candidate_score(sn, sa, 4.0);
      const double scaled = candidate_score(n2, a2, 4.0);
      CHECK(scaled == doctest::Approx(4.0 * s));
      CHECK((scaled > 0.0) == (s > 0.0));
    }
  }
}

TEST_CASE("head set file round trip") {
  const auto c = planted_config(4);
  HeadSet set;
  set.heads = c.planted_heads;
  set.k = 4.0;
  set.model_id = "synthetic";
  set.n_normal = 30;
  set.n_attack = 30;
  set.num_layers = 8;
  set.num_heads = 8;
  set.metadata["note"] = "x";
  std::stringstream buf;
  write_head_set(set, buf);
  const std::string text = buf.str();
  for (const char* key : {"format_version", "model_id", "\"k\"", "n_normal", "n_attack", "heads"}) {
    CHECK(text.find(key) != std::string::npos);
  }
  CHECK(read_head_set(buf) == set);

  std::stringstream empty_buf;
  HeadSet empty = set;
  empty.heads.clear();
  write_head_set(empty, empty_buf);
  CHECK(read_head_set(empty_buf).empty());

  std::stringstream bad("{\"format_version\": 1}");
  CHECK_THROWS_AS(read_head_set(bad), FormatError);
  std::stringstream garbage("not json");
  CHECK_THROWS_AS(read_head_set(garbage), FormatError);
  std::stringstream dup(
      R"({"format_version":1,"model_id":"m","k":4,"n_normal":1,"n_attack":1,"heads":[[0,1],[0,1]]})");
  CHECK_THROWS_AS(read_head_set(dup), FormatError);
}

TEST_CASE("all-heads set") {
  const auto set = all_heads_set(3, 4, "m");
  CHECK(set.size() == 12);
  CHECK(set.proportion() == 1.0);
  std::stringstream buf;
  write_head_set(set, buf);
  CHECK(std::isnan(read_head_set(buf).k));
}

TEST_CASE("head matrix export") {
  HeadMatrix m{1, 2, {0.5, -0.25}};
  std::ostringstream out;
  write_head_matrix(m, out);
  CHECK(out.str() == "layer,head,value\n0,0,0.5\n0,1,-0.25\n");
}
