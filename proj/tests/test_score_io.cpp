#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "miaforge/error.hpp"
#include "miaforge/score_io.hpp"
#include "support/fixtures.hpp"

using namespace miaforge;

TEST_CASE("format_double is the shortest round-tripping form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-4.5) == "-4.5");
  CHECK(format_double(1e-300) == "1e-300");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("score CSV round-trips with quoting") {
  ScoreVector s{{"plain", "with,comma", "with \"quote\""}, {1.5, -2.25, 0.1}, "minkpp"};
  const auto text = scores_to_csv(s);
  CHECK(text.rfind("doc_id,score,method\nplain,1.5,minkpp\n", 0) == 0);
  const auto back = scores_from_csv(text);
  CHECK(back.ids == s.ids);
  CHECK(back.scores == s.scores);
  CHECK(back.method == "minkpp");
}

TEST_CASE("score CSV rejects malformed input") {
  CHECK_THROWS_AS(scores_from_csv("id,score\n"), ValidationError);
  CHECK_THROWS_AS(scores_from_csv("doc_id,score,method\na,1\n"), ValidationError);
  CHECK_THROWS_AS(scores_from_csv("doc_id,score,method\na,abc,m\n"), ValidationError);
  CHECK_THROWS_AS(scores_from_csv("doc_id,score,method\na,nan,m\n"), ValidationError);
  CHECK_THROWS_WITH_AS(scores_from_csv("doc_id,score,method\na,1,m\na,2,m\n"), doctest::Contains("duplicate"),
                       ValidationError);
  CHECK_THROWS_AS(scores_from_csv("doc_id,score,method\n\"a,1,m\n"), ValidationError);
}

TEST_CASE("labels from JSONL") {
  fixture::TempDir dir;
  fixture::spit(dir / "l.jsonl", "{\"id\":\"a\",\"label\":1,\"extra\":3}\n\n{\"id\":\"b\",\"label\":0}\n");
  const auto l = read_labels_jsonl(dir / "l.jsonl");
  CHECK(l.ids == std::vector<std::string>{"a", "b"});
  CHECK(l.values == std::vector<int>{1, 0});
  fixture::spit(dir / "bad.jsonl", "{\"id\":\"a\",\"label\":null}\n");
  CHECK_THROWS_WITH_AS(read_labels_jsonl(dir / "bad.jsonl"), doctest::Contains("'a'"), ValidationError);
  fixture::spit(dir / "dup.jsonl", "{\"id\":\"a\",\"label\":1}\n{\"id\":\"a\",\"label\":0}\n");
  CHECK_THROWS_AS(read_labels_jsonl(dir / "dup.jsonl"), ValidationError);
  CHECK_THROWS_AS(read_labels_jsonl(dir / "missing.jsonl"), Error);
}

TEST_CASE("file helpers write and read the same vector") {
  fixture::TempDir dir;
  ScoreVector s{{"x", "y"}, {std::numeric_limits<double>::denorm_min(), -1e308}, "loss"};
  write_scores_csv(s, dir / "s.csv");
  const auto back = read_scores_csv(dir / "s.csv");
  CHECK(back.scores == s.scores);
}
