#include <doctest.h>

#include <sstream>

#include "membridge/error.hpp"
#include "membridge/niavh.hpp"

using namespace membridge;

namespace {

EmbeddingStream haystack(std::size_t n, std::uint64_t seed = 3) {
  HaystackSpec spec;
  spec.dim = 16;
  Rng rng(seed);
  return make_haystack(n, spec, {}, rng);
}

NeedleSpec needle_at(double depth, std::size_t dim = 16) {
  NeedleSpec spec;
  spec.class_id = 2;
  spec.signature.assign(dim, 0.0);
  spec.signature[0] = 1.0;
  spec.depth = depth;
  return spec;
}

}  // namespace

TEST_CASE("needle placement at the extremes and the middle") {
  const EmbeddingStream h = haystack(100);
  CHECK(plant_needle(h, needle_at(0.0), 1).start == 0);
  CHECK(plant_needle(h, needle_at(1.0), 1).start == 99);

  const EmbeddingStream odd = haystack(101);
  const PlantedStream mid = plant_needle(odd, needle_at(0.5), 1);
  CHECK(mid.start == 50);  // frame 51 of 101

  NeedleSpec wide = needle_at(1.0);
  wide.duration = 5;
  CHECK(plant_needle(h, wide, 1).start == 95);

  CHECK_THROWS_WITH(plant_needle(haystack(3), [] {
                      NeedleSpec s = needle_at(0.5);
                      s.duration = 4;
                      return s;
                    }(), 1),
                    "haystack shorter than needle");
}

TEST_CASE("planted stream labels and boundaries agree") {
  const EmbeddingStream h = haystack(40, 8);
  NeedleSpec spec = needle_at(0.3);
  spec.duration = 3;
  const PlantedStream p = plant_needle(h, spec, 4);
  const auto& labels = *p.stream.labels;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool inside = i >= p.start && i < p.start + 3;
    CHECK((labels[i] == 2) == inside);
    if (!inside) CHECK(labels[i] >= kHaystackLabelBase);
  }
  for (std::size_t i = 1; i < labels.size(); ++i) {
    const auto& b = *p.stream.boundaries;
    CHECK((labels[i] != labels[i - 1]) == (std::find(b.begin(), b.end(), i) != b.end()));
  }
  for (std::size_t i = p.start; i < p.start + 3; ++i)
    CHECK(cosine_similarity(p.stream.frame(i), spec.signature) > 0.9);
  CHECK(p.stream.size() == h.size());
}

TEST_CASE("needle start is monotone in depth") {
  std::size_t previous = 0;
  for (int j = 0; j <= 20; ++j) {
    const std::size_t start = needle_start(77, 2, j / 20.0);
    CHECK(start >= previous);
    previous = start;
  }
  CHECK(previous == 75);
}

TEST_CASE("task samples carry their label") {
  NeedleTask::Options o;
  o.haystack.dim = 16;
  const NeedleTask task(o);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const LabeledStream s = task.sample_at(30, 0.25 * (i % 5), i % 4, rng);
    CHECK(s.label == static_cast<std::uint32_t>(i % 4));
    CHECK((*s.stream.labels)[s.needle_start] == s.label);
    CHECK(s.stream.size() == 30);
  }
}

TEST_CASE("grid levels") {
  GridConfig g;
  CHECK(g.lengths().size() == 40);
  CHECK(g.depths().size() == 12);
  CHECK(g.lengths().front() == 8);
  CHECK(g.lengths().back() == 320);
  CHECK(g.depths().front() == 0.0);
  CHECK(g.depths().back() == 1.0);
  GridConfig single;
  single.depth_levels = 1;
  CHECK(single.depths() == std::vector<double>{0.5});
  GridConfig bad;
  bad.length_levels = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scores and grid aggregation") {
  CHECK(score(1, 1) == 10.0);
  CHECK(score(0, 1) == 0.0);

  NeedleTask::Options o;
  o.haystack.dim = 16;
  const NeedleTask task(o);

  // Reads the needle from the frames themselves: always right.
  const Predictor oracle = [&](const EmbeddingStream& s) {
    std::vector<double> logits(task.classes(), -1.0);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t k = 0; k < task.classes(); ++k)
        logits[k] = std::max(logits[k], cosine_similarity(s.frame(i), task.signatures()[k]));
    return logits;
  };
  GridConfig one;
  one.length_levels = 1;
  one.depth_levels = 1;
  one.max_length = 24;
  const GridReport perfect = run_grid(oracle, task, one);
  REQUIRE(perfect.cells.size() == 1);
  CHECK(perfect.cells[0].score == 10.0);
  CHECK(perfect.overall == 10.0);

  // Correct on exactly three of every five trials.
  std::size_t calls = 0;
  const Predictor three_of_five = [&](const EmbeddingStream& s) {
    auto logits = oracle(s);
    if (calls++ % 5 >= 3) {
      const std::size_t right = argmax(logits);
      logits[right] = -10.0;
    }
    return logits;
  };
  const GridReport partial = run_grid(three_of_five, task, one);
  CHECK(partial.cells[0].trial_scores.size() == 5);
  CHECK(partial.cells[0].score == doctest::Approx(6.0));

  GridConfig small;
  small.length_levels = 3;
  small.depth_levels = 2;
  small.max_length = 30;
  small.seeds_per_cell = 2;
  const GridReport a = run_grid(oracle, task, small), b = run_grid(oracle, task, small);
  CHECK(a.scores.size() == 3);
  CHECK(a.scores[0].size() == 2);
  CHECK(a.counts[2][1] == 2);
  std::ostringstream ca, cb;
  a.write_csv(ca);
  b.write_csv(cb);
  CHECK(ca.str() == cb.str());
  CHECK(ca.str().rfind("length,depth,score\n", 0) == 0);
  std::ostringstream json;
  a.write_json(json);
  CHECK(json.str().find("\"overall\"") != std::string::npos);
}
