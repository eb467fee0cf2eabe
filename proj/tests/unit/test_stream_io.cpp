#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "membridge/error.hpp"
#include "membridge/stream_io.hpp"
#include "membridge/tensor.hpp"

using namespace membridge;

namespace {

EmbeddingStream random_stream(Rng& rng, bool with_sections) {
  std::uniform_int_distribution<std::size_t> dim_dist(1, 16), n_dist(1, 40);
  std::normal_distribution<double> value(0.0, 3.0);
  EmbeddingStream s;
  s.dim = dim_dist(rng);
  const std::size_t n = n_dist(rng);
  for (std::size_t i = 0; i < n * s.dim; ++i)
    s.values.push_back(static_cast<double>(static_cast<float>(value(rng))));
  s.frame_rate = std::uniform_real_distribution<double>(0.1, 60.0)(rng);
  if (with_sections) {
    std::vector<std::uint32_t> labels;
    std::vector<std::size_t> bounds;
    std::uint32_t label = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && rng() % 4 == 0) {
        ++label;
        bounds.push_back(i);
      }
      labels.push_back(label);
    }
    s.labels = labels;
    s.boundaries = bounds;
  }
  return s;
}

std::vector<std::uint8_t> bytes_of(const std::vector<std::uint8_t>& v) { return v; }

}  // namespace

TEST_CASE("estream byte layout for a single 2-d frame") {
  EmbeddingStream s;
  s.dim = 2;
  s.values = {1.0, 0.0};
  const auto bytes = write_estream(s);
  CHECK(kEstreamHeaderBytes == 26);
  REQUIRE(bytes.size() == 26 + 8);
  CHECK(bytes[0] == 0x45);
  CHECK(bytes[1] == 0x53);
  CHECK(bytes[2] == 0x54);
  CHECK(bytes[3] == 0x52);
  // version 1, dim 2, one frame, 1.0 fps, then f32 1.0 and 0.0
  const std::vector<std::uint8_t> expected{
      0x45, 0x53, 0x54, 0x52, 0x01, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00,
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
      0xF0, 0x3F, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x00};
  CHECK(bytes == expected);
}

TEST_CASE("estream rejects an empty stream") {
  EmbeddingStream s;
  s.dim = 3;
  CHECK_THROWS_AS(write_estream(s), Error);
}

TEST_CASE("estream round trip is bit exact") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const EmbeddingStream s = random_stream(rng, trial % 2 == 0);
    const auto bytes = write_estream(s);
    const EmbeddingStream back = read_estream(bytes);
    CHECK(back == s);
    CHECK(write_estream(back) == bytes);
  }
}

TEST_CASE("estream corruption errors") {
  EmbeddingStream s;
  s.dim = 2;
  s.values = {1.0, 0.0, 0.5, 0.5};
  const auto good = write_estream(s);

  auto bad_magic = bytes_of(good);
  bad_magic[0] ^= 0xFF;
  CHECK_THROWS_WITH(read_estream(bad_magic), "not an estream");

  auto bad_version = bytes_of(good);
  bad_version[4] = 2;
  CHECK_THROWS_WITH(read_estream(bad_version), "unsupported version");

  auto shortened = bytes_of(good);
  shortened.resize(shortened.size() - 4);
  CHECK_THROWS_WITH(read_estream(shortened), "truncated");

  std::vector<std::uint8_t> header_only(good.begin(), good.begin() + 10);
  CHECK_THROWS_WITH(read_estream(header_only), "truncated");
}

TEST_CASE("estream skips unknown sections") {
  EmbeddingStream s;
  s.dim = 1;
  s.values = {0.25};
  auto bytes = write_estream(s);
  const char tag[] = {'X', 'T', 'R', 'A'};
  bytes.insert(bytes.end(), tag, tag + 4);
  const std::uint8_t len[8] = {3, 0, 0, 0, 0, 0, 0, 0};
  bytes.insert(bytes.end(), len, len + 8);
  bytes.insert(bytes.end(), {9, 9, 9});
  CHECK(read_estream(bytes) == s);
}

TEST_CASE("json lines round trip") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    EmbeddingStream s = random_stream(rng, false);
    if (trial % 2) {
      s.labels = std::vector<std::uint32_t>(s.size(), 3);
    }
    std::stringstream buf;
    write_jsonl(s, buf);
    const EmbeddingStream back = read_jsonl(buf);
    CHECK(back.dim == s.dim);
    CHECK(back.values == s.values);
    CHECK(back.frame_rate == s.frame_rate);
    CHECK(back.labels == s.labels);
  }
}

TEST_CASE("json lines parse errors") {
  CHECK_THROWS_AS(parse_jsonl_header("{\"fps\":1}"), Error);
  CHECK_THROWS_AS(parse_jsonl_frame("{\"v\":[1,2]}", 3), Error);
  CHECK_THROWS_AS(parse_jsonl_frame("not json", 2), Error);
  const auto v = parse_jsonl_frame("{\"v\":[1,2]}", 2);
  CHECK(v == std::vector<double>{1.0, 2.0});
}

TEST_CASE("file helpers detect format and report missing files") {
  const auto dir = std::filesystem::temp_directory_path() / "membridge_stream_io_test";
  std::filesystem::create_directories(dir);
  SceneSpec spec;
  spec.seed = 5;
  const EmbeddingStream s = generate_scene_stream(spec);
  const std::string bin = (dir / "s.estream").string(), txt = (dir / "s.jsonl").string();
  save_stream(bin, s);
  save_stream(txt, s);
  const EmbeddingStream a = load_stream(bin), b = load_stream(txt);
  CHECK(a.size() == s.size());
  CHECK(b.size() == s.size());
  CHECK(b.values == s.values);
  for (std::size_t i = 0; i < s.values.size(); ++i)
    CHECK(a.values[i] == static_cast<double>(static_cast<float>(s.values[i])));
  try {
    load_stream((dir / "missing.estream").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("not found") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("scene generator basics") {
  SceneSpec spec;
  spec.scene_count = 1;
  const EmbeddingStream one = generate_scene_stream(spec);
  CHECK(one.boundaries->empty());

  spec.scene_count = 4;
  spec.seed = 9;
  const EmbeddingStream a = generate_scene_stream(spec), b = generate_scene_stream(spec);
  CHECK(a == b);
  CHECK(write_estream(a) == write_estream(b));

  for (std::size_t i = 1; i < a.size(); ++i) {
    const bool change = (*a.labels)[i] != (*a.labels)[i - 1];
    const bool listed = std::find(a.boundaries->begin(), a.boundaries->end(), i) !=
                        a.boundaries->end();
    CHECK(change == listed);
  }
}

TEST_CASE("scene generator similarity bands over 100 seeds") {
  double min_within = 1.0, max_cross = -1.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneSpec spec;
    spec.scene_count = 4;
    spec.noise_sigma = 0.05;
    spec.min_center_separation = 0.2;
    spec.dim = 64;
    spec.seed = seed;
    const EmbeddingStream s = generate_scene_stream(spec);
    for (std::size_t i = 1; i < s.size(); ++i) {
      const double c = cosine_similarity(s.frame(i - 1), s.frame(i));
      if ((*s.labels)[i] == (*s.labels)[i - 1]) min_within = std::min(min_within, c);
      else max_cross = std::max(max_cross, c);
    }
  }
  CHECK(min_within >= 0.9);
  CHECK(max_cross <= 0.3);
}

TEST_CASE("infeasible separation is reported") {
  SceneSpec spec;
  spec.dim = 2;
  spec.scene_count = 12;
  spec.min_center_separation = -0.9;
  CHECK_THROWS_WITH(generate_scene_stream(spec), "separation infeasible");
}
