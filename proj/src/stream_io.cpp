#include "membridge/stream_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "membridge/detail/bytes.hpp"
#include "membridge/error.hpp"

namespace membridge {

void EmbeddingStream::push_frame(std::span<const double> v) {
  if (dim == 0) dim = v.size();
  require(v.size() == dim, ErrorKind::Format, "frame width mismatch");
  values.insert(values.end(), v.begin(), v.end());
}

Tensor EmbeddingStream::frames_tensor(std::size_t begin, std::size_t count) const {
  require(begin + count <= size(), ErrorKind::Config, "frame range out of bounds");
  return Tensor({count, dim},
                std::span<const double>(values.data() + begin * dim, count * dim));
}

void EmbeddingStream::validate() const {
  require(dim > 0, ErrorKind::Format, "stream has zero width");
  require(values.size() % dim == 0, ErrorKind::Format, "ragged frame data");
  const std::size_t n = size();
  require(n >= 1, ErrorKind::Format, "empty stream");
  if (labels) require(labels->size() == n, ErrorKind::Format, "label count mismatch");
  if (boundaries) {
    std::size_t prev = 0;
    for (std::size_t b : *boundaries) {
      require(b >= 1 && b <= n - 1 && b > prev, ErrorKind::Format,
              "boundaries must be strictly increasing within [1, n-1]");
      prev = b;
    }
  }
}

// ---- binary ---------------------------------------------------------------

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr char kMagic[4] = {'E', 'S', 'T', 'R'};
constexpr char kLabelTag[4] = {'L', 'A', 'B', 'L'};
constexpr char kBoundaryTag[4] = {'B', 'N', 'D', 'S'};

bool tag_equals(std::span<const std::uint8_t> tag, const char (&want)[4]) {
  return std::memcmp(tag.data(), want, 4) == 0;
}

}  // namespace

std::vector<std::uint8_t> write_estream(const EmbeddingStream& stream) {
  stream.validate();
  ByteWriter w;
  w.put_tag(kMagic);
  w.put_uint<std::uint16_t>(kEstreamVersion);
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(stream.dim));
  w.put_uint<std::uint64_t>(stream.size());
  w.put_f64(stream.frame_rate);
  for (double v : stream.values) w.put_f32(static_cast<float>(v));
  if (stream.labels) {
    w.put_tag(kLabelTag);
    w.put_uint<std::uint64_t>(stream.labels->size() * 4);
    for (std::uint32_t l : *stream.labels) w.put_uint<std::uint32_t>(l);
  }
  if (stream.boundaries) {
    w.put_tag(kBoundaryTag);
    w.put_uint<std::uint64_t>(stream.boundaries->size() * 8);
    for (std::size_t b : *stream.boundaries) w.put_uint<std::uint64_t>(b);
  }
  return w.take();
}

EmbeddingStream read_estream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorKind::Format, "not an estream");
  ByteReader r(bytes.subspan(4));
  const auto version = r.get_uint<std::uint16_t>();
  if (version != kEstreamVersion) fail(ErrorKind::Format, "unsupported version");
  EmbeddingStream s;
  s.dim = r.get_uint<std::uint32_t>();
  const auto n = r.get_uint<std::uint64_t>();
  s.frame_rate = r.get_f64();
  require(s.dim > 0 && n > 0, ErrorKind::Format, "empty stream");
  if (n > r.remaining() / 4 / s.dim) fail(ErrorKind::Format, "truncated");
  s.values.resize(n * s.dim);
  for (double& v : s.values) v = r.get_f32();
  while (!r.exhausted()) {
    const auto tag = r.get_bytes(4);
    const auto length = r.get_uint<std::uint64_t>();
    r.need(length);
    if (tag_equals(tag, kLabelTag)) {
      require(length % 4 == 0, ErrorKind::Format, "malformed label section");
      std::vector<std::uint32_t> labels(length / 4);
      for (auto& l : labels) l = r.get_uint<std::uint32_t>();
      s.labels = std::move(labels);
    } else if (tag_equals(tag, kBoundaryTag)) {
      require(length % 8 == 0, ErrorKind::Format, "malformed boundary section");
      std::vector<std::size_t> boundaries(length / 8);
      for (auto& b : boundaries) b = r.get_uint<std::uint64_t>();
      s.boundaries = std::move(boundaries);
    } else {
      r.get_bytes(length);
    }
  }
  s.validate();
  return s;
}

// ---- JSON lines -------------------------------------------------------------

std::string jsonl_header(std::size_t dim, double fps) {
  nlohmann::json j = {{"dim", dim}, {"fps", fps}};
  return j.dump();
}

std::string jsonl_frame(std::span<const double> v) {
  nlohmann::json j;
  j["v"] = std::vector<double>(v.begin(), v.end());
  return j.dump();
}

void write_jsonl(const EmbeddingStream& stream, std::ostream& out) {
  stream.validate();
  out << jsonl_header(stream.dim, stream.frame_rate) << '\n';
  for (std::size_t i = 0; i < stream.size(); ++i) {
    nlohmann::json j;
    const auto f = stream.frame(i);
    j["v"] = std::vector<double>(f.begin(), f.end());
    if (stream.labels) j["label"] = (*stream.labels)[i];
    out << j.dump() << '\n';
  }
}

JsonlHeader parse_jsonl_header(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Format, "malformed header");
  }
  if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_unsigned())
    fail(ErrorKind::Format, "header must carry an unsigned \"dim\"");
  JsonlHeader h;
  h.dim = j["dim"].get<std::size_t>();
  require(h.dim > 0, ErrorKind::Format, "header dim must be positive");
  if (j.contains("fps")) {
    if (!j["fps"].is_number()) fail(ErrorKind::Format, "header fps must be a number");
    h.fps = j["fps"].get<double>();
  }
  return h;
}

std::vector<double> parse_jsonl_frame(const std::string& line, std::size_t dim,
                                      std::optional<std::uint32_t>* label) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Format, "malformed frame");
  }
  if (!j.is_object() || !j.contains("v") || !j["v"].is_array())
    fail(ErrorKind::Format, "frame must carry a \"v\" array");
  const auto& arr = j["v"];
  if (arr.size() != dim) fail(ErrorKind::Format, "frame width mismatch");
  std::vector<double> v;
  v.reserve(dim);
  for (const auto& x : arr) {
    if (!x.is_number()) fail(ErrorKind::Format, "frame entries must be numbers");
    v.push_back(x.get<double>());
  }
  if (label) {
    if (j.contains("label") && j["label"].is_number_unsigned())
      *label = j["label"].get<std::uint32_t>();
    else
      label->reset();
  }
  return v;
}

EmbeddingStream read_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, "missing header");
  const JsonlHeader h = parse_jsonl_header(line);
  EmbeddingStream s;
  s.dim = h.dim;
  s.frame_rate = h.fps;
  std::vector<std::uint32_t> labels;
  bool all_labelled = true;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::optional<std::uint32_t> label;
    try {
      s.push_frame(parse_jsonl_frame(line, h.dim, &label));
    } catch (const Error& e) {
      fail(ErrorKind::Format, std::string(e.what()) + " at line " + std::to_string(lineno));
    }
    if (label) labels.push_back(*label);
    else all_labelled = false;
  }
  if (all_labelled && !labels.empty()) s.labels = std::move(labels);
  s.validate();
  return s;
}

// ---- files ------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, path + ": not found");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, path + ": write failed");
}

void save_stream(const std::string& path, const EmbeddingStream& stream) {
  const bool jsonl = path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
  if (jsonl) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, path + ": cannot open for writing");
    write_jsonl(stream, out);
    return;
  }
  write_file_bytes(path, write_estream(stream));
}

EmbeddingStream load_stream(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0)
    return read_estream(bytes);
  if (!bytes.empty() && bytes.front() == '{') {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    return read_jsonl(in);
  }
  return read_estream(bytes);
}

// ---- synthetic scenes -------------------------------------------------------

void SceneSpec::validate() const {
  require(scene_count >= 1, ErrorKind::Config, "scene_count must be at least 1");
  require(min_frames_per_scene >= 1 && min_frames_per_scene <= max_frames_per_scene,
          ErrorKind::Config, "invalid frames-per-scene bounds");
  require(dim >= 1, ErrorKind::Config, "dim must be positive");
  require(noise_sigma >= 0.0, ErrorKind::Config, "noise_sigma must be nonnegative");
  require(min_center_separation >= -1.0 && min_center_separation < 1.0,
          ErrorKind::Config, "min_center_separation must lie in [-1, 1)");
}

void normalize_inplace(std::span<double> v) {
  const double n = norm(v);
  require(n > 0.0, ErrorKind::Domain, "cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  do {
    for (double& x : v) x = g(rng);
  } while (norm(v) == 0.0);
  normalize_inplace(v);
  return v;
}

std::vector<double> sample_separated_center(std::size_t dim, double max_cosine,
                                            std::span<const std::vector<double>> avoid,
                                            Rng& rng) {
  for (std::size_t attempt = 0; attempt < kCenterRetryBudget; ++attempt) {
    auto v = random_unit_vector(dim, rng);
    bool ok = true;
    for (const auto& a : avoid)
      if (dot(v, a) > max_cosine) { ok = false; break; }
    if (ok) return v;
  }
  fail(ErrorKind::Domain, "separation infeasible");
}

std::vector<double> perturbed_frame(std::span<const double> center, double sigma, Rng& rng) {
  std::vector<double> v(center.begin(), center.end());
  if (sigma > 0.0) {
    std::normal_distribution<double> g(0.0, sigma / std::sqrt(static_cast<double>(v.size())));
    for (double& x : v) x += g(rng);
  }
  normalize_inplace(v);
  return v;
}

EmbeddingStream generate_scene_stream(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<std::vector<double>> centers;
  for (std::size_t s = 0; s < spec.scene_count; ++s)
    centers.push_back(sample_separated_center(spec.dim, spec.min_center_separation,
                                              centers, rng));
  std::uniform_int_distribution<std::size_t> length(spec.min_frames_per_scene,
                                                    spec.max_frames_per_scene);
  EmbeddingStream out;
  out.dim = spec.dim;
  out.frame_rate = spec.frame_rate;
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> boundaries;
  for (std::size_t s = 0; s < spec.scene_count; ++s) {
    if (s > 0) boundaries.push_back(out.size());
    const std::size_t count = length(rng);
    for (std::size_t f = 0; f < count; ++f) {
      out.push_frame(perturbed_frame(centers[s], spec.noise_sigma, rng));
      labels.push_back(static_cast<std::uint32_t>(s));
    }
  }
  out.labels = std::move(labels);
  out.boundaries = std::move(boundaries);
  return out;
}

}  // namespace membridge
