#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "membridge/nn.hpp"

namespace membridge {

// A sequence of frame embeddings. Boundaries use cut indices: a boundary b
// means a scene change between frame b and frame b+1 (1-based), so b is the
// number of frames before the cut.
struct EmbeddingStream {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major, frames x dim
  double frame_rate = 1.0;
  std::optional<std::vector<std::uint32_t>> labels;
  std::optional<std::vector<std::size_t>> boundaries;

  std::size_t size() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> frame(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  std::span<double> frame(std::size_t i) { return {values.data() + i * dim, dim}; }
  void push_frame(std::span<const double> v);

  // Rows [begin, begin + count) as a matrix.
  Tensor frames_tensor(std::size_t begin, std::size_t count) const;
  Tensor frames_tensor() const { return frames_tensor(0, size()); }

  // Throws Format errors describing the first broken invariant.
  void validate() const;

  friend bool operator==(const EmbeddingStream&, const EmbeddingStream&) = default;
};

// ---- ESTREAM binary format ------------------------------------------------
//
//   "ESTR" | u16 version=1 | u32 dim | u64 frames | f64 frame_rate
//   | frames*dim f32 row-major
//   then optional sections: 4-byte tag | u64 payload bytes | payload
//     "LABL": u32 per frame      "BNDS": u64 per boundary
//
// All integers and floats little-endian. Unknown sections are skipped.

inline constexpr std::uint16_t kEstreamVersion = 1;
inline constexpr std::size_t kEstreamHeaderBytes = 4 + 2 + 4 + 8 + 8;

std::vector<std::uint8_t> write_estream(const EmbeddingStream& stream);
EmbeddingStream read_estream(std::span<const std::uint8_t> bytes);

// ---- JSON lines -------------------------------------------------------------
//
//   {"dim":d,"fps":r}
//   {"v":[...]}            one line per frame, optional "label"

std::string jsonl_header(std::size_t dim, double fps);
std::string jsonl_frame(std::span<const double> v);
void write_jsonl(const EmbeddingStream& stream, std::ostream& out);
EmbeddingStream read_jsonl(std::istream& in);

struct JsonlHeader {
  std::size_t dim = 0;
  double fps = 1.0;
};
JsonlHeader parse_jsonl_header(const std::string& line);
std::vector<double> parse_jsonl_frame(const std::string& line, std::size_t dim,
                                      std::optional<std::uint32_t>* label = nullptr);

// File helpers. The format is detected from the leading magic bytes.
void save_stream(const std::string& path, const EmbeddingStream& stream);
EmbeddingStream load_stream(const std::string& path);
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

// ---- synthetic scenes -------------------------------------------------------

struct SceneSpec {
  std::size_t scene_count = 4;
  std::size_t min_frames_per_scene = 4;
  std::size_t max_frames_per_scene = 8;
  std::size_t dim = 64;
  // Expected norm of the within-scene perturbation (per-coordinate standard
  // deviation noise_sigma / sqrt(dim)), so the value is dimension-free.
  double noise_sigma = 0.05;
  // Largest cosine similarity allowed between any two scene centers.
  double min_center_separation = 0.2;
  double frame_rate = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::size_t kCenterRetryBudget = 10000;

EmbeddingStream generate_scene_stream(const SceneSpec& spec);

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng);

// Draws a unit vector whose cosine with every vector in `avoid` is at most
// `max_cosine`. Throws "separation infeasible" after the retry budget.
std::vector<double> sample_separated_center(std::size_t dim, double max_cosine,
                                            std::span<const std::vector<double>> avoid,
                                            Rng& rng);

// normalize(center + noise), noise isotropic with expected norm `sigma`.
std::vector<double> perturbed_frame(std::span<const double> center, double sigma, Rng& rng);

void normalize_inplace(std::span<double> v);

}  // namespace membridge
