#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "membridge/needle_task.hpp"
#include "membridge/probe_train.hpp"

namespace membridge {

struct GridConfig {
  std::size_t length_levels = 40;
  std::size_t depth_levels = 12;
  std::size_t max_length = 320;
  std::size_t seeds_per_cell = 5;
  std::uint64_t seed = 0;
  // Shortest haystack the grid may ask for; shorter levels are raised to it.
  std::size_t min_length = 1;

  // Evenly spaced lengths max_length * (i + 1) / length_levels.
  std::vector<std::size_t> lengths() const;
  // Evenly spaced depths j / (depth_levels - 1); a single level sits at 0.5.
  std::vector<double> depths() const;
  void validate() const;
};

struct GridCell {
  std::size_t length = 0;
  double depth = 0.0;
  std::vector<double> trial_scores;
  double score = 0.0;  // mean of trial_scores
};

struct GridReport {
  std::vector<std::size_t> lengths;
  std::vector<double> depths;
  std::vector<std::vector<double>> scores;        // [length][depth]
  std::vector<std::vector<std::size_t>> counts;   // [length][depth]
  std::vector<GridCell> cells;                    // length-major
  double overall = 0.0;

  void write_csv(std::ostream& out) const;
  void write_json(std::ostream& out) const;
};

// Exact-match surrogate on the 0..10 scale.
double score(std::size_t predicted, std::size_t truth) noexcept;

GridReport run_grid(const Predictor& predictor, const NeedleTask& task, const GridConfig& grid);
GridReport run_grid(const Pipeline& pipeline, const ParamStore& params, const NeedleTask& task,
                    const GridConfig& grid, SegmentPolicy policy = SegmentPolicy::Dynamic);

}  // namespace membridge
