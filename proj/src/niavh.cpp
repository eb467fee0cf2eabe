#include "membridge/niavh.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "membridge/error.hpp"

namespace membridge {

std::vector<std::size_t> GridConfig::lengths() const {
  std::vector<std::size_t> out;
  out.reserve(length_levels);
  for (std::size_t i = 0; i < length_levels; ++i)
    out.push_back(std::max(min_length, max_length * (i + 1) / length_levels));
  return out;
}

std::vector<double> GridConfig::depths() const {
  if (depth_levels == 1) return {0.5};
  std::vector<double> out;
  out.reserve(depth_levels);
  for (std::size_t j = 0; j < depth_levels; ++j)
    out.push_back(static_cast<double>(j) / static_cast<double>(depth_levels - 1));
  return out;
}

void GridConfig::validate() const {
  require(length_levels >= 1 && depth_levels >= 1, ErrorKind::Config,
          "grid levels must be at least 1");
  require(seeds_per_cell >= 1, ErrorKind::Config, "seeds per cell must be at least 1");
  require(max_length >= length_levels, ErrorKind::Config,
          "max length is smaller than the number of length levels");
}

double score(std::size_t predicted, std::size_t truth) noexcept {
  return predicted == truth ? 10.0 : 0.0;
}

GridReport run_grid(const Predictor& predictor, const NeedleTask& task, const GridConfig& grid) {
  grid.validate();
  GridReport report;
  report.lengths = grid.lengths();
  report.depths = grid.depths();
  const std::size_t L = report.lengths.size();
  const std::size_t D = report.depths.size();
  report.scores.assign(L, std::vector<double>(D, 0.0));
  report.counts.assign(L, std::vector<std::size_t>(D, 0));

  std::uniform_int_distribution<std::uint32_t> cls(
      0, static_cast<std::uint32_t>(task.options().classes - 1));
  double total = 0.0;
  for (std::size_t li = 0; li < L; ++li) {
    for (std::size_t dj = 0; dj < D; ++dj) {
      GridCell cell{report.lengths[li], report.depths[dj], {}, 0.0};
      for (std::size_t s = 0; s < grid.seeds_per_cell; ++s) {
        Rng rng(derive_seed(grid.seed, (li * D + dj) * grid.seeds_per_cell + s));
        const std::uint32_t truth = cls(rng);
        const LabeledStream sample = task.sample_at(cell.length, cell.depth, truth, rng);
        const auto logits = predictor(sample.stream);
        cell.trial_scores.push_back(score(argmax(logits), truth));
      }
      double sum = 0.0;
      for (double v : cell.trial_scores) sum += v;
      cell.score = sum / static_cast<double>(cell.trial_scores.size());
      report.scores[li][dj] = cell.score;
      report.counts[li][dj] = cell.trial_scores.size();
      total += cell.score;
      report.cells.push_back(std::move(cell));
    }
  }
  report.overall = total / static_cast<double>(L * D);
  return report;
}

GridReport run_grid(const Pipeline& pipeline, const ParamStore& params, const NeedleTask& task,
                    const GridConfig& grid, SegmentPolicy policy) {
  const Binding w = Binding::constants(params);
  return run_grid([&](const EmbeddingStream& s) { return pipeline.predict(s, w, policy); }, task,
                  grid);
}

void GridReport::write_csv(std::ostream& out) const {
  out << "length,depth,score\n";
  for (const auto& c : cells) out << c.length << ',' << c.depth << ',' << c.score << '\n';
}

void GridReport::write_json(std::ostream& out) const {
  nlohmann::json j;
  j["lengths"] = lengths;
  j["depths"] = depths;
  j["scores"] = scores;
  j["counts"] = counts;
  j["overall"] = overall;
  auto& cells_json = j["cells"] = nlohmann::json::array();
  for (const auto& c : cells)
    cells_json.push_back({{"length", c.length}, {"depth", c.depth}, {"score", c.score},
                          {"trials", c.trial_scores}});
  out << j.dump(2) << '\n';
}

}  // namespace membridge
