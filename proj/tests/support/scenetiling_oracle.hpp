#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace membridge::testing {

struct OracleResult {
  std::vector<double> depths;
  double mean = 0.0;
  double stddev = 0.0;
  double threshold = 0.0;
  std::vector<std::size_t> cuts;  // 1-based: cut i splits after frame i
};

// Straight-line transcription of the segmentation recipe: side maxima taken
// by rescanning, population deviation, strict threshold. Quadratic on purpose.
inline OracleResult scenetiling_oracle(const std::vector<double>& c, double alpha) {
  const std::size_t m = c.size();
  OracleResult r;
  for (std::size_t i = 0; i < m; ++i) {
    double cl = c[0];
    if (i > 0) {
      cl = c[0];
      for (std::size_t j = 0; j < i; ++j) cl = std::max(cl, c[j]);
    }
    double cr = c[m - 1];
    if (i + 1 < m) {
      cr = c[i + 1];
      for (std::size_t j = i + 1; j < m; ++j) cr = std::max(cr, c[j]);
    }
    r.depths.push_back((cl + cr - 2.0 * c[i]) / 2.0);
  }
  double sum = 0.0;
  for (double d : r.depths) sum += d;
  r.mean = sum / static_cast<double>(m);
  double var = 0.0;
  for (double d : r.depths) var += (d - r.mean) * (d - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(m));
  r.threshold = r.mean + alpha * r.stddev;
  for (std::size_t i = 0; i < m; ++i)
    if (r.depths[i] > r.threshold) r.cuts.push_back(i + 1);
  return r;
}

// K - 1 deepest positions, earlier index first among equal depths.
inline std::vector<std::size_t> fixed_count_oracle(const std::vector<double>& depths,
                                                   std::size_t k) {
  std::vector<std::size_t> chosen;
  std::vector<bool> used(depths.size(), false);
  for (std::size_t round = 0; round + 1 < k; ++round) {
    std::size_t best = depths.size();
    for (std::size_t i = 0; i < depths.size(); ++i) {
      if (used[i]) continue;
      if (best == depths.size() || depths[i] > depths[best]) best = i;
    }
    used[best] = true;
    chosen.push_back(best + 1);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace membridge::testing
