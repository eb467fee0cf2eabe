#include "membridge/tracking.hpp"

namespace membridge {

AllocationStats& allocation_stats() noexcept {
  thread_local AllocationStats stats;
  return stats;
}

void reset_peak() noexcept {
  auto& stats = allocation_stats();
  stats.peak = stats.current;
}

}  // namespace membridge
