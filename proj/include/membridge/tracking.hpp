#pragma once

#include <cstddef>
#include <new>

namespace membridge {

// Byte accounting for tensor storage on the calling thread. Every Tensor
// allocates through TrackingAllocator, so the counters describe exactly the
// live numeric state, independent of the system allocator.
struct AllocationStats {
  std::size_t current = 0;
  std::size_t peak = 0;
};

AllocationStats& allocation_stats() noexcept;

// Restarts peak tracking from the current live byte count.
void reset_peak() noexcept;

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    auto& stats = allocation_stats();
    stats.current += n * sizeof(T);
    if (stats.current > stats.peak) stats.peak = stats.current;
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    allocation_stats().current -= n * sizeof(T);
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

}  // namespace membridge
