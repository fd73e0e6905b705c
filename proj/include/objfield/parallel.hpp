#pragma once

#include <omp.h>

#include <cstdint>
#include <vector>

namespace objfield {

// Global worker count for the process (set once from the CLI).
int num_threads();
void set_num_threads(int n);

// Partition [0, n) into `parts` contiguous ranges. The split depends only on
// (n, parts), never on the runtime thread count, so per-partition buffers and
// ordered reductions give bit-identical results for any --threads value.
struct Range {
  int64_t begin, end;
};

inline std::vector<Range> static_partition(int64_t n, int parts) {
  std::vector<Range> out;
  if (n <= 0) return out;
  if (parts < 1) parts = static_cast<int>(n);  // one range per item
  int64_t base = n / parts, rem = n % parts, at = 0;
  for (int p = 0; p < parts; ++p) {
    int64_t len = base + (p < rem ? 1 : 0);
    if (len == 0) continue;
    out.push_back({at, at + len});
    at += len;
  }
  return out;
}

// Number of partitions used for scatter-accumulate buffers; fixed so results
// do not depend on the machine.
inline constexpr int kScatterPartitions = 8;

template <class F>
void parallel_ranges(int64_t n, int parts, F&& body) {
  auto ranges = static_partition(n, parts);
  int nr = static_cast<int>(ranges.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(num_threads())
  for (int r = 0; r < nr; ++r) body(r, ranges[r].begin, ranges[r].end);
}

// Element-parallel loop with disjoint writes; partition count scales with n
// but writes are per-element so any split is deterministic.
template <class F>
void parallel_for(int64_t n, F&& body) {
  parallel_ranges(n, num_threads() * 4, [&](int, int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) body(i);
  });
}

}  // namespace objfield
