#include "objfield/hash_grid.hpp"

#include <atomic>
#include <cstdio>

namespace objfield::detail {

void note_domain_clamp() {
  static std::atomic<bool> warned{false};
  bool expected = false;
  if (warned.compare_exchange_strong(expected, true))
    std::fprintf(stderr, "warning: encode received points outside [-2,2]^3; clamping\n");
}

}  // namespace objfield::detail
