#include "objfield/parallel.hpp"

#include <thread>

namespace objfield {

namespace {
int g_threads = 0;
}

int num_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_num_threads(int n) { g_threads = n > 0 ? n : 0; }

}  // namespace objfield
