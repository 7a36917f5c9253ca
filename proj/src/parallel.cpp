#include "mvpb/parallel.hpp"

namespace mvpb {

namespace {
std::atomic<int> g_threads{0};
}

void set_threads(int n) { g_threads = n > 0 ? n : 0; }

int threads() {
  int n = g_threads.load();
  if (n > 0) return n;
  unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : static_cast<int>(h);
}

}  // namespace mvpb
