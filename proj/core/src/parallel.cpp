#include "omniocc/parallel.hpp"

#include <atomic>

namespace omniocc {

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int threads) { g_threads.store(std::max(0, threads)); }

int thread_count() {
  const int configured = g_threads.load();
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace omniocc
