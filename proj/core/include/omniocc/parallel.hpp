#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace omniocc {

/// Worker count used by row-parallel kernels. Zero selects hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Runs body(row) for every row in [0, rows). Rows are split into contiguous
/// static chunks, so any kernel whose rows write disjoint outputs gives
/// identical results for every worker count.
template <typename Body>
void parallel_rows(int rows, Body&& body) {
  const int workers = std::min(thread_count(), rows);
  if (workers <= 1) {
    for (int y = 0; y < rows; ++y) body(y);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = rows * w / workers;
    const int end = rows * (w + 1) / workers;
    pool.emplace_back([begin, end, &body] {
      for (int y = begin; y < end; ++y) body(y);
    });
  }
}

}  // namespace omniocc
