#include "common.hpp"

#include <atomic>
#include <iostream>

extern "C" void openblas_set_num_threads(int);

namespace hgr {

namespace {
std::atomic<int> g_threads{1};
std::atomic<std::int64_t> g_diagnostics{0};
}  // namespace

void set_threads(int n) {
  if (n < 1) n = 1;
  g_threads.store(n, std::memory_order_relaxed);
  openblas_set_num_threads(n);
}

int threads() { return g_threads.load(std::memory_order_relaxed); }

std::int64_t diagnostic_count() {
  return g_diagnostics.load(std::memory_order_relaxed);
}

void note_diagnostic(const std::string& message) {
  g_diagnostics.fetch_add(1, std::memory_order_relaxed);
  std::cerr << "[hgrnet] " << message << "\n";
}

const char* version_string() { return "0.1.0"; }

}  // namespace hgr
