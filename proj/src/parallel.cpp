#include "badvamp/parallel.hpp"

#include <omp.h>

#include <atomic>

namespace badvamp::parallel {

namespace {
std::atomic<int> g_threads{0};
}

void set_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int threads() {
    const int n = g_threads.load();
    return n > 0 ? n : omp_get_max_threads();
}

bool enabled() { return threads() > 1; }

}  // namespace badvamp::parallel
