#include "anomforge/parallel.hpp"

#include <atomic>

namespace anomforge {

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_internal_threads(unsigned n) { g_threads.store(n); }

unsigned internal_threads() {
    const unsigned n = g_threads.load();
    if (n != 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace anomforge
