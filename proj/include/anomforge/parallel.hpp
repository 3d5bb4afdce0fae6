#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace anomforge {

// Number of threads used by internal slab loops. 0 means hardware concurrency.
void set_internal_threads(unsigned n);
unsigned internal_threads();

// Runs fn(i) for i in [begin, end), split into contiguous chunks. Each index is
// visited exactly once, so results are independent of the schedule as long as
// fn writes only to index-owned outputs.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
    if (end <= begin) return;
    const std::size_t n = end - begin;
    const std::size_t workers = std::min<std::size_t>(internal_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = begin + n * w / workers;
            const std::size_t hi = begin + n * (w + 1) / workers;
            pool.emplace_back([&, lo, hi, w] {
                try {
                    for (std::size_t i = lo; i < hi; ++i) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace anomforge
