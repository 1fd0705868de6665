#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace flowbm {

/// Caller passed something malformed: wrong dimensions, out-of-range values, empty inputs.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The request is well formed but beyond what the routine supports (e.g. a layout
/// a trainer cannot handle, or a state space too large to enumerate).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw InputError(what);
}

/// Runs fn(begin, end) over [0, count) split into fixed-size chunks. The chunking
/// depends only on `chunk`, never on `threads`, so any per-chunk output is
/// identical for every thread count.
inline void parallel_chunks(std::size_t count, std::size_t chunk, int threads,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t n_chunks = (count + chunk - 1) / chunk;
    const auto run = [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        fn(begin, std::min(count, begin + chunk));
    };
    const std::size_t workers =
        std::min<std::size_t>(n_chunks, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run(c);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = w; c < n_chunks; c += workers) run(c);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace flowbm
