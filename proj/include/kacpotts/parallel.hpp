#ifndef KACPOTTS_PARALLEL_HPP
#define KACPOTTS_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

namespace kacpotts {

/// Evaluates fn(i) for i in [0, count) on up to `threads` workers and returns
/// the results in index order. Output never depends on the thread count as
/// long as fn(i) is a pure function of i.
template <typename Fn>
auto parallel_map(std::size_t count, unsigned threads, Fn&& fn) {
    using R = std::invoke_result_t<Fn&, std::size_t>;
    std::vector<R> out(count);
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = fn(i);
        }
        return out;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(failure_lock);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };

    {
        std::vector<std::jthread> pool;
        unsigned n = std::min<std::size_t>(threads, count);
        for (unsigned t = 0; t < n; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return out;
}

}

#endif
