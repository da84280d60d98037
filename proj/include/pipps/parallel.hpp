#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace pipps {

/// Runs fn(begin, end) over [0, count) split into contiguous chunks whose
/// boundaries are multiples of `grain`. Work items must not depend on which
/// chunk they land in; results are then independent of `workers`.
template <typename Fn>
void parallel_for(std::ptrdiff_t count, int workers, std::ptrdiff_t grain, Fn&& fn) {
    if (count <= 0) {
        return;
    }
    grain = std::max<std::ptrdiff_t>(grain, 1);
    const std::ptrdiff_t blocks = (count + grain - 1) / grain;
    const std::ptrdiff_t used = std::clamp<std::ptrdiff_t>(workers, 1, blocks);
    if (used == 1) {
        fn(std::ptrdiff_t{0}, count);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(used));
    const std::ptrdiff_t per = (blocks + used - 1) / used;
    for (std::ptrdiff_t w = 0; w < used; ++w) {
        const std::ptrdiff_t begin = std::min(count, w * per * grain);
        const std::ptrdiff_t end = std::min(count, (w + 1) * per * grain);
        if (begin >= end) {
            continue;
        }
        threads.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace pipps
