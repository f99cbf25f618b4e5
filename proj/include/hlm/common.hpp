// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hlm {

using Shape = std::vector<int64_t>;

// Additive attention-mask fill: large enough that exp() underflows to zero.
inline constexpr float kMaskFill = -1e9f;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

// Thrown on malformed user input: bad flags, bad config values, bad shapes.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when referenced files/data are missing or unreadable.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when training hits a non-finite value.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes; message carries both offending shapes.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline void check_shapes(bool ok, const std::string& op, const Shape& a, const Shape& b) {
    if (!ok)
        throw ShapeError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// ---------------------------------------------------------------------------
// Kernel threading. Element-wise and matmul kernels may split rows across
// threads; each output element is always written by exactly one thread with a
// fixed reduction order, so results are bit-identical for any thread count.
// HLM_THREADS caps the pool.
// ---------------------------------------------------------------------------

namespace detail {
inline int default_threads() {
    if (const char* env = std::getenv("HLM_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace detail

inline int& kernel_threads() {
    static int n = detail::default_threads();
    return n;
}

inline void set_kernel_threads(int n) { kernel_threads() = n < 1 ? 1 : n; }

// body(begin, end) over [0, n), contiguous chunks. Runs inline when the work
// is small or only one thread is configured.
template <typename F>
void parallel_for(int64_t n, int64_t total_work, F&& body) {
    int threads = kernel_threads();
    if (n <= 1 || threads <= 1 || total_work < (1 << 21)) {
        body(0, n);
        return;
    }
    int use = static_cast<int>(std::min<int64_t>(threads, n));
    int64_t chunk = (n + use - 1) / use;
    std::vector<std::thread> pool;
    pool.reserve(use - 1);
    for (int t = 1; t < use; ++t) {
        int64_t b = t * chunk;
        int64_t e = std::min<int64_t>(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    body(0, std::min<int64_t>(n, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace hlm
