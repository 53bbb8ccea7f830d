#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file contents (OBJ, GMAP, raster table, JSON).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A linear system that could not be factorized.
class SingularSystem : public Error {
public:
    using Error::Error;
};

/// Worker count for the per-element loops. Read from GMAP_THREADS; defaults to 1.
inline unsigned thread_count() {
    if (const char* env = std::getenv("GMAP_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) {
            const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
            return static_cast<unsigned>(std::min<long>(v, hw));
        }
    }
    return 1;
}

/// Runs fn(i) for i in [0, n). Each index must write only its own outputs, so the result
/// does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(thread_count(), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn, &err = errors[w]] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace gmap
