// Small shared utilities: vector/matrix helpers on flat doubles, errors,
// and a deterministic parallel-for (disjoint writes only, no reductions).
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mvbsde {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(what) {}
};

struct RegressionError : Error {
    explicit RegressionError(const std::string& what) : Error(what) {}
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2sq(const Vec& a) { return dot(a, a); }
inline double norm2(const Vec& a) { return std::sqrt(norm2sq(a)); }

inline Vec operator-(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec operator+(const Vec& a, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec operator*(double s, const Vec& a) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
}

inline void axpy(double s, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline bool all_finite(const Vec& a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double positive_part(double x) { return x > 0 ? x : 0; }

inline double clamp(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

// Frobenius norm of an m-by-k block stored row-major in a flat array.
inline double frob_norm(const double* z, int mk) {
    double s = 0;
    for (int i = 0; i < mk; ++i) s += z[i] * z[i];
    return std::sqrt(s);
}

// pow with the Gamma^0 == 1 convention used throughout the q-power
// inequalities (avoids 0^0 traps when q == 2 and the gap vanishes).
inline double gamma_pow(double base, double expo) {
    if (expo == 0.0) return 1.0;
    return std::pow(base, expo);
}

// n_p = (p-1) ^ 1
inline double np_const(double p) { return std::min(p - 1.0, 1.0); }

// delta_q = delta 1_{[1,2)}(q)
inline double delta_q_const(double delta, double q) {
    return (q >= 1.0 && q < 2.0) ? delta : 0.0;
}

// n_q = (q-1) ^ 1 = q-1 for q in [1,2]
inline double nq_const(double q) { return std::min(q - 1.0, 1.0); }

// Splits [0,n) into fixed-size chunks over `threads` workers. Each index is
// processed exactly once and workers write to disjoint slots, so the result
// is identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         int threads = 1) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t w = 0; w < nt; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace mvbsde
