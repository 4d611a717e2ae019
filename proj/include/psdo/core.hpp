#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace psdo {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr Complex I{0.0, 1.0};

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition or argument-domain violation (bad grid size, inadmissible scale, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Failure while evaluating a symbol expression (division by zero, unbound variable, log of zero).
class EvalError : public Error {
public:
    using Error::Error;
};

/// Largest singular value.
inline double operator_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::BDCSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

/// Singular values in descending order.
inline RealVector singular_values(const Matrix& a) {
    if (a.size() == 0) return RealVector{};
    Eigen::BDCSVD<Matrix> svd(a);
    return svd.singularValues();
}

inline double smallest_singular_value(const Matrix& a) {
    RealVector s = singular_values(a);
    return s.size() ? s(s.size() - 1) : 0.0;
}

/// Signed Fourier mode for FFT-ordered index m of an N-point grid: 0..N/2-1, -N/2..-1.
inline int signed_mode(int m, int n) { return m < n / 2 ? m : m - n; }

/// FFT-ordered index of signed mode k.
inline int mode_index(int k, int n) { return k >= 0 ? k : k + n; }

/// Worker count: PSDO_THREADS if set and positive, else hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("PSDO_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(env, &end, 10);
        if (end != env && n > 0) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs body(i) for i in [0, n). Every index is visited exactly once; results written
/// by index keep the output independent of the worker count.
inline void parallel_for(int n, const std::function<void(int)>& body) {
    unsigned workers = std::min<unsigned>(thread_budget(), static_cast<unsigned>(std::max(n, 0)));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                if (failed) return;
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need at least two paired samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double lx = std::log(x[i]);
        double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace psdo
