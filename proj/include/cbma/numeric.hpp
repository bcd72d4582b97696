#ifndef CBMA_NUMERIC_HPP
#define CBMA_NUMERIC_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cbma/errors.hpp"

namespace cbma {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(a_i)), stable under large negative arguments.
// Returns -inf when every argument is -inf.
inline double log_sum_exp(std::span<const double> args) {
    double m = kNegInf;
    for (double a : args) m = std::max(m, a);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double a : args) s += std::exp(a - m);
    return m + std::log(s);
}

inline double log_sum_exp(const Eigen::VectorXd& args) {
    return log_sum_exp(std::span<const double>(args.data(), static_cast<size_t>(args.size())));
}

inline double log_sum_exp(double a, double b) {
    double m = std::max(a, b);
    if (!std::isfinite(m)) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log N(y | mu, sd^2)
inline double gaussian_logpdf(double y, double mu, double sd) {
    const double z = (y - mu) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
}

// Deterministic stream splitting for per-repetition RNGs.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct SummaryStats {
    double mean = 0, se = 0, median = 0, q1 = 0, q3 = 0, iqr = 0;
};

// Quartiles by linear interpolation (type-7), SE = sample sd / sqrt(n).
inline SummaryStats summarize(std::vector<double> v) {
    SummaryStats s;
    const auto n = v.size();
    if (n == 0) return s;
    std::sort(v.begin(), v.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(n - 1);
        const auto lo = static_cast<size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, n - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(n);
    if (n > 1) {
        double ss = 0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
    }
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.iqr = s.q3 - s.q1;
    return s;
}

} // namespace cbma

#endif
