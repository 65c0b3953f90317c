#pragma once
// Statistical helpers for tests: rank correlation, two-sample KS, discrete
// cross-correlation, and binomial tolerance bands. Implemented here rather
// than in the library because only the test oracles need them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace teststats {

// Ranks with ties averaged (1-based).
inline std::vector<double> ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> r(values.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    double ne = std::sqrt(na * nb / (na + nb));
    double lambda = (ne + 0.12 + 0.11 / ne) * d;
    double p = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        p += sign * 2.0 * std::exp(-2.0 * lambda * lambda * k * k);
        sign = -sign;
    }
    return std::clamp(p, 0.0, 1.0);
}

// Lag (in buckets) of the peak normalized cross-correlation of y against x,
// searched over [min_lag, max_lag]: positive means y trails x.
inline int xcorr_peak_lag(const std::vector<double>& x, const std::vector<double>& y,
                          int min_lag, int max_lag) {
    int best_lag = min_lag;
    double best = -2.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < x.size(); ++i) {
            long long j = static_cast<long long>(i) + lag;
            if (j < 0 || j >= static_cast<long long>(y.size())) continue;
            xs.push_back(x[i]);
            ys.push_back(y[static_cast<std::size_t>(j)]);
        }
        if (xs.size() < 2) continue;
        double c = pearson(xs, ys);
        if (c > best) {
            best = c;
            best_lag = lag;
        }
    }
    return best_lag;
}

// True when an observed proportion sits within 3 sigma of a binomial(p).
inline bool within_3sigma(double observed, double p, std::size_t trials) {
    double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    return std::abs(observed - p) <= 3.0 * sigma;
}

inline double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

}  // namespace teststats
