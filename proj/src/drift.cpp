#include "ssf/drift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "ssf/common.hpp"

namespace ssf {

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n = static_cast<double>(x.size());
    const double m = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    // Evaluate the gap just after each distinct merged value.
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return d;
}

double ks_pvalue_asymptotic(double d, std::size_t n, std::size_t m) {
    const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
    const double sq = std::sqrt(ne);
    const double lambda = (sq + 0.12 + 0.11 / sq) * d;
    // Below this the tail equals 1 to double precision and the alternating
    // series needs millions of terms.
    if (lambda < 0.05) return 1.0;
    const double a2 = -2.0 * lambda * lambda;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j < 100000; ++j) {
        const double term = 2.0 * sign * std::exp(a2 * j * j);
        sum += term;
        if (std::abs(term) < 1e-10) break;
        sign = -sign;
    }
    return std::clamp(sum, 0.0, 1.0);
}

double ks_pvalue_exact(double d, std::size_t n, std::size_t m) {
    // Paths (i, j) from (0,0) to (n,m); a path "escapes" when
    // |i/n - j/m| >= d, i.e. |i*m - j*n| >= d*n*m (an integer at attainable d).
    const auto nm = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(m);
    const auto threshold = static_cast<std::int64_t>(std::llround(d * static_cast<double>(nm)));
    if (threshold <= 0) return 1.0;
    auto inside = [&](std::size_t i, std::size_t j) {
        const auto g = static_cast<std::int64_t>(i) * static_cast<std::int64_t>(m) -
                       static_cast<std::int64_t>(j) * static_cast<std::int64_t>(n);
        return std::llabs(g) < threshold;
    };
    // Probability mass of staying inside, stepping through the lattice with
    // the uniform-path transition probabilities so values stay in [0, 1].
    std::vector<double> row(m + 1, 0.0);
    row[0] = 1.0;
    for (std::size_t j = 1; j <= m; ++j) {
        const double step = static_cast<double>(m - j + 1) / static_cast<double>(n + m - j + 1);
        row[j] = inside(0, j) ? row[j - 1] * step : 0.0;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        std::vector<double> next(m + 1, 0.0);
        for (std::size_t j = 0; j <= m; ++j) {
            if (!inside(i, j)) continue;
            // P(arrive at (i,j)) = P(i-1,j) * P(x-step) + P(i,j-1) * P(y-step);
            // from (a, b) the next step is an x-step with probability
            // (n - a) / (n + m - a - b).
            double v = row[j] * static_cast<double>(n - (i - 1)) / static_cast<double>(n + m - (i - 1) - j);
            if (j > 0) v += next[j - 1] * static_cast<double>(m - (j - 1)) / static_cast<double>(n + m - i - (j - 1));
            next[j] = v;
        }
        row.swap(next);
    }
    return std::clamp(1.0 - row[m], 0.0, 1.0);
}

KsResult ks_test(const ScoreSet& a, const ScoreSet& b) {
    if (a.scores.size() < 2 || b.scores.size() < 2) throw DataError("ks_test: each score set needs at least 2 scores");
    for (const auto* s : {&a.scores, &b.scores})
        for (double v : *s)
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("ks_test: scores must lie in [0, 1]");
    KsResult r;
    r.statistic = ks_statistic(a.scores, b.scores);
    const std::size_t n = a.scores.size();
    const std::size_t m = b.scores.size();
    r.p_value = n * m <= kExactKsLimit ? ks_pvalue_exact(r.statistic, std::min(n, m), std::max(n, m))
                                       : ks_pvalue_asymptotic(r.statistic, n, m);
    return r;
}

DriftVerdict detect_drift(const ScoreSet& a, const ScoreSet& b, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    const auto r = ks_test(a, b);
    return DriftVerdict{r.statistic, r.p_value, alpha, r.p_value < alpha};
}

}  // namespace ssf
