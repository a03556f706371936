#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ssf {

enum class ScoreSource { Buffer, Chunk };

/// Discrete realization of a learned distribution: {f(x_i)} over a sample
/// collection.
struct ScoreSet {
    std::vector<double> scores;
    ScoreSource source = ScoreSource::Buffer;
};

struct KsResult {
    double statistic = 0.0;  // D
    double p_value = 1.0;
};

struct DriftVerdict {
    double statistic = 0.0;
    double p_value = 1.0;
    double alpha = 0.05;
    bool drifted = false;
};

/// sup_x |ECDF_a(x) - ECDF_b(x)|, exact under ties.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Asymptotic Kolmogorov tail 2 sum (-1)^(j-1) exp(-2 j^2 l^2) with
/// l = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D, ne = n m / (n + m).
double ks_pvalue_asymptotic(double d, std::size_t n, std::size_t m);

/// Exact P(D >= d) under the null (no ties) by lattice-path counting.
double ks_pvalue_exact(double d, std::size_t n, std::size_t m);

/// Sample sizes up to this product use the exact null distribution.
inline constexpr std::size_t kExactKsLimit = 10000;

/// Two-sample test. Requires |a|, |b| >= 2 and scores in [0, 1].
KsResult ks_test(const ScoreSet& a, const ScoreSet& b);

/// h(p): drifted iff p < alpha.
DriftVerdict detect_drift(const ScoreSet& a, const ScoreSet& b, double alpha);

}  // namespace ssf
