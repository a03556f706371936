#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssf {

/// Bad configuration or out-of-range parameter (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data: bad CSV rows, unknown categories, size mismatches.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File system failures (CLI exit code 2).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf in a loss or score (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary label: 0 = normal, 1 = abnormal.
using Label = int;
inline constexpr Label kNormal = 0;
inline constexpr Label kAbnormal = 1;

// Seeded randomness. All helpers are defined in terms of the raw 64-bit
// output so runs are reproducible independently of the standard library's
// distribution implementations.

/// SplitMix64 step, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Derives a child seed from a parent seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n), n > 0.
    std::size_t below(std::size_t n);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t s_[4];
};

/// Standard normal draw (Box-Muller on Rng::uniform).
double normal(Rng& rng);

/// Seeded uniform sample of `count` distinct indices from [0, n), returned
/// in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

}  // namespace ssf
