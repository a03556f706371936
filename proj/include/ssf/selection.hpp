#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssf/drift.hpp"

namespace ssf {

enum class MaskRole { Old, New };

/// Per-sample selection weights in [0, 1]; >= 0.5 means selected.
struct MaskVector {
    std::vector<double> values;
    MaskRole role = MaskRole::Old;

    static constexpr double kThreshold = 0.5;

    std::size_t size() const { return values.size(); }
    bool selected(std::size_t i) const { return values[i] >= kThreshold; }
    std::size_t count_selected() const;
    std::size_t count_unselected() const { return size() - count_selected(); }
};

/// Normalized theta-bin histogram with an epsilon floor on every bin.
struct BinVector {
    std::vector<double> probabilities;
    std::size_t bins() const { return probabilities.size(); }
};

struct SelectionOpts {
    std::size_t bins = 20;        // theta
    double step_size = 0.5;
    std::size_t iterations = 300;
    double epsilon_floor = 1e-6;
    double bandwidth = 1.0;       // in units of one bin width
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Triangular-kernel histogram: sample i spreads weight_i over the bins in
/// proportion to max(0, 1 - |u|), u = (score_i - c_j) / h, h = bandwidth /
/// theta, c_j the bin centers over [0, 1] (each sample's kernel row sums to
/// one). The weighted mass is normalized, every bin gets epsilon_floor and
/// the vector is renormalized; all-zero weights give the uniform vector.
BinVector soft_histogram(std::span<const double> scores, std::span<const double> weights, std::size_t bins,
                         double bandwidth, double epsilon_floor);

/// sum_j P_j log(P_j / Q_j), natural log.
double kl_divergence(const BinVector& p, const BinVector& q);

/// dKL(P||Q)/dQ_j = -P_j / Q_j.
std::vector<double> kl_gradient_q(const BinVector& p, const BinVector& q);

/// Sparse kernel matrix of a fixed set of scores against the bin centers;
/// lets the mask optimizers evaluate the histogram and its gradient in
/// O(samples) per iteration.
class KernelHistogram {
public:
    KernelHistogram(std::span<const double> scores, std::size_t bins, double bandwidth, double epsilon_floor);

    std::size_t samples() const { return offsets_.size() - 1; }
    std::size_t bins() const { return bins_; }

    /// Unnormalized weighted bin masses (no floor).
    std::vector<double> raw(std::span<const double> weights) const;
    BinVector normalized(std::span<const double> weights) const;

    /// KL(target || H(weights)) and, optionally, its gradient w.r.t. the
    /// weights of samples [first, first + count).
    double kl_to(const BinVector& target, std::span<const double> weights, std::vector<double>* gradient,
                 std::size_t first, std::size_t count, double* total_mass = nullptr) const;

private:
    std::size_t bins_;
    double epsilon_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> bin_index_;
    std::vector<double> kernel_;
};

/// Per-sample uniform initialization in [lo, hi), seeded per sample key so
/// that permuting samples (with their keys) permutes the mask.
std::vector<double> seeded_mask(std::span<const std::uint64_t> keys, double lo, double hi, std::uint64_t seed);

/// Phase (i): choose old samples whose weighted histogram reconstructs the
/// new one. m^o starts in [0.5, 1]; projected gradient descent; returns the
/// best iterate. `old_keys` seed the initialization (positions if empty).
MaskVector optimize_old_mask(const ScoreSet& old_scores, const ScoreSet& new_scores, const SelectionOpts& opts,
                             std::span<const std::uint64_t> old_keys = {});

/// Phase (ii): with m^o fixed, choose new samples that fill the remaining
/// gap. m^n starts in [0, 0.5].
MaskVector optimize_new_mask(const ScoreSet& old_scores, const MaskVector& m_old, const ScoreSet& new_scores,
                             const SelectionOpts& opts, std::span<const std::uint64_t> new_keys = {});

/// Loss values used by the optimizers, exposed for tests and diagnostics.
double old_mask_loss(const ScoreSet& old_scores, const ScoreSet& new_scores, std::span<const double> m_old,
                     const SelectionOpts& opts);
double new_mask_loss(const ScoreSet& old_scores, std::span<const double> m_old, const ScoreSet& new_scores,
                     std::span<const double> m_new, const SelectionOpts& opts);

/// Uniform [0, 1) masks for the "w/o sample selection" ablation.
MaskVector random_mask(std::size_t n, MaskRole role, std::uint64_t seed);

}  // namespace ssf
