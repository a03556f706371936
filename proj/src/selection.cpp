#include "ssf/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssf/common.hpp"

namespace ssf {

std::size_t MaskVector::count_selected() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v >= kThreshold; }));
}

void SelectionOpts::validate() const {
    if (bins < 2) throw ConfigError("selection.bins must be at least 2");
    if (!(step_size > 0.0)) throw ConfigError("selection.step_size must be positive");
    if (!(epsilon_floor > 0.0 && epsilon_floor <= 1e-3)) throw ConfigError("selection.epsilon_floor must lie in (0, 1e-3]");
    if (!(bandwidth > 0.0)) throw ConfigError("selection.bandwidth must be positive");
}

KernelHistogram::KernelHistogram(std::span<const double> scores, std::size_t bins, double bandwidth,
                                 double epsilon_floor)
    : bins_(bins), epsilon_(epsilon_floor) {
    if (bins < 2) throw ConfigError("soft_histogram: theta must be at least 2");
    const double width = 1.0 / static_cast<double>(bins);
    const double h = bandwidth * width;
    offsets_.reserve(scores.size() + 1);
    offsets_.push_back(0);
    for (const double s : scores) {
        // Only centers within h of s carry kernel mass.
        const double lo = (s - h) / width - 0.5;
        const double hi = (s + h) / width - 0.5;
        const auto j0 = static_cast<long>(std::max(0.0, std::floor(lo)));
        const auto j1 = static_cast<long>(std::min(static_cast<double>(bins - 1), std::ceil(hi)));
        for (long j = j0; j <= j1; ++j) {
            const double c = (static_cast<double>(j) + 0.5) * width;
            const double k = 1.0 - std::abs((s - c) / h);
            if (k > 0.0) {
                bin_index_.push_back(static_cast<std::size_t>(j));
                kernel_.push_back(k);
            }
        }
        // Unit mass per sample: beyond the outermost centers the kernel
        // would otherwise lose mass off the edge of [0, 1].
        const std::size_t begin = offsets_.back();
        const double row = std::accumulate(kernel_.begin() + static_cast<long>(begin), kernel_.end(), 0.0);
        for (std::size_t e = begin; e < kernel_.size(); ++e) kernel_[e] /= row;
        offsets_.push_back(kernel_.size());
    }
}

std::vector<double> KernelHistogram::raw(std::span<const double> weights) const {
    if (weights.size() != samples()) throw DataError("soft_histogram: scores and weights differ in length");
    std::vector<double> r(bins_, 0.0);
    for (std::size_t i = 0; i < samples(); ++i) {
        const double w = weights[i];
        if (w == 0.0) continue;
        for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) r[bin_index_[e]] += w * kernel_[e];
    }
    return r;
}

namespace {

// Q_l = (r_l / S + eps) / (1 + theta eps); uniform when S = 0.
std::vector<double> floor_and_normalize(const std::vector<double>& r, double eps, double* mass) {
    const double total = std::accumulate(r.begin(), r.end(), 0.0);
    if (mass) *mass = total;
    const auto theta = static_cast<double>(r.size());
    std::vector<double> q(r.size());
    for (std::size_t l = 0; l < r.size(); ++l)
        q[l] = total > 0.0 ? (r[l] / total + eps) / (1.0 + theta * eps) : 1.0 / theta;
    return q;
}

}  // namespace

BinVector KernelHistogram::normalized(std::span<const double> weights) const {
    return BinVector{floor_and_normalize(raw(weights), epsilon_, nullptr)};
}

double KernelHistogram::kl_to(const BinVector& target, std::span<const double> weights, std::vector<double>* gradient,
                              std::size_t first, std::size_t count, double* total_mass) const {
    if (target.bins() != bins_) throw DataError("kl_divergence: bin counts differ");
    const auto r = raw(weights);
    double total = 0.0;
    const auto q = floor_and_normalize(r, epsilon_, &total);
    if (total_mass) *total_mass = total;
    double loss = 0.0;
    for (std::size_t l = 0; l < bins_; ++l) loss += target.probabilities[l] * std::log(target.probabilities[l] / q[l]);
    if (gradient) {
        gradient->assign(count, 0.0);
        if (total <= 0.0) return loss;
        // g_l = dL/da_l for a = r / S; dL/dr_m = (g_m - sum_l g_l a_l) / S.
        const double scale = 1.0 + static_cast<double>(bins_) * epsilon_;
        std::vector<double> g(bins_), dr(bins_);
        double mean = 0.0;
        for (std::size_t l = 0; l < bins_; ++l) {
            g[l] = -target.probabilities[l] / (q[l] * scale);
            mean += g[l] * r[l] / total;
        }
        for (std::size_t l = 0; l < bins_; ++l) dr[l] = (g[l] - mean) / total;
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t s = first + i;
            double acc = 0.0;
            for (std::size_t e = offsets_[s]; e < offsets_[s + 1]; ++e) acc += kernel_[e] * dr[bin_index_[e]];
            (*gradient)[i] = acc;
        }
    }
    return loss;
}

BinVector soft_histogram(std::span<const double> scores, std::span<const double> weights, std::size_t bins,
                         double bandwidth, double epsilon_floor) {
    if (scores.size() != weights.size()) throw DataError("soft_histogram: scores and weights differ in length");
    return KernelHistogram(scores, bins, bandwidth, epsilon_floor).normalized(weights);
}

double kl_divergence(const BinVector& p, const BinVector& q) {
    if (p.bins() != q.bins()) throw DataError("kl_divergence: bin counts differ");
    double s = 0.0;
    for (std::size_t j = 0; j < p.bins(); ++j) s += p.probabilities[j] * std::log(p.probabilities[j] / q.probabilities[j]);
    return s;
}

std::vector<double> kl_gradient_q(const BinVector& p, const BinVector& q) {
    if (p.bins() != q.bins()) throw DataError("kl_divergence: bin counts differ");
    std::vector<double> g(p.bins());
    for (std::size_t j = 0; j < p.bins(); ++j) g[j] = -p.probabilities[j] / q.probabilities[j];
    return g;
}

std::vector<double> seeded_mask(std::span<const std::uint64_t> keys, double lo, double hi, std::uint64_t seed) {
    std::vector<double> m;
    m.reserve(keys.size());
    for (const auto k : keys) m.push_back(Rng(derive_seed(seed, k)).uniform(lo, hi));
    return m;
}

namespace {

std::vector<std::uint64_t> keys_or_positions(std::span<const std::uint64_t> keys, std::size_t n) {
    if (!keys.empty()) {
        if (keys.size() != n) throw DataError("mask optimizer: key count does not match sample count");
        return {keys.begin(), keys.end()};
    }
    std::vector<std::uint64_t> k(n);
    std::iota(k.begin(), k.end(), std::uint64_t{0});
    return k;
}

constexpr std::uint64_t kOldInitTag = 0x6f6c64;  // "old"
constexpr std::uint64_t kNewInitTag = 0x6e6577;  // "new"

// Projected gradient descent over weights[first, first + count). The step
// is scaled by the histogram's total mass so that its size does not depend
// on how many samples share the histogram.
void descend(const KernelHistogram& hist, const BinVector& target, std::vector<double>& weights, std::size_t first,
             std::size_t count, const SelectionOpts& opts) {
    std::vector<double> best(weights.begin() + first, weights.begin() + first + count);
    double best_loss = INFINITY;
    std::vector<double> grad;
    for (std::size_t it = 0;; ++it) {
        double total = 0.0;
        const double loss = hist.kl_to(target, weights, &grad, first, count, &total);
        if (!std::isfinite(loss)) throw NumericalError("mask optimization: non-finite loss at iteration " + std::to_string(it));
        if (loss < best_loss) {
            best_loss = loss;
            std::copy(weights.begin() + first, weights.begin() + first + count, best.begin());
        }
        if (it == opts.iterations) break;
        const double eta = opts.step_size * total;
        for (std::size_t i = 0; i < count; ++i) {
            auto& w = weights[first + i];
            w = std::clamp(w - eta * grad[i], 0.0, 1.0);
        }
    }
    std::copy(best.begin(), best.end(), weights.begin() + first);
}

}  // namespace

MaskVector optimize_old_mask(const ScoreSet& old_scores, const ScoreSet& new_scores, const SelectionOpts& opts,
                             std::span<const std::uint64_t> old_keys) {
    opts.validate();
    if (old_scores.scores.empty() || new_scores.scores.empty()) throw DataError("optimize_old_mask: empty score set");
    const auto keys = keys_or_positions(old_keys, old_scores.scores.size());
    const std::vector<double> ones(new_scores.scores.size(), 1.0);
    const auto target = soft_histogram(new_scores.scores, ones, opts.bins, opts.bandwidth, opts.epsilon_floor);
    const KernelHistogram hist(old_scores.scores, opts.bins, opts.bandwidth, opts.epsilon_floor);

    auto m = seeded_mask(keys, 0.5, 1.0, derive_seed(opts.rng_seed, kOldInitTag));
    descend(hist, target, m, 0, m.size(), opts);
    return MaskVector{std::move(m), MaskRole::Old};
}

MaskVector optimize_new_mask(const ScoreSet& old_scores, const MaskVector& m_old, const ScoreSet& new_scores,
                             const SelectionOpts& opts, std::span<const std::uint64_t> new_keys) {
    opts.validate();
    if (old_scores.scores.empty() || new_scores.scores.empty()) throw DataError("optimize_new_mask: empty score set");
    if (m_old.size() != old_scores.scores.size()) throw DataError("optimize_new_mask: m_old size mismatch");
    const std::size_t n_old = old_scores.scores.size();
    const std::size_t n_new = new_scores.scores.size();
    const auto keys = keys_or_positions(new_keys, n_new);

    const std::vector<double> ones(n_new, 1.0);
    const auto target = soft_histogram(new_scores.scores, ones, opts.bins, opts.bandwidth, opts.epsilon_floor);

    // (m^o . P^o) (+) (m^n . P^n): one weighted histogram over the
    // concatenated samples, only the new block is optimized.
    std::vector<double> all_scores(old_scores.scores);
    all_scores.insert(all_scores.end(), new_scores.scores.begin(), new_scores.scores.end());
    const KernelHistogram hist(all_scores, opts.bins, opts.bandwidth, opts.epsilon_floor);

    std::vector<double> weights(m_old.values);
    const auto init = seeded_mask(keys, 0.0, 0.5, derive_seed(opts.rng_seed, kNewInitTag));
    weights.insert(weights.end(), init.begin(), init.end());
    descend(hist, target, weights, n_old, n_new, opts);
    return MaskVector{std::vector<double>(weights.begin() + static_cast<long>(n_old), weights.end()), MaskRole::New};
}

double old_mask_loss(const ScoreSet& old_scores, const ScoreSet& new_scores, std::span<const double> m_old,
                     const SelectionOpts& opts) {
    const std::vector<double> ones(new_scores.scores.size(), 1.0);
    const auto target = soft_histogram(new_scores.scores, ones, opts.bins, opts.bandwidth, opts.epsilon_floor);
    return kl_divergence(target, soft_histogram(old_scores.scores, m_old, opts.bins, opts.bandwidth, opts.epsilon_floor));
}

double new_mask_loss(const ScoreSet& old_scores, std::span<const double> m_old, const ScoreSet& new_scores,
                     std::span<const double> m_new, const SelectionOpts& opts) {
    const std::vector<double> ones(new_scores.scores.size(), 1.0);
    const auto target = soft_histogram(new_scores.scores, ones, opts.bins, opts.bandwidth, opts.epsilon_floor);
    std::vector<double> scores(old_scores.scores);
    scores.insert(scores.end(), new_scores.scores.begin(), new_scores.scores.end());
    std::vector<double> weights(m_old.begin(), m_old.end());
    weights.insert(weights.end(), m_new.begin(), m_new.end());
    return kl_divergence(target, soft_histogram(scores, weights, opts.bins, opts.bandwidth, opts.epsilon_floor));
}

MaskVector random_mask(std::size_t n, MaskRole role, std::uint64_t seed) {
    Rng rng(seed);
    MaskVector m{std::vector<double>(n), role};
    for (auto& v : m.values) v = rng.uniform();
    return m;
}

}  // namespace ssf
