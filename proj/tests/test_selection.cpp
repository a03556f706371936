#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssf/common.hpp"
#include "ssf/selection.hpp"
#include "support/gradcheck.hpp"

using namespace ssf;

namespace {

std::vector<double> draws(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

double mean_over(const std::vector<double>& v, std::size_t first, std::size_t last) {
    return std::accumulate(v.begin() + static_cast<long>(first), v.begin() + static_cast<long>(last), 0.0) /
           static_cast<double>(last - first);
}

BinVector random_bins(Rng& rng, std::size_t n) {
    BinVector b{std::vector<double>(n)};
    for (auto& p : b.probabilities) p = rng.uniform(1e-3, 1.0);
    const double s = std::accumulate(b.probabilities.begin(), b.probabilities.end(), 0.0);
    for (auto& p : b.probabilities) p /= s;
    return b;
}

}  // namespace

TEST_SUITE("selection") {

TEST_CASE("all-zero weights give the uniform histogram") {
    const std::vector<double> s = {0.1, 0.4, 0.8}, w = {0.0, 0.0, 0.0};
    const auto h = soft_histogram(s, w, 5, 1.0, 1e-6);
    for (const double p : h.probabilities) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("a score on the bin boundary splits evenly") {
    const std::vector<double> s = {0.5}, w = {1.0};
    const auto h = soft_histogram(s, w, 2, 1.0, 1e-6);
    CHECK(h.probabilities[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(h.probabilities[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hand-computed kernel allocation") {
    // theta = 10, centers 0.05, 0.15, ..., h = 0.1. Score 0.1 sits halfway
    // between bins 0 and 1, score 0.9 halfway between bins 8 and 9.
    const std::vector<double> s = {0.1, 0.9}, w = {1.0, 1.0};
    const double eps = 1e-6;
    const auto h = soft_histogram(s, w, 10, 1.0, eps);
    const double share[10] = {0.25, 0.25, 0, 0, 0, 0, 0, 0, 0.25, 0.25};
    for (int j = 0; j < 10; ++j) CHECK(std::abs(h.probabilities[j] - (share[j] + eps) / (1.0 + 10 * eps)) < 1e-9);

    // An off-center score: 0.12 gives bin 0 weight 0.3 and bin 1 weight 0.7.
    const std::vector<double> s2 = {0.12}, w2 = {0.5};
    const auto h2 = soft_histogram(s2, w2, 10, 1.0, eps);
    CHECK(std::abs(h2.probabilities[0] - (0.3 + eps) / (1.0 + 10 * eps)) < 1e-9);
    CHECK(std::abs(h2.probabilities[1] - (0.7 + eps) / (1.0 + 10 * eps)) < 1e-9);
}

TEST_CASE("edge scores keep their full mass") {
    const std::vector<double> s = {0.0, 1.0}, w = {1.0, 1.0};
    const auto h = soft_histogram(s, w, 4, 1.0, 1e-6);
    CHECK(h.probabilities[0] == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(h.probabilities[3] == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("KL divergence closed form, identity and Gibbs' inequality") {
    const BinVector p{{0.5, 0.5}}, q{{0.25, 0.75}};
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK(kl_divergence(p, q) == doctest::Approx(0.143841).epsilon(1e-5));
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + rng.below(30);
        const auto a = random_bins(rng, n);
        const auto b = random_bins(rng, n);
        CHECK(std::abs(kl_divergence(a, a)) < 1e-12);
        CHECK(kl_divergence(a, b) >= 0.0);
    }
    const auto g = kl_gradient_q(p, q);
    CHECK(g[0] == doctest::Approx(-2.0));
}

TEST_CASE("mask gradient matches central differences") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        const std::size_t theta = 2 + rng.below(7);
        const auto scores = draws(rng, n, 0.0, 1.0);
        const auto target_scores = draws(rng, 1 + rng.below(50), 0.0, 1.0);
        const std::vector<double> ones(target_scores.size(), 1.0);
        const double bw = rng.uniform(0.5, 2.0);
        const auto target = soft_histogram(target_scores, ones, theta, bw, 1e-6);
        const KernelHistogram hist(scores, theta, bw, 1e-6);
        const auto w = draws(rng, n, 0.05, 1.0);
        std::vector<double> grad;
        hist.kl_to(target, w, &grad, 0, n);
        auto f = [&](const std::vector<double>& x) { return hist.kl_to(target, x, nullptr, 0, n); };
        INFO("trial " << trial << " n " << n << " theta " << theta);
        CHECK(testing::max_relative_error(f, w, grad, 1e-6) < 1e-4);

        // Partial gradients over a slice agree with the full gradient.
        const std::size_t first = rng.below(n), count = n - first;
        std::vector<double> part;
        hist.kl_to(target, w, &part, first, count);
        for (std::size_t i = 0; i < count; ++i) CHECK(part[i] == doctest::Approx(grad[first + i]).epsilon(1e-12));
    }
}

TEST_CASE("old mask on identical sets keeps the set") {
    Rng rng(5);
    const ScoreSet a{draws(rng, 300, 0.0, 1.0), ScoreSource::Buffer};
    const ScoreSet b{a.scores, ScoreSource::Chunk};
    SelectionOpts opts;
    const auto m = optimize_old_mask(a, b, opts);
    const std::vector<double> ones(300, 1.0);
    CHECK(old_mask_loss(a, b, m.values, opts) <= old_mask_loss(a, b, ones, opts) + 1e-9);
    CHECK(static_cast<double>(m.count_selected()) >= 0.9 * 300.0);
}

TEST_CASE("old mask suppresses an outlier cluster absent from the new set") {
    Rng rng(6);
    auto shared = draws(rng, 200, 0.1, 0.7);
    ScoreSet old_scores{shared, ScoreSource::Buffer};
    for (int i = 0; i < 40; ++i) old_scores.scores.push_back(0.99);
    const ScoreSet new_scores{shared, ScoreSource::Chunk};
    const auto m = optimize_old_mask(old_scores, new_scores, SelectionOpts{});
    CHECK(mean_over(m.values, 200, 240) < mean_over(m.values, 0, 200));
    CHECK(m.count_unselected() >= 40);
}

TEST_CASE("zero iterations return the initialization") {
    Rng rng(8);
    const ScoreSet a{draws(rng, 50, 0.0, 1.0), ScoreSource::Buffer};
    const ScoreSet b{draws(rng, 60, 0.0, 1.0), ScoreSource::Chunk};
    SelectionOpts opts;
    opts.iterations = 0;
    const auto mo = optimize_old_mask(a, b, opts);
    for (const double v : mo.values) CHECK((v >= 0.5 && v <= 1.0));
    CHECK(mo.count_selected() == 50);
    const auto mn = optimize_new_mask(a, mo, b, opts);
    for (const double v : mn.values) CHECK((v >= 0.0 && v <= 0.5));
    CHECK(mn.count_selected() == 0);
}

TEST_CASE("new mask needs nothing when the old set already explains the chunk") {
    Rng rng(9);
    const auto s = draws(rng, 200, 0.0, 1.0);
    const ScoreSet old_scores{s, ScoreSource::Buffer}, new_scores{s, ScoreSource::Chunk};
    const MaskVector m_old{std::vector<double>(200, 1.0), MaskRole::Old};
    SelectionOpts opts;
    const auto mn = optimize_new_mask(old_scores, m_old, new_scores, opts);
    const std::vector<double> zeros(200, 0.0);
    CHECK(std::abs(new_mask_loss(old_scores, m_old.values, new_scores, mn.values, opts) -
                   new_mask_loss(old_scores, m_old.values, new_scores, zeros, opts)) < 1e-6);
}

TEST_CASE("new mask favours a novel cluster") {
    Rng rng(10);
    const auto shared = draws(rng, 200, 0.4, 0.9);
    ScoreSet old_scores{shared, ScoreSource::Buffer};
    ScoreSet new_scores{shared, ScoreSource::Chunk};
    for (int i = 0; i < 60; ++i) new_scores.scores.push_back(0.05 + 0.01 * rng.uniform(-1.0, 1.0));
    SelectionOpts opts;
    const auto mo = optimize_old_mask(old_scores, new_scores, opts);
    const auto mn = optimize_new_mask(old_scores, mo, new_scores, opts);
    CHECK(mean_over(mn.values, 200, 260) > mean_over(mn.values, 0, 200));
    CHECK(mn.count_selected() >= 50);
}

TEST_CASE("masks stay in [0,1] and the best loss never exceeds the start") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const ScoreSet a{draws(rng, 20 + rng.below(100), 0.0, 1.0), ScoreSource::Buffer};
        const ScoreSet b{draws(rng, 20 + rng.below(100), rng.uniform(0.0, 0.5), 1.0), ScoreSource::Chunk};
        SelectionOpts opts;
        opts.rng_seed = static_cast<std::uint64_t>(trial);
        opts.step_size = rng.uniform(0.1, 5.0);
        opts.iterations = 50;
        auto zero = opts;
        zero.iterations = 0;
        const auto m0 = optimize_old_mask(a, b, zero);
        const auto m = optimize_old_mask(a, b, opts);
        for (const double v : m.values) CHECK((v >= 0.0 && v <= 1.0));
        CHECK(old_mask_loss(a, b, m.values, opts) <= old_mask_loss(a, b, m0.values, opts));
        // More iterations can only improve the best iterate.
        auto more = opts;
        more.iterations = 100;
        CHECK(old_mask_loss(a, b, optimize_old_mask(a, b, more).values, opts) <= old_mask_loss(a, b, m.values, opts));

        const auto n0 = optimize_new_mask(a, m, b, zero);
        const auto n = optimize_new_mask(a, m, b, opts);
        for (const double v : n.values) CHECK((v >= 0.0 && v <= 1.0));
        CHECK(new_mask_loss(a, m.values, b, n.values, opts) <= new_mask_loss(a, m.values, b, n0.values, opts));
    }
}

TEST_CASE("permuting samples with their keys permutes the masks") {
    Rng rng(13);
    const std::size_t n = 80;
    const ScoreSet a{draws(rng, n, 0.0, 1.0), ScoreSource::Buffer};
    const ScoreSet b{draws(rng, 70, 0.2, 1.0), ScoreSource::Chunk};
    std::vector<std::uint64_t> keys(n);
    std::iota(keys.begin(), keys.end(), std::uint64_t{1000});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    ScoreSet pa{std::vector<double>(n), ScoreSource::Buffer};
    std::vector<std::uint64_t> pkeys(n);
    for (std::size_t i = 0; i < n; ++i) {
        pa.scores[i] = a.scores[perm[i]];
        pkeys[i] = keys[perm[i]];
    }
    SelectionOpts opts;
    opts.iterations = 100;
    const auto m = optimize_old_mask(a, b, opts, keys);
    const auto pm = optimize_old_mask(pa, b, opts, pkeys);
    // Equal up to summation order inside the histograms.
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(pm.values[i] - m.values[perm[i]]) < 1e-4);
}

TEST_CASE("random masks are seeded uniforms") {
    const auto a = random_mask(100, MaskRole::New, 4);
    CHECK(a.values == random_mask(100, MaskRole::New, 4).values);
    for (const double v : a.values) CHECK((v >= 0.0 && v < 1.0));
    CHECK(a.role == MaskRole::New);
}

TEST_CASE("options are validated") {
    SelectionOpts o;
    o.bins = 1;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    o = SelectionOpts{};
    o.epsilon_floor = 0.0;
    CHECK_THROWS_AS(o.validate(), ConfigError);
}

}  // TEST_SUITE
