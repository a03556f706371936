#pragma once

// Synthetic data shared by the unit and acceptance tests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssf/common.hpp"
#include "ssf/dataset.hpp"
#include "ssf/pipeline.hpp"

namespace ssf::testing {

struct Blob {
    double cx, cy, sd;
};

inline FeatureRecord draw(Rng& rng, const Blob& b, Label y, std::size_t index) {
    FeatureRecord r;
    r.features = {std::clamp(b.cx + b.sd * normal(rng), 0.0, 1.0), std::clamp(b.cy + b.sd * normal(rng), 0.0, 1.0)};
    r.truth_label = y;
    r.stream_index = index;
    return r;
}

/// Two-class 2-D Gaussian stream. The first `bootstrap` rows and chunks
/// before `drift_chunk` (1-based) place the abnormal class at `before`;
/// from `drift_chunk` on it sits at `after`.
struct DriftScenario {
    std::size_t bootstrap = 800;
    std::size_t chunk_size = 400;
    std::size_t chunks = 6;
    std::size_t drift_chunk = 3;
    double abnormal_share = 0.4;
    Blob normal{0.30, 0.50, 0.06};
    Blob before{0.75, 0.50, 0.06};
    Blob after{0.30, 0.85, 0.06};
    std::size_t test_size = 1000;

    std::vector<FeatureRecord> stream(std::uint64_t seed) const {
        Rng rng(seed);
        std::vector<FeatureRecord> out;
        const std::size_t total = bootstrap + chunks * chunk_size;
        for (std::size_t i = 0; i < total; ++i) {
            const bool drifted = i >= bootstrap + (drift_chunk - 1) * chunk_size;
            const bool abnormal = rng.uniform() < abnormal_share;
            out.push_back(draw(rng, abnormal ? (drifted ? after : before) : normal, abnormal ? kAbnormal : kNormal, i));
        }
        return out;
    }

    std::vector<FeatureRecord> test(std::uint64_t seed, bool drifted) const {
        Rng rng(seed);
        std::vector<FeatureRecord> out;
        for (std::size_t i = 0; i < test_size; ++i) {
            const bool abnormal = rng.uniform() < abnormal_share;
            out.push_back(draw(rng, abnormal ? (drifted ? after : before) : normal, abnormal ? kAbnormal : kNormal, i));
        }
        return out;
    }

    ExperimentConfig config() const {
        ExperimentConfig c;
        c.dataset = DatasetName::Custom;
        c.stream.bootstrap_prefix = true;
        c.stream.bootstrap_fraction =
            static_cast<double>(bootstrap) / static_cast<double>(bootstrap + chunks * chunk_size);
        c.stream.chunk_size = chunk_size;
        c.stream.label_budget_fraction = 0.05;
        c.detector.layer_sizes = {2, 16, 2, 1};
        c.detector.variant = Variant::AeClassifier;
        c.detector.learning_rate = 0.1;
        c.detector.batch_size = 32;
        c.detector.epochs_per_fit = 10;
        c.detector.bootstrap_epochs = 60;
        c.selection.iterations = 200;
        c.seeds = {1};
        c.repetitions = 1;
        return c;
    }
};

}  // namespace ssf::testing
