#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ssf/common.hpp"
#include "ssf/dataset.hpp"
#include "ssf/detector.hpp"
#include "ssf/drift.hpp"
#include "ssf/selection.hpp"

namespace ssf {

enum class Provenance { Bootstrap, Manual, Pseudo };

std::string to_string(Provenance p);

struct BufferEntry {
    FeatureRecord record;
    Label label = kNormal;
    Provenance provenance = Provenance::Bootstrap;
    std::size_t inserted_cycle = 0;
};

/// Fixed-capacity store of labeled samples.
struct MemoryBuffer {
    std::vector<BufferEntry> entries;
    std::size_t capacity = 0;

    std::size_t size() const { return entries.size(); }

    /// Fills the buffer with the labeled bootstrap set; capacity = its size.
    static MemoryBuffer from_bootstrap(std::span<const FeatureRecord> bootstrap);

    /// One JSON object per line: stream_index, label, provenance,
    /// inserted_cycle (and features when requested).
    std::string to_jsonl(bool include_features = false) const;
    void export_jsonl(const std::filesystem::path& path, bool include_features = false) const;
};

/// Simulated human labeler: reveals held-back ground truth, each stream
/// index at most once, and counts every label handed out.
class LabelOracle {
public:
    LabelOracle() = default;
    explicit LabelOracle(std::span<const std::pair<std::size_t, Label>> hidden);

    Label label(std::size_t stream_index);
    std::size_t manual_count() const { return manual_count_; }

private:
    std::unordered_map<std::size_t, Label> hidden_;
    std::unordered_set<std::size_t> queried_;
    std::size_t manual_count_ = 0;
};

/// Indices into `chunk` of the samples to label. Representatives
/// (m^n >= 0.5) come first by descending mask; if fewer than k, the rest is
/// a seeded uniform draw from the non-representatives. The draw is a prefix
/// of one seeded permutation, so the selection for k is contained in the
/// selection for any k' >= k under the same seed.
std::vector<std::size_t> select_new_samples(std::span<const FeatureRecord> chunk, std::size_t k,
                                            const MaskVector& m_new, std::uint64_t seed);

/// Indices into `buffer.entries` to forget. Non-representatives
/// (m^o < 0.5) go first; if there are at least k of them a seeded uniform
/// draw of k is taken, otherwise the lowest-mask representatives fill up to
/// k (ties: older insertion, then lower stream index).
std::vector<std::size_t> drop_old_samples(const MemoryBuffer& buffer, std::size_t k, const MaskVector& m_old,
                                          std::uint64_t seed);

/// Labels records with the model's prediction; consumes no budget.
std::vector<BufferEntry> pseudo_label(std::span<const FeatureRecord> extra, const DetectorModel& model,
                                      std::size_t cycle);

struct UpdateStats {
    bool drifted = false;
    double p_value = 1.0;
    std::size_t budget = 0;         // k
    std::size_t effective_k = 0;    // k' (== k without drift)
    bool clamped = false;           // k' was cut down to the chunk size
    std::size_t dropped = 0;
    std::size_t manual = 0;
    std::size_t pseudo = 0;
};

struct BufferUpdate {
    MemoryBuffer buffer;
    UpdateStats stats;
};

/// One buffer update. Without drift: label k selected samples and forget k.
/// With drift: k' = max(k, #(m^o < 0.5)) samples are forgotten and replaced;
/// when k' > k only k are labeled manually and the rest pseudo-labeled.
BufferUpdate update_buffer(const DriftVerdict& verdict, const MemoryBuffer& buffer, std::span<const FeatureRecord> chunk,
                           std::size_t k, const MaskVector& m_old, const MaskVector& m_new, const DetectorModel& model,
                           LabelOracle& oracle, std::uint64_t seed, std::size_t cycle);

}  // namespace ssf
