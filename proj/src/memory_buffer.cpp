#include "ssf/memory_buffer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ssf {

namespace {
constexpr std::uint64_t kSelectTag = 0x73656c;
constexpr std::uint64_t kDropTag = 0x64726f70;
}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::Bootstrap: return "bootstrap";
        case Provenance::Manual: return "manual";
        case Provenance::Pseudo: return "pseudo";
    }
    return "?";
}

MemoryBuffer MemoryBuffer::from_bootstrap(std::span<const FeatureRecord> bootstrap) {
    MemoryBuffer b;
    b.capacity = bootstrap.size();
    b.entries.reserve(bootstrap.size());
    for (const auto& r : bootstrap) {
        if (!r.truth_label) throw DataError("bootstrap record " + std::to_string(r.stream_index) + " has no label");
        b.entries.push_back(BufferEntry{r, *r.truth_label, Provenance::Bootstrap, 0});
    }
    return b;
}

std::string MemoryBuffer::to_jsonl(bool include_features) const {
    std::string out;
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["stream_index"] = e.record.stream_index;
        j["label"] = e.label;
        j["provenance"] = to_string(e.provenance);
        j["inserted_cycle"] = e.inserted_cycle;
        if (include_features) j["features"] = e.record.features;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void MemoryBuffer::export_jsonl(const std::filesystem::path& path, bool include_features) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << to_jsonl(include_features);
}

LabelOracle::LabelOracle(std::span<const std::pair<std::size_t, Label>> hidden) {
    hidden_.reserve(hidden.size());
    for (const auto& [idx, y] : hidden) hidden_.emplace(idx, y);
}

Label LabelOracle::label(std::size_t stream_index) {
    auto it = hidden_.find(stream_index);
    if (it == hidden_.end()) throw DataError("oracle has no label for stream index " + std::to_string(stream_index));
    if (!queried_.insert(stream_index).second)
        throw DataError("stream index " + std::to_string(stream_index) + " was already labeled");
    ++manual_count_;
    return it->second;
}

std::vector<std::size_t> select_new_samples(std::span<const FeatureRecord> chunk, std::size_t k,
                                            const MaskVector& m_new, std::uint64_t seed) {
    if (m_new.size() != chunk.size()) throw DataError("select_new_samples: mask size does not match chunk");
    if (k > chunk.size()) throw DataError("select_new_samples: k exceeds chunk size");
    std::vector<std::size_t> reps, rest;
    for (std::size_t i = 0; i < chunk.size(); ++i) (m_new.selected(i) ? reps : rest).push_back(i);
    std::sort(reps.begin(), reps.end(), [&](std::size_t a, std::size_t b) {
        if (m_new.values[a] != m_new.values[b]) return m_new.values[a] > m_new.values[b];
        return chunk[a].stream_index < chunk[b].stream_index;
    });
    if (reps.size() >= k) {
        reps.resize(k);
        return reps;
    }
    Rng rng(derive_seed(seed, kSelectTag));
    rng.shuffle(rest);
    rest.resize(k - reps.size());
    reps.insert(reps.end(), rest.begin(), rest.end());
    return reps;
}

std::vector<std::size_t> drop_old_samples(const MemoryBuffer& buffer, std::size_t k, const MaskVector& m_old,
                                          std::uint64_t seed) {
    const auto& entries = buffer.entries;
    if (m_old.size() != entries.size()) throw DataError("drop_old_samples: mask size does not match buffer");
    if (k > entries.size()) throw DataError("drop_old_samples: k exceeds buffer size");
    std::vector<std::size_t> unrep, reps;
    for (std::size_t i = 0; i < entries.size(); ++i) (m_old.selected(i) ? reps : unrep).push_back(i);
    if (unrep.size() >= k) {
        const auto pick = sample_indices(unrep.size(), k, derive_seed(seed, kDropTag));
        std::vector<std::size_t> out;
        out.reserve(k);
        for (auto p : pick) out.push_back(unrep[p]);
        return out;
    }
    std::sort(reps.begin(), reps.end(), [&](std::size_t a, std::size_t b) {
        if (m_old.values[a] != m_old.values[b]) return m_old.values[a] < m_old.values[b];
        if (entries[a].inserted_cycle != entries[b].inserted_cycle)
            return entries[a].inserted_cycle < entries[b].inserted_cycle;
        return entries[a].record.stream_index < entries[b].record.stream_index;
    });
    reps.resize(k - unrep.size());
    unrep.insert(unrep.end(), reps.begin(), reps.end());
    return unrep;
}

std::vector<BufferEntry> pseudo_label(std::span<const FeatureRecord> extra, const DetectorModel& model,
                                      std::size_t cycle) {
    std::vector<BufferEntry> out;
    out.reserve(extra.size());
    for (const auto& r : extra) out.push_back(BufferEntry{r, predict(model, r.features), Provenance::Pseudo, cycle});
    return out;
}

BufferUpdate update_buffer(const DriftVerdict& verdict, const MemoryBuffer& buffer, std::span<const FeatureRecord> chunk,
                           std::size_t k, const MaskVector& m_old, const MaskVector& m_new, const DetectorModel& model,
                           LabelOracle& oracle, std::uint64_t seed, std::size_t cycle) {
    if (m_old.size() != buffer.size()) throw DataError("update_buffer: m_old size does not match buffer");
    if (m_new.size() != chunk.size()) throw DataError("update_buffer: m_new size does not match chunk");
    if (k > chunk.size()) throw DataError("update_buffer: k exceeds chunk size");
    if (k > buffer.size()) throw DataError("update_buffer: k exceeds buffer size");

    UpdateStats stats;
    stats.drifted = verdict.drifted;
    stats.p_value = verdict.p_value;
    stats.budget = k;

    std::size_t k_eff = k;
    if (verdict.drifted) {
        k_eff = std::max(k, m_old.count_unselected());
        if (k_eff > chunk.size()) {
            k_eff = chunk.size();
            stats.clamped = true;
        }
    }
    stats.effective_k = k_eff;

    const auto drop = drop_old_samples(buffer, k_eff, m_old, seed);
    const auto selected = select_new_samples(chunk, k_eff, m_new, seed);

    std::vector<BufferEntry> inserted;
    inserted.reserve(selected.size());
    if (drop.size() <= k) {
        for (auto i : selected) inserted.push_back(BufferEntry{chunk[i], oracle.label(chunk[i].stream_index),
                                                               Provenance::Manual, cycle});
    } else {
        // Top-k of the same ranking is labeled, the overflow pseudo-labeled.
        const auto manual = select_new_samples(chunk, k, m_new, seed);
        std::vector<bool> is_manual(chunk.size(), false);
        for (auto i : manual) is_manual[i] = true;
        for (auto i : manual)
            inserted.push_back(BufferEntry{chunk[i], oracle.label(chunk[i].stream_index), Provenance::Manual, cycle});
        for (auto i : selected)
            if (!is_manual[i]) inserted.push_back(BufferEntry{chunk[i], predict(model, chunk[i].features), Provenance::Pseudo, cycle});
    }

    std::vector<bool> dropped(buffer.size(), false);
    for (auto i : drop) dropped[i] = true;

    BufferUpdate out;
    out.buffer.capacity = buffer.capacity;
    out.buffer.entries.reserve(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i)
        if (!dropped[i]) out.buffer.entries.push_back(buffer.entries[i]);
    for (auto& e : inserted) {
        (e.provenance == Provenance::Manual ? stats.manual : stats.pseudo) += 1;
        out.buffer.entries.push_back(std::move(e));
    }
    stats.dropped = drop.size();
    out.stats = stats;
    return out;
}

}  // namespace ssf
