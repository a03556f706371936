#include "ssf/finetune.hpp"

#include <cmath>

namespace ssf {

void TaskLossSpec::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("finetune.gamma must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("finetune.lambda must be nonnegative");
}

double weighted_mean_loss(std::span<const double> losses, const std::vector<bool>& is_new, double gamma) {
    if (is_new.size() != losses.size()) throw DataError("task_loss: flag count mismatch");
    if (losses.empty()) throw DataError("task_loss: no entries");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!std::isfinite(losses[i])) throw NumericalError("task_loss: non-finite loss at sample " + std::to_string(i));
        const double w = is_new[i] ? gamma : 1.0;
        num += w * losses[i];
        den += w;
    }
    return num / den;
}

double task_loss(const DetectorModel& model, std::span<const BufferEntry> entries, const TaskLossSpec& spec) {
    const double margin = task_margin(model);
    std::vector<double> losses;
    std::vector<bool> fresh;
    losses.reserve(entries.size());
    for (const auto& e : entries) {
        losses.push_back(sample_task_loss(model, e.record.features, e.label, margin));
        fresh.push_back(spec.is_new(e));
    }
    return weighted_mean_loss(losses, fresh, spec.gamma);
}

double regularization_loss(const DetectorModel& model, const ModelSnapshot& snapshot,
                           std::span<const BufferEntry> entries, const TaskLossSpec& spec) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (spec.is_new(e)) continue;
        sum += distillation_loss(model, e.record.features, score(snapshot.model(), e.record.features));
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double cycle_loss(const DetectorModel& model, const ModelSnapshot& snapshot, std::span<const BufferEntry> entries,
                  const TaskLossSpec& spec, bool drifted) {
    const double task = task_loss(model, entries, spec);
    return drifted ? task : task + spec.lambda * regularization_loss(model, snapshot, entries, spec);
}

TrainingSet build_training_set(const ModelSnapshot& snapshot, std::span<const BufferEntry> entries,
                               const TaskLossSpec& spec, bool drifted) {
    TrainingSet t;
    const std::size_t n = entries.size();
    t.inputs.reserve(n);
    t.labels.reserve(n);
    t.weights.reserve(n);
    double total = 0.0;
    std::size_t n_old = 0;
    for (const auto& e : entries) {
        t.inputs.emplace_back(e.record.features);
        t.labels.push_back(e.label);
        const bool fresh = spec.is_new(e);
        t.weights.push_back(fresh ? spec.gamma : 1.0);
        total += t.weights.back();
        if (!fresh) ++n_old;
    }
    const double rescale = static_cast<double>(n) / total;
    for (auto& w : t.weights) w *= rescale;

    if (!drifted && spec.lambda > 0.0 && n_old > 0) {
        const double dw = spec.lambda * static_cast<double>(n) / static_cast<double>(n_old);
        t.distill_targets.resize(n, 0.0);
        t.distill_weights.resize(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (spec.is_new(entries[i])) continue;
            t.distill_targets[i] = score(snapshot.model(), entries[i].record.features);
            t.distill_weights[i] = dw;
        }
    }
    return t;
}

DetectorModel finetune_cycle(const DetectorModel& model, const MemoryBuffer& buffer, const DriftVerdict& verdict,
                             const TaskLossSpec& spec, const DetectorConfig& opts) {
    spec.validate();
    if (buffer.size() != buffer.capacity) throw DataError("finetune_cycle: buffer is not at capacity");
    const auto snapshot = take_snapshot(model);
    const auto data = build_training_set(snapshot, buffer.entries, spec, verdict.drifted);
    return fit(model, data, opts);
}

}  // namespace ssf
