#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssf/detector.hpp"
#include "ssf/drift.hpp"
#include "ssf/memory_buffer.hpp"

namespace ssf {

/// Loss weighting for one update cycle. Entries inserted during
/// `current_cycle` (and not part of the bootstrap set) count as new.
struct TaskLossSpec {
    double gamma = 2.0;
    double lambda = 1.0;
    std::size_t current_cycle = 0;

    bool is_new(const BufferEntry& e) const {
        return e.provenance != Provenance::Bootstrap && e.inserted_cycle == current_cycle;
    }
    void validate() const;
};

/// sum(w_i * loss_i) / sum(w_i) with w = gamma for new samples, 1 otherwise.
double weighted_mean_loss(std::span<const double> losses, const std::vector<bool>& is_new, double gamma);

/// Weighted mean task loss over the buffer entries.
double task_loss(const DetectorModel& model, std::span<const BufferEntry> entries, const TaskLossSpec& spec);

/// Mean BCE between the snapshot's and the current model's f-scores over
/// old (not new) entries; 0 if there are none.
double regularization_loss(const DetectorModel& model, const ModelSnapshot& snapshot,
                           std::span<const BufferEntry> entries, const TaskLossSpec& spec);

/// L_task + lambda * L_reg without drift, L_task alone with drift.
double cycle_loss(const DetectorModel& model, const ModelSnapshot& snapshot, std::span<const BufferEntry> entries,
                  const TaskLossSpec& spec, bool drifted);

/// Training set whose fit objective equals cycle_loss: task weights are
/// gamma-weights rescaled to mean 1, distillation weights lambda * n / n_old
/// on old entries.
TrainingSet build_training_set(const ModelSnapshot& snapshot, std::span<const BufferEntry> entries,
                               const TaskLossSpec& spec, bool drifted);

/// Snapshot, then fit on the buffer with the drift-conditional objective.
DetectorModel finetune_cycle(const DetectorModel& model, const MemoryBuffer& buffer, const DriftVerdict& verdict,
                             const TaskLossSpec& spec, const DetectorConfig& opts);

}  // namespace ssf
