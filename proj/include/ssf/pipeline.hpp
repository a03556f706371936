#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssf/dataset.hpp"
#include "ssf/detector.hpp"
#include "ssf/drift.hpp"
#include "ssf/finetune.hpp"
#include "ssf/memory_buffer.hpp"
#include "ssf/selection.hpp"

namespace ssf {

struct AblationSwitches {
    bool sample_selection = true;      // false: seeded uniform masks
    bool strategic_forgetting = true;  // false: always take the no-drift buffer path
    bool regularization = true;        // false: lambda = 0
};

struct ExperimentConfig {
    DatasetName dataset = DatasetName::NslKdd;
    std::string train_path;
    std::string test_path;
    double subsample_fraction = 1.0;

    StreamPlan stream;
    DetectorConfig detector = DetectorConfig::nsl_kdd();
    SelectionOpts selection;
    TaskLossSpec loss;
    double alpha = 0.05;
    AblationSwitches ablation;

    std::vector<std::uint64_t> seeds = {0};
    std::size_t repetitions = 1;
    std::size_t threads = 1;  // repetitions run in parallel up to this many

    void validate() const;
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool precision_undefined = false;  // no positive predictions
};

/// Metrics from a confusion matrix; abnormal is the positive class.
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Labeled evaluation data. Records are only reachable through evaluate(),
/// which counts every record access.
class TestSet {
public:
    TestSet() = default;
    explicit TestSet(std::vector<FeatureRecord> records);

    std::size_t size() const { return records_.size(); }
    std::size_t accesses() const { return accesses_->load(); }

    friend Metrics evaluate(const DetectorModel& model, const TestSet& test);

private:
    std::vector<FeatureRecord> records_;
    std::shared_ptr<std::atomic<std::size_t>> accesses_ = std::make_shared<std::atomic<std::size_t>>(0);
};

Metrics evaluate(const DetectorModel& model, std::span<const FeatureRecord> test);
Metrics evaluate(const DetectorModel& model, const TestSet& test);

struct CycleReport {
    std::size_t cycle = 0;  // 1-based
    DriftVerdict verdict;
    UpdateStats update;
    Metrics metrics;
};

struct RepetitionReport {
    std::uint64_t seed = 0;
    std::size_t buffer_capacity = 0;
    std::size_t stream_size = 0;
    Metrics bootstrap_metrics;  // after initial training, before any cycle
    std::vector<CycleReport> cycles;
    Metrics final_metrics;
    std::size_t manual_labels = 0;
    MemoryBuffer final_buffer;
    DetectorModel final_model;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
};

struct RunReport {
    ExperimentConfig config;
    std::vector<RepetitionReport> repetitions;
    MetricSummary accuracy, precision, recall, f1;
    double wall_clock_seconds = 0.0;
};

/// Called after bootstrap training (cycle 0) and after every cycle.
struct CycleContext {
    std::size_t repetition = 0;
    std::size_t cycle = 0;
    const DetectorModel& model;
    const MemoryBuffer& buffer;
};
using CycleObserver = std::function<void(const CycleContext&)>;

/// One seeded repetition over in-memory data: bootstrap training, then per
/// chunk drift detection, mask optimization, buffer update, fine-tuning and
/// evaluation.
RepetitionReport run_repetition(const ExperimentConfig& config, std::span<const FeatureRecord> train,
                                const TestSet& test, std::uint64_t seed, std::size_t repetition = 0,
                                const CycleObserver& observer = {});

RunReport run_experiment(const ExperimentConfig& config, std::span<const FeatureRecord> train, const TestSet& test,
                         const CycleObserver& observer = {});

/// Loads and encodes the configured files, then runs every repetition.
RunReport run_experiment(const ExperimentConfig& config);

struct LoadedData {
    std::vector<FeatureRecord> train;
    TestSet test;
    Encoder encoder;
};
LoadedData load_experiment_data(const ExperimentConfig& config);

struct AblationArm {
    std::string name;
    RunReport report;
};

/// Full method and the three ablations with shared seeds.
std::vector<AblationArm> run_ablation_suite(const ExperimentConfig& config, std::span<const FeatureRecord> train,
                                            const TestSet& test);
std::vector<AblationArm> run_ablation_suite(const ExperimentConfig& config);

/// Method | Acc. | Pre. | Rec. | F1 table (percent, mean over seeds).
std::string format_ablation_table(const std::vector<AblationArm>& arms);

}  // namespace ssf
