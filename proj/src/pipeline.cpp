#include "ssf/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>

#include "ssf/log.hpp"

namespace ssf {

namespace {

// Sub-seed tags; each repetition seed fans out into independent streams.
enum : std::uint64_t {
    kTagSubsample = 1,
    kTagSplit,
    kTagInit,
    kTagBootstrapFit,
    kTagMask,
    kTagRandomMaskOld,
    kTagRandomMaskNew,
    kTagBuffer,
    kTagFit,
};

std::uint64_t cycle_seed(std::uint64_t seed, std::uint64_t tag, std::size_t cycle) {
    return derive_seed(derive_seed(seed, tag), cycle);
}

ScoreSet score_set(const DetectorModel& model, std::span<const FeatureRecord> xs, ScoreSource source) {
    return ScoreSet{score_all(model, xs), source};
}

MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double sq = 0.0;
        for (double x : v) sq += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
    }
    return s;
}

}  // namespace

void ExperimentConfig::validate() const {
    stream.validate();
    detector.validate();
    selection.validate();
    loss.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
        throw ConfigError("dataset.subsample_fraction must lie in (0, 1]");
    if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
    if (seeds.size() != repetitions) throw ConfigError("seeds must list exactly `repetitions` values");
    if (threads < 1) throw ConfigError("threads must be at least 1");
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const double total = static_cast<double>(tp + fp + tn + fn);
    m.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
    if (tp + fp == 0) {
        m.precision_undefined = true;
        m.precision = 0.0;
    } else {
        m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

TestSet::TestSet(std::vector<FeatureRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_)
        if (!r.truth_label) throw DataError("test record " + std::to_string(r.stream_index) + " has no label");
}

Metrics evaluate(const DetectorModel& model, std::span<const FeatureRecord> test) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& r : test) {
        if (!r.truth_label) throw DataError("evaluate: test record without label");
        const Label pred = predict(model, r.features);
        const Label truth = *r.truth_label;
        if (pred == kAbnormal) (truth == kAbnormal ? tp : fp) += 1;
        else (truth == kAbnormal ? fn : tn) += 1;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

Metrics evaluate(const DetectorModel& model, const TestSet& test) {
    test.accesses_->fetch_add(test.records_.size());
    return evaluate(model, std::span<const FeatureRecord>(test.records_));
}

RepetitionReport run_repetition(const ExperimentConfig& config, std::span<const FeatureRecord> train,
                                const TestSet& test, std::uint64_t seed, std::size_t repetition,
                                const CycleObserver& observer) {
    config.validate();
    RepetitionReport rep;
    rep.seed = seed;

    std::vector<FeatureRecord> records(train.begin(), train.end());
    records = subsample(std::move(records), config.subsample_fraction, derive_seed(seed, kTagSubsample));
    auto split = split_bootstrap(std::move(records), config.stream, derive_seed(seed, kTagSplit));
    LabelOracle oracle(split.hidden_labels);

    DetectorConfig init_cfg = config.detector;
    init_cfg.rng_seed = derive_seed(seed, kTagInit);
    DetectorModel model = init_model(init_cfg);

    TrainingSet boot;
    for (const auto& r : split.bootstrap) {
        boot.inputs.emplace_back(r.features);
        boot.labels.push_back(*r.truth_label);
        boot.weights.push_back(1.0);
    }
    DetectorConfig boot_opts = config.detector;
    boot_opts.epochs_per_fit = config.detector.bootstrap_epochs;
    boot_opts.rng_seed = derive_seed(seed, kTagBootstrapFit);
    model = fit(std::move(model), boot, boot_opts);

    MemoryBuffer buffer = MemoryBuffer::from_bootstrap(split.bootstrap);
    rep.buffer_capacity = buffer.capacity;
    rep.stream_size = split.stream.size();
    rep.bootstrap_metrics = evaluate(model, test);
    log_info("rep " + std::to_string(repetition) + " bootstrap: N=" + std::to_string(buffer.capacity) +
             " stream=" + std::to_string(split.stream.size()) +
             " acc=" + std::to_string(rep.bootstrap_metrics.accuracy));
    if (observer) observer(CycleContext{repetition, 0, model, buffer});

    const auto chunks = stream_chunks(split.stream, config.stream.chunk_size);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const std::size_t cycle = c + 1;
        const auto chunk = chunks[c];

        std::vector<FeatureRecord> buffer_records;
        buffer_records.reserve(buffer.size());
        std::vector<std::uint64_t> old_keys, new_keys;
        for (const auto& e : buffer.entries) {
            buffer_records.push_back(e.record);
            old_keys.push_back(e.record.stream_index);
        }
        for (const auto& r : chunk) new_keys.push_back(r.stream_index);
        const auto old_scores = score_set(model, buffer_records, ScoreSource::Buffer);
        const auto new_scores = score_set(model, chunk, ScoreSource::Chunk);

        DriftVerdict verdict{0.0, 1.0, config.alpha, false};
        if (chunk.size() >= 2) verdict = detect_drift(old_scores, new_scores, config.alpha);

        MaskVector m_old, m_new;
        if (config.ablation.sample_selection) {
            SelectionOpts sel = config.selection;
            sel.rng_seed = cycle_seed(seed, kTagMask, cycle);
            m_old = optimize_old_mask(old_scores, new_scores, sel, old_keys);
            m_new = optimize_new_mask(old_scores, m_old, new_scores, sel, new_keys);
        } else {
            m_old = random_mask(buffer.size(), MaskRole::Old, cycle_seed(seed, kTagRandomMaskOld, cycle));
            m_new = random_mask(chunk.size(), MaskRole::New, cycle_seed(seed, kTagRandomMaskNew, cycle));
        }

        DriftVerdict regime = verdict;
        if (!config.ablation.strategic_forgetting) regime.drifted = false;

        const std::size_t k = std::min({config.stream.budget(), chunk.size(), buffer.size()});
        auto update = update_buffer(regime, buffer, chunk, k, m_old, m_new, model, oracle,
                                    cycle_seed(seed, kTagBuffer, cycle), cycle);
        buffer = std::move(update.buffer);

        TaskLossSpec spec = config.loss;
        spec.current_cycle = cycle;
        if (!config.ablation.regularization) spec.lambda = 0.0;
        DetectorConfig opts = config.detector;
        opts.rng_seed = cycle_seed(seed, kTagFit, cycle);
        model = finetune_cycle(model, buffer, regime, spec, opts);

        CycleReport cr;
        cr.cycle = cycle;
        cr.verdict = verdict;
        cr.update = update.stats;
        cr.metrics = evaluate(model, test);
        log_debug("rep " + std::to_string(repetition) + " cycle " + std::to_string(cycle) +
                  " p=" + std::to_string(verdict.p_value) + " drift=" + std::to_string(verdict.drifted) +
                  " dropped=" + std::to_string(cr.update.dropped) + " acc=" + std::to_string(cr.metrics.accuracy));
        rep.cycles.push_back(cr);
        if (observer) observer(CycleContext{repetition, cycle, model, buffer});
    }

    rep.final_metrics = rep.cycles.empty() ? rep.bootstrap_metrics : rep.cycles.back().metrics;
    rep.manual_labels = oracle.manual_count();
    rep.final_buffer = std::move(buffer);
    rep.final_model = std::move(model);
    return rep;
}

RunReport run_experiment(const ExperimentConfig& config, std::span<const FeatureRecord> train, const TestSet& test,
                         const CycleObserver& observer) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    RunReport report;
    report.config = config;
    report.repetitions.resize(config.repetitions);
    if (config.threads <= 1 || config.repetitions == 1) {
        for (std::size_t r = 0; r < config.repetitions; ++r)
            report.repetitions[r] = run_repetition(config, train, test, config.seeds[r], r, observer);
    } else {
        for (std::size_t base = 0; base < config.repetitions; base += config.threads) {
            std::vector<std::future<RepetitionReport>> jobs;
            for (std::size_t r = base; r < std::min(config.repetitions, base + config.threads); ++r)
                jobs.push_back(std::async(std::launch::async, [&, r] {
                    return run_repetition(config, train, test, config.seeds[r], r, observer);
                }));
            for (std::size_t j = 0; j < jobs.size(); ++j) report.repetitions[base + j] = jobs[j].get();
        }
    }
    std::vector<double> acc, pre, rec, f1;
    for (const auto& r : report.repetitions) {
        acc.push_back(r.final_metrics.accuracy);
        pre.push_back(r.final_metrics.precision);
        rec.push_back(r.final_metrics.recall);
        f1.push_back(r.final_metrics.f1);
    }
    report.accuracy = summarize(acc);
    report.precision = summarize(pre);
    report.recall = summarize(rec);
    report.f1 = summarize(f1);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

LoadedData load_experiment_data(const ExperimentConfig& config) {
    if (config.train_path.empty()) throw ConfigError("dataset.train_path is required");
    if (config.test_path.empty()) throw ConfigError("dataset.test_path is required");
    DatasetSchema schema;
    switch (config.dataset) {
        case DatasetName::NslKdd: schema = DatasetSchema::nsl_kdd(); break;
        case DatasetName::UnswNb15: schema = DatasetSchema::unsw_nb15(); break;
        case DatasetName::Custom: throw ConfigError("dataset.schema 'custom' cannot be loaded from a config file");
    }
    auto train = load_and_encode(config.train_path, schema);
    if (train.encoder.width() != config.detector.layer_sizes.front())
        throw ConfigError("detector.layer_sizes[0] (" + std::to_string(config.detector.layer_sizes.front()) +
                          ") does not match the encoded width " + std::to_string(train.encoder.width()));
    auto test = load_with_encoder(config.test_path, train.encoder);
    return LoadedData{std::move(train.records), TestSet(std::move(test)), std::move(train.encoder)};
}

RunReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto data = load_experiment_data(config);
    return run_experiment(config, data.train, data.test);
}

std::vector<AblationArm> run_ablation_suite(const ExperimentConfig& config, std::span<const FeatureRecord> train,
                                            const TestSet& test) {
    struct ArmSpec {
        const char* name;
        AblationSwitches sw;
    };
    const ArmSpec arms[] = {
        {"SSF", {true, true, true}},
        {"w/o sample selection", {false, true, true}},
        {"w/o strategic forgetting", {true, false, true}},
        {"w/o regularization", {true, true, false}},
    };
    std::vector<AblationArm> out;
    for (const auto& arm : arms) {
        ExperimentConfig c = config;
        c.ablation = arm.sw;
        log_info(std::string("ablation arm: ") + arm.name);
        out.push_back(AblationArm{arm.name, run_experiment(c, train, test)});
    }
    return out;
}

std::vector<AblationArm> run_ablation_suite(const ExperimentConfig& config) {
    config.validate();
    const auto data = load_experiment_data(config);
    return run_ablation_suite(config, data.train, data.test);
}

std::string format_ablation_table(const std::vector<AblationArm>& arms) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "Method" << std::right << std::setw(8) << "Acc." << std::setw(8) << "Pre."
       << std::setw(8) << "Rec." << std::setw(8) << "F1" << '\n';
    os << std::fixed << std::setprecision(2);
    for (const auto& a : arms) {
        const auto& r = a.report;
        os << std::left << std::setw(28) << a.name << std::right << std::setw(8) << 100.0 * r.accuracy.mean
           << std::setw(8) << 100.0 * r.precision.mean << std::setw(8) << 100.0 * r.recall.mean << std::setw(8)
           << 100.0 * r.f1.mean << '\n';
    }
    return os.str();
}

}  // namespace ssf
