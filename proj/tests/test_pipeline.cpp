#include <doctest.h>

#include <cmath>

#include "ssf/config.hpp"
#include "ssf/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace ssf;

namespace {

testing::DriftScenario small_scenario() {
    // 1,000 samples: 200 bootstrap, 4 chunks of 200, shift from chunk 3.
    testing::DriftScenario s;
    s.bootstrap = 200;
    s.chunk_size = 200;
    s.chunks = 4;
    s.test_size = 300;
    s.after = {0.52, 0.5, 0.02};
    s.abnormal_share = 0.3;
    return s;
}

ExperimentConfig quick(const testing::DriftScenario& s) {
    auto c = s.config();
    c.stream.label_budget_fraction = 0.1;
    c.detector.bootstrap_epochs = 30;
    c.detector.epochs_per_fit = 5;
    c.selection.iterations = 100;
    return c;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("metrics from a confusion matrix") {
    const auto m = metrics_from_counts(3, 1, 5, 1);
    CHECK(m.accuracy == doctest::Approx(0.8));
    CHECK(m.precision == doctest::Approx(0.75));
    CHECK(m.recall == doctest::Approx(0.75));
    CHECK(m.f1 == doctest::Approx(0.75));
    CHECK_FALSE(m.precision_undefined);

    const auto perfect = metrics_from_counts(4, 0, 6, 0);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    const auto silent = metrics_from_counts(0, 0, 6, 4);
    CHECK(silent.recall == 0.0);
    CHECK(silent.precision == 0.0);
    CHECK(silent.precision_undefined);
    CHECK(silent.f1 == 0.0);
}

TEST_CASE("metric identities on random confusion matrices") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const std::size_t tp = rng.below(50), fp = rng.below(50), tn = rng.below(50), fn = rng.below(50) + 1;
        const auto m = metrics_from_counts(tp, fp, tn, fn);
        CHECK(m.accuracy == doctest::Approx(static_cast<double>(tp + tn) / static_cast<double>(tp + fp + tn + fn)));
        if (m.precision + m.recall > 0.0)
            CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
    }
}

TEST_CASE("evaluate needs labeled, non-empty data") {
    const auto model = init_model(quick(small_scenario()).detector);
    CHECK_THROWS_AS(evaluate(model, std::span<const FeatureRecord>{}), DataError);
    std::vector<FeatureRecord> unlabeled = {{{0.1, 0.2}, std::nullopt, 0}};
    CHECK_THROWS_AS(evaluate(model, unlabeled), DataError);
}

TEST_CASE("synthetic shift at chunk 3 is flagged there and only there") {
    const auto s = small_scenario();
    const auto stream = s.stream(21);
    const TestSet test(s.test(22, true));
    const auto rep = run_repetition(quick(s), stream, test, 1);
    REQUIRE(rep.cycles.size() == 4);
    CHECK_FALSE(rep.cycles[0].verdict.drifted);
    CHECK_FALSE(rep.cycles[1].verdict.drifted);
    CHECK(rep.cycles[2].verdict.drifted);
    CHECK(rep.cycles[2].verdict.p_value < 0.05);
}

TEST_CASE("cycle count, buffer size, budget accounting and test-set isolation") {
    auto s = small_scenario();
    s.chunks = 3;
    auto stream = s.stream(23);
    stream.resize(stream.size() - 50);  // partial last chunk
    const TestSet test(s.test(24, true));
    auto cfg = quick(s);
    cfg.stream.bootstrap_fraction = 200.0 / static_cast<double>(stream.size());
    std::vector<std::size_t> buffer_sizes;
    const auto rep = run_repetition(cfg, stream, test, 2, 0, [&](const CycleContext& c) {
        buffer_sizes.push_back(c.buffer.size());
    });
    const std::size_t streamed = stream.size() - 200;
    CHECK(rep.stream_size == streamed);
    CHECK(rep.cycles.size() == (streamed + cfg.stream.chunk_size - 1) / cfg.stream.chunk_size);
    for (const auto n : buffer_sizes) CHECK(n == rep.buffer_capacity);
    std::size_t expected_manual = 0;
    for (const auto& c : rep.cycles) expected_manual += std::min(c.update.budget, c.update.effective_k);
    CHECK(rep.manual_labels == expected_manual);
    // Only evaluation touches the test set: once after bootstrap, once per cycle.
    CHECK(test.accesses() == test.size() * (rep.cycles.size() + 1));
}

TEST_CASE("bootstrap metrics are the static reference") {
    auto s = small_scenario();
    const auto stream = s.stream(25);
    std::vector<FeatureRecord> few(stream.begin(), stream.begin() + 10);
    auto cfg = quick(s);
    cfg.stream.bootstrap_fraction = 0.95;
    const auto test_records = s.test(26, false);
    const TestSet test(test_records);
    Metrics at_bootstrap;
    const auto rep = run_repetition(cfg, few, test, 1, 0, [&](const CycleContext& c) {
        if (c.cycle == 0) at_bootstrap = evaluate(c.model, test_records);
    });
    // floor(0.95 * 10) = 9 bootstrap records leave a one-record chunk, too small to test.
    CHECK(rep.stream_size == 1);
    REQUIRE(rep.cycles.size() == 1);
    CHECK_FALSE(rep.cycles[0].verdict.drifted);
    CHECK(rep.bootstrap_metrics.accuracy == at_bootstrap.accuracy);
    CHECK(rep.bootstrap_metrics.tp == at_bootstrap.tp);
    CHECK(test.accesses() == 2 * test.size());
}

TEST_CASE("identical config and seed give identical reports") {
    const auto s = small_scenario();
    const auto stream = s.stream(27);
    const TestSet test(s.test(28, true));
    auto cfg = quick(s);
    cfg.seeds = {5, 6};
    cfg.repetitions = 2;
    const auto a = run_experiment(cfg, stream, test);
    const auto b = run_experiment(cfg, stream, test);
    CHECK(report_to_json(a).dump() == report_to_json(b).dump());
    CHECK(a.repetitions[0].final_model == b.repetitions[0].final_model);
    cfg.threads = 2;
    const auto c = run_experiment(cfg, stream, test);
    // Only the thread count in the echoed config may differ.
    CHECK(report_to_json(a)["repetitions"] == report_to_json(c)["repetitions"]);
    CHECK(report_to_json(a)["summary"] == report_to_json(c)["summary"]);
}

TEST_CASE("ablation arms share the bootstrap model") {
    const auto s = small_scenario();
    const auto stream = s.stream(29);
    const TestSet test(s.test(30, true));
    std::vector<std::vector<double>> boot;
    for (const AblationSwitches sw : {AblationSwitches{true, true, true}, AblationSwitches{false, true, true},
                                      AblationSwitches{true, false, true}, AblationSwitches{true, true, false}}) {
        auto cfg = quick(s);
        cfg.ablation = sw;
        const auto rep = run_repetition(cfg, stream, test, 7, 0, [&](const CycleContext& c) {
            if (c.cycle == 0) boot.push_back(c.model.flat_parameters());
        });
        if (!sw.strategic_forgetting) {
            for (const auto& c : rep.cycles) {
                CHECK(c.update.effective_k == c.update.budget);
                CHECK(c.update.pseudo == 0);
                CHECK(c.update.dropped == c.update.budget);
            }
        }
    }
    REQUIRE(boot.size() == 4);
    for (std::size_t i = 1; i < 4; ++i) CHECK(boot[i] == boot[0]);
}

TEST_CASE("ablation suite runs all four arms") {
    const auto s = small_scenario();
    const auto stream = s.stream(31);
    const TestSet test(s.test(32, true));
    auto cfg = quick(s);
    cfg.detector.bootstrap_epochs = 5;
    const auto arms = run_ablation_suite(cfg, stream, test);
    REQUIRE(arms.size() == 4);
    CHECK(arms[0].name == "SSF");
    for (const auto& a : arms) CHECK(a.report.repetitions[0].bootstrap_metrics.accuracy ==
                                     arms[0].report.repetitions[0].bootstrap_metrics.accuracy);
    const auto table = format_ablation_table(arms);
    for (const auto* name : {"SSF", "w/o sample selection", "w/o strategic forgetting", "w/o regularization"})
        CHECK(table.find(name) != std::string::npos);
}

TEST_CASE("config validation") {
    ExperimentConfig c;
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.seeds = {1, 2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
