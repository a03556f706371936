#include "ssf/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ssf {

using nlohmann::json;

namespace {

std::string json_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void merge_into(json& base, const json& user, const std::string& prefix) {
    if (!user.is_object()) throw ConfigError("configuration" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const auto path = json_path(prefix, it.key());
        if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
        auto& slot = base[it.key()];
        if (slot.is_object()) merge_into(slot, it.value(), path);
        else slot = it.value();
    }
}

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto path = json_path(prefix, it.key());
        if (it.value().is_object()) collect_leaves(it.value(), path, out);
        else out.push_back(path);
    }
}

json* find_path(json& root, const std::string& dotted) {
    json* cur = &root;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
    }
    return cur;
}

void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json* slot = find_path(cfg, key);
    if (!slot && key.find('.') == std::string::npos) {
        std::vector<std::string> leaves;
        collect_leaves(cfg, "", leaves);
        std::vector<std::string> matches;
        for (const auto& l : leaves) {
            const auto dot = l.rfind('.');
            if ((dot == std::string::npos ? l : l.substr(dot + 1)) == key) matches.push_back(l);
        }
        if (matches.size() > 1) throw ConfigError("override key '" + key + "' is ambiguous");
        if (matches.size() == 1) {
            key = matches.front();
            slot = find_path(cfg, key);
        }
    }
    if (!slot) throw ConfigError("unknown configuration key '" + key + "'");
    if (slot->is_object()) throw ConfigError("override key '" + key + "' names a section, not a value");
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings
    *slot = value;
}

template <typename T>
T get_as(const json& root, const std::string& dotted) {
    json* slot = find_path(const_cast<json&>(root), dotted);
    if (!slot) throw ConfigError("missing required key '" + dotted + "'");
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!slot->is_number_integer() || slot->get<long long>() < 0)
                throw ConfigError("key '" + dotted + "' must be a nonnegative integer");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!slot->is_number()) throw ConfigError("key '" + dotted + "' must be a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!slot->is_string()) throw ConfigError("key '" + dotted + "' must be a string");
        }
        return slot->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + dotted + "' has the wrong type");
    }
}

bool switch_value(const json& root, const std::string& dotted, const char* off_word) {
    json* slot = find_path(const_cast<json&>(root), dotted);
    if (!slot) throw ConfigError("missing required key '" + dotted + "'");
    if (slot->is_boolean()) return slot->get<bool>();
    if (slot->is_string()) {
        const auto s = slot->get<std::string>();
        if (s == "on") return true;
        if (s == off_word || s == "off") return false;
    }
    throw ConfigError("key '" + dotted + "' must be \"on\" or \"" + off_word + "\"");
}

// Re-throws range errors from the struct validators with the JSON key.
void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("key '" + key + "': " + what);
}

}  // namespace

json default_config_json(DatasetName dataset) {
    const auto det = dataset == DatasetName::UnswNb15 ? DetectorConfig::unsw_nb15() : DetectorConfig::nsl_kdd();
    const StreamPlan plan;
    const SelectionOpts sel;
    const TaskLossSpec loss;
    json j;
    j["dataset"] = {{"schema", to_string(dataset)}, {"train_path", ""}, {"test_path", ""}, {"subsample_fraction", 1.0}};
    j["stream"] = {{"bootstrap_fraction", plan.bootstrap_fraction},
                   {"chunk_size", dataset == DatasetName::UnswNb15 ? 20000 : 5000},
                   {"label_budget_fraction", plan.label_budget_fraction},
                   {"bootstrap_prefix", plan.bootstrap_prefix}};
    j["detector"] = {{"layer_sizes", det.layer_sizes},       {"variant", to_string(det.variant)},
                     {"learning_rate", det.learning_rate},   {"batch_size", det.batch_size},
                     {"epochs_per_fit", det.epochs_per_fit}, {"bootstrap_epochs", det.bootstrap_epochs}};
    j["selection"] = {{"bins", sel.bins},
                      {"step_size", sel.step_size},
                      {"iterations", sel.iterations},
                      {"epsilon_floor", sel.epsilon_floor},
                      {"bandwidth", sel.bandwidth}};
    j["finetune"] = {{"gamma", loss.gamma}, {"lambda", loss.lambda}};
    j["alpha"] = 0.05;
    j["ablation"] = {{"sample_selection", "on"}, {"strategic_forgetting", "on"}, {"regularization", "on"}};
    j["seeds"] = nullptr;
    j["repetitions"] = nullptr;
    j["threads"] = 1;
    return j;
}

ExperimentConfig config_from_json(const json& user, const std::vector<std::string>& overrides,
                                  std::optional<DatasetName> dataset) {
    if (!user.is_object()) throw ConfigError("configuration must be a JSON object");
    DatasetName name = DatasetName::NslKdd;
    if (dataset) {
        name = *dataset;
    } else if (user.contains("dataset") && user["dataset"].is_object() && user["dataset"].contains("schema")) {
        if (!user["dataset"]["schema"].is_string()) throw ConfigError("key 'dataset.schema' must be a string");
        name = dataset_name_from_string(user["dataset"]["schema"].get<std::string>());
    }
    json cfg = default_config_json(name);
    merge_into(cfg, user, "");
    if (dataset) cfg["dataset"]["schema"] = to_string(*dataset);
    for (const auto& o : overrides) apply_override(cfg, o);

    ExperimentConfig c;
    c.dataset = dataset_name_from_string(get_as<std::string>(cfg, "dataset.schema"));
    c.train_path = get_as<std::string>(cfg, "dataset.train_path");
    c.test_path = get_as<std::string>(cfg, "dataset.test_path");
    c.subsample_fraction = get_as<double>(cfg, "dataset.subsample_fraction");
    check(c.subsample_fraction > 0.0 && c.subsample_fraction <= 1.0, "dataset.subsample_fraction", "must lie in (0, 1]");

    c.stream.bootstrap_fraction = get_as<double>(cfg, "stream.bootstrap_fraction");
    check(c.stream.bootstrap_fraction > 0.0 && c.stream.bootstrap_fraction < 1.0, "stream.bootstrap_fraction",
          "must lie in (0, 1)");
    c.stream.chunk_size = get_as<std::size_t>(cfg, "stream.chunk_size");
    check(c.stream.chunk_size > 0, "stream.chunk_size", "must be positive");
    c.stream.label_budget_fraction = get_as<double>(cfg, "stream.label_budget_fraction");
    check(c.stream.label_budget_fraction >= 0.0 && c.stream.label_budget_fraction <= 1.0,
          "stream.label_budget_fraction", "must lie in [0, 1]");
    {
        const json& b = cfg["stream"]["bootstrap_prefix"];
        if (!b.is_boolean()) throw ConfigError("key 'stream.bootstrap_prefix' must be true or false");
        c.stream.bootstrap_prefix = b.get<bool>();
    }

    try {
        c.detector.layer_sizes = cfg["detector"]["layer_sizes"].get<std::vector<std::size_t>>();
    } catch (const json::exception&) {
        throw ConfigError("key 'detector.layer_sizes' must be a list of positive integers");
    }
    c.detector.variant = variant_from_string(get_as<std::string>(cfg, "detector.variant"));
    c.detector.learning_rate = get_as<double>(cfg, "detector.learning_rate");
    check(c.detector.learning_rate > 0.0, "detector.learning_rate", "must be positive");
    c.detector.batch_size = get_as<std::size_t>(cfg, "detector.batch_size");
    check(c.detector.batch_size > 0, "detector.batch_size", "must be positive");
    c.detector.epochs_per_fit = get_as<std::size_t>(cfg, "detector.epochs_per_fit");
    check(c.detector.epochs_per_fit > 0, "detector.epochs_per_fit", "must be positive");
    c.detector.bootstrap_epochs = get_as<std::size_t>(cfg, "detector.bootstrap_epochs");
    check(c.detector.bootstrap_epochs > 0, "detector.bootstrap_epochs", "must be positive");
    try {
        c.detector.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("key 'detector.layer_sizes': ") + e.what());
    }

    c.selection.bins = get_as<std::size_t>(cfg, "selection.bins");
    check(c.selection.bins >= 2, "selection.bins", "must be at least 2");
    c.selection.step_size = get_as<double>(cfg, "selection.step_size");
    check(c.selection.step_size > 0.0, "selection.step_size", "must be positive");
    c.selection.iterations = get_as<std::size_t>(cfg, "selection.iterations");
    c.selection.epsilon_floor = get_as<double>(cfg, "selection.epsilon_floor");
    check(c.selection.epsilon_floor > 0.0 && c.selection.epsilon_floor <= 1e-3, "selection.epsilon_floor",
          "must lie in (0, 1e-3]");
    c.selection.bandwidth = get_as<double>(cfg, "selection.bandwidth");
    check(c.selection.bandwidth > 0.0, "selection.bandwidth", "must be positive");

    c.loss.gamma = get_as<double>(cfg, "finetune.gamma");
    check(c.loss.gamma > 0.0, "finetune.gamma", "must be positive");
    c.loss.lambda = get_as<double>(cfg, "finetune.lambda");
    check(c.loss.lambda >= 0.0, "finetune.lambda", "must be nonnegative");

    c.alpha = get_as<double>(cfg, "alpha");
    check(c.alpha > 0.0 && c.alpha < 1.0, "alpha", "must lie in (0, 1)");

    c.ablation.sample_selection = switch_value(cfg, "ablation.sample_selection", "random");
    c.ablation.strategic_forgetting = switch_value(cfg, "ablation.strategic_forgetting", "off");
    c.ablation.regularization = switch_value(cfg, "ablation.regularization", "off");

    const json& seeds = cfg["seeds"];
    const json& reps = cfg["repetitions"];
    if (!reps.is_null()) c.repetitions = get_as<std::size_t>(cfg, "repetitions");
    check(c.repetitions >= 1, "repetitions", "must be at least 1");
    if (!seeds.is_null()) {
        try {
            c.seeds = seeds.get<std::vector<std::uint64_t>>();
        } catch (const json::exception&) {
            throw ConfigError("key 'seeds' must be a list of nonnegative integers");
        }
        if (reps.is_null()) c.repetitions = c.seeds.size();
        check(!c.seeds.empty() && c.seeds.size() == c.repetitions, "seeds", "must list exactly `repetitions` seeds");
    } else {
        c.seeds.clear();
        for (std::size_t i = 0; i < c.repetitions; ++i) c.seeds.push_back(i + 1);
    }
    c.threads = get_as<std::size_t>(cfg, "threads");
    check(c.threads >= 1, "threads", "must be at least 1");

    c.validate();
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                              std::optional<DatasetName> dataset) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
    return config_from_json(user, overrides, dataset);
}

json config_to_json(const ExperimentConfig& c) {
    json j = default_config_json(c.dataset);
    j["dataset"]["train_path"] = c.train_path;
    j["dataset"]["test_path"] = c.test_path;
    j["dataset"]["subsample_fraction"] = c.subsample_fraction;
    j["stream"] = {{"bootstrap_fraction", c.stream.bootstrap_fraction},
                   {"chunk_size", c.stream.chunk_size},
                   {"label_budget_fraction", c.stream.label_budget_fraction},
                   {"bootstrap_prefix", c.stream.bootstrap_prefix}};
    j["detector"] = {{"layer_sizes", c.detector.layer_sizes},       {"variant", to_string(c.detector.variant)},
                     {"learning_rate", c.detector.learning_rate},   {"batch_size", c.detector.batch_size},
                     {"epochs_per_fit", c.detector.epochs_per_fit}, {"bootstrap_epochs", c.detector.bootstrap_epochs}};
    j["selection"] = {{"bins", c.selection.bins},
                      {"step_size", c.selection.step_size},
                      {"iterations", c.selection.iterations},
                      {"epsilon_floor", c.selection.epsilon_floor},
                      {"bandwidth", c.selection.bandwidth}};
    j["finetune"] = {{"gamma", c.loss.gamma}, {"lambda", c.loss.lambda}};
    j["alpha"] = c.alpha;
    j["ablation"] = {{"sample_selection", c.ablation.sample_selection ? "on" : "random"},
                     {"strategic_forgetting", c.ablation.strategic_forgetting ? "on" : "off"},
                     {"regularization", c.ablation.regularization ? "on" : "off"}};
    j["seeds"] = c.seeds;
    j["repetitions"] = c.repetitions;
    j["threads"] = c.threads;
    return j;
}

json metrics_to_json(const Metrics& m) {
    return json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                {"tp", m.tp},             {"fp", m.fp},               {"tn", m.tn},         {"fn", m.fn},
                {"precision_undefined", m.precision_undefined}};
}

json report_to_json(const RunReport& report) {
    json j;
    j["format"] = "ssf-run";
    j["version"] = 1;
    j["config"] = config_to_json(report.config);
    auto& reps = j["repetitions"] = json::array();
    for (const auto& r : report.repetitions) {
        json jr;
        jr["seed"] = r.seed;
        jr["buffer_capacity"] = r.buffer_capacity;
        jr["stream_size"] = r.stream_size;
        jr["bootstrap_metrics"] = metrics_to_json(r.bootstrap_metrics);
        auto& cycles = jr["cycles"] = json::array();
        for (const auto& c : r.cycles) {
            cycles.push_back({{"cycle", c.cycle},
                              {"drifted", c.verdict.drifted},
                              {"statistic", c.verdict.statistic},
                              {"p_value", c.verdict.p_value},
                              {"alpha", c.verdict.alpha},
                              {"budget", c.update.budget},
                              {"effective_k", c.update.effective_k},
                              {"clamped", c.update.clamped},
                              {"dropped", c.update.dropped},
                              {"manual_labels", c.update.manual},
                              {"pseudo_labels", c.update.pseudo},
                              {"metrics", metrics_to_json(c.metrics)}});
        }
        jr["final_metrics"] = metrics_to_json(r.final_metrics);
        jr["manual_labels"] = r.manual_labels;
        reps.push_back(std::move(jr));
    }
    auto summary = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
    j["summary"] = {{"accuracy", summary(report.accuracy)},
                    {"precision", summary(report.precision)},
                    {"recall", summary(report.recall)},
                    {"f1", summary(report.f1)}};
    return j;
}

std::string cycles_csv(const RepetitionReport& rep) {
    std::ostringstream os;
    os << "cycle,drifted,p_value,acc,pre,rec,f1,manual_labels,pseudo_labels,dropped\n";
    os << std::setprecision(17);
    for (const auto& c : rep.cycles) {
        os << c.cycle << ',' << (c.verdict.drifted ? 1 : 0) << ',' << c.verdict.p_value << ',' << c.metrics.accuracy
           << ',' << c.metrics.precision << ',' << c.metrics.recall << ',' << c.metrics.f1 << ',' << c.update.manual
           << ',' << c.update.pseudo << ',' << c.update.dropped << '\n';
    }
    return os.str();
}

std::string summary_text(const RunReport& report, const std::string& title) {
    std::ostringstream os;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    os << "generated " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    os << "dataset " << to_string(report.config.dataset) << ", " << report.repetitions.size() << " repetition(s), "
       << std::fixed << std::setprecision(1) << report.wall_clock_seconds << " s wall clock\n\n";
    os << std::left << std::setw(12) << "Method" << std::right << std::setw(16) << "Acc." << std::setw(16) << "Pre."
       << std::setw(16) << "Rec." << std::setw(16) << "F1" << '\n';
    auto cell = [](const MetricSummary& s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << 100.0 * s.mean << " +- " << 100.0 * s.std;
        return c.str();
    };
    os << std::left << std::setw(12) << title << std::right << std::setw(16) << cell(report.accuracy) << std::setw(16)
       << cell(report.precision) << std::setw(16) << cell(report.recall) << std::setw(16) << cell(report.f1) << '\n';
    if (!report.repetitions.empty()) {
        std::size_t drifts = 0;
        for (const auto& c : report.repetitions.front().cycles) drifts += c.verdict.drifted ? 1 : 0;
        os << "\nfirst repetition: " << report.repetitions.front().cycles.size() << " cycles, " << drifts
           << " with drift, " << report.repetitions.front().manual_labels << " manual labels\n";
    }
    return os.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void emit_report(const RunReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw IoError("cannot create output directory '" + out_dir.string() + "'");
    write_file_atomic(out_dir / "run.json", report_to_json(report).dump(2) + "\n");
    if (report.repetitions.empty()) {
        write_file_atomic(out_dir / "cycles.csv", cycles_csv(RepetitionReport{}));
    } else {
        write_file_atomic(out_dir / "cycles.csv", cycles_csv(report.repetitions.front()));
        for (std::size_t i = 1; i < report.repetitions.size(); ++i)
            write_file_atomic(out_dir / ("cycles_rep" + std::to_string(i) + ".csv"), cycles_csv(report.repetitions[i]));
    }
    write_file_atomic(out_dir / "summary.txt", summary_text(report));
}

}  // namespace ssf
