// Experiment driver: run, evaluate, ablate, inspect-buffer, encode.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssf/config.hpp"
#include "ssf/log.hpp"
#include "ssf/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct Options {
    std::string config_path;
    std::string out_dir = "ssf_out";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string dataset;
    bool buffer_features = false;

    // evaluate / encode / inspect-buffer
    std::string model_path;
    std::string encoder_path;
    std::string data_path;
    std::string output_path;
    std::string buffer_path;
};

std::optional<ssf::DatasetName> dataset_flag(const Options& o) {
    if (o.dataset.empty()) return std::nullopt;
    return ssf::dataset_name_from_string(o.dataset);
}

ssf::ExperimentConfig load_config(const Options& o) {
    auto config = ssf::parse_config(o.config_path, o.overrides, dataset_flag(o));
    if (o.seed) {
        // --seed N: repetition i uses seed N + i.
        for (std::size_t i = 0; i < config.seeds.size(); ++i) config.seeds[i] = *o.seed + i;
    }
    return config;
}

void write_run_artifacts(const ssf::RunReport& report, const ssf::Encoder& encoder, const Options& o) {
    const std::filesystem::path out(o.out_dir);
    ssf::emit_report(report, out);
    ssf::write_file_atomic(out / "encoder.json", encoder.to_json());
    if (!report.repetitions.empty()) {
        const auto& first = report.repetitions.front();
        ssf::write_file_atomic(out / "buffer.jsonl", first.final_buffer.to_jsonl(o.buffer_features));
        ssf::write_file_atomic(out / "model.json", first.final_model.to_json());
    }
}

int cmd_run(const Options& o) {
    const auto config = load_config(o);
    const auto data = ssf::load_experiment_data(config);
    auto report = ssf::run_experiment(config, data.train, data.test);
    write_run_artifacts(report, data.encoder, o);
    std::cout << ssf::summary_text(report);
    return kExitOk;
}

int cmd_ablate(const Options& o) {
    const auto config = load_config(o);
    const auto data = ssf::load_experiment_data(config);
    const auto arms = ssf::run_ablation_suite(config, data.train, data.test);
    const std::filesystem::path out(o.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    nlohmann::json j;
    j["format"] = "ssf-ablation";
    for (const auto& arm : arms) j["arms"].push_back({{"name", arm.name}, {"run", ssf::report_to_json(arm.report)}});
    ssf::write_file_atomic(out / "ablation.json", j.dump(2) + "\n");
    const auto table = ssf::format_ablation_table(arms);
    ssf::write_file_atomic(out / "ablation.txt", table);
    std::cout << table;
    return kExitOk;
}

int cmd_evaluate(const Options& o) {
    if (o.model_path.empty() || o.encoder_path.empty() || o.data_path.empty())
        throw ssf::ConfigError("evaluate needs --model, --encoder and --data");
    const auto model = ssf::DetectorModel::load(o.model_path);
    const auto encoder = ssf::Encoder::load(o.encoder_path);
    if (encoder.width() != model.input_width())
        throw ssf::ConfigError("encoder width " + std::to_string(encoder.width()) + " does not match model input " +
                               std::to_string(model.input_width()));
    const auto records = ssf::load_with_encoder(o.data_path, encoder);
    const auto m = ssf::evaluate(model, records);
    const auto text = ssf::metrics_to_json(m).dump(2) + "\n";
    if (!o.output_path.empty()) ssf::write_file_atomic(o.output_path, text);
    std::cout << text;
    return kExitOk;
}

int cmd_inspect_buffer(const Options& o) {
    std::filesystem::path path = o.buffer_path;
    if (path.empty()) path = std::filesystem::path(o.out_dir) / "buffer.jsonl";
    if (std::filesystem::is_directory(path)) path /= "buffer.jsonl";
    std::ifstream in(path);
    if (!in) throw ssf::IoError("cannot open buffer '" + path.string() + "'");

    std::size_t total = 0;
    std::map<std::string, std::size_t> by_provenance;
    std::map<int, std::size_t> by_label;
    std::map<std::size_t, std::size_t> by_cycle;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("label") || !j.contains("provenance") || !j.contains("inserted_cycle"))
            throw ssf::DataError(path.string() + ":" + std::to_string(line_no) + ": malformed buffer entry");
        ++total;
        ++by_provenance[j["provenance"].get<std::string>()];
        ++by_label[j["label"].get<int>()];
        ++by_cycle[j["inserted_cycle"].get<std::size_t>()];
    }
    std::cout << "entries " << total << "\n";
    for (const auto& [k, v] : by_provenance) std::cout << "provenance " << k << " " << v << "\n";
    for (const auto& [k, v] : by_label) std::cout << "label " << (k == ssf::kNormal ? "normal" : "abnormal") << " " << v << "\n";
    for (const auto& [k, v] : by_cycle) std::cout << "inserted_cycle " << k << " " << v << "\n";
    return kExitOk;
}

int cmd_encode(const Options& o) {
    if (o.data_path.empty() || o.output_path.empty()) throw ssf::ConfigError("encode needs --data and --output");
    std::vector<ssf::FeatureRecord> records;
    if (!o.encoder_path.empty() && std::filesystem::exists(o.encoder_path)) {
        records = ssf::load_with_encoder(o.data_path, ssf::Encoder::load(o.encoder_path));
    } else {
        const auto name = dataset_flag(o).value_or(ssf::DatasetName::NslKdd);
        const auto schema = name == ssf::DatasetName::UnswNb15 ? ssf::DatasetSchema::unsw_nb15()
                                                               : ssf::DatasetSchema::nsl_kdd();
        auto encoded = ssf::load_and_encode(o.data_path, schema);
        records = std::move(encoded.records);
        if (!o.encoder_path.empty()) encoded.encoder.save(o.encoder_path);
    }
    std::ostringstream os;
    os.precision(17);
    for (const auto& r : records) {
        for (std::size_t i = 0; i < r.features.size(); ++i) os << (i ? "," : "") << r.features[i];
        os << ',' << (r.truth_label ? std::to_string(*r.truth_label) : std::string()) << '\n';
    }
    ssf::write_file_atomic(o.output_path, os.str());
    ssf::log_info("encoded " + std::to_string(records.size()) + " rows");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Strategic sample selection and forgetting for streaming intrusion detection"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* c = sub->add_option("--config", o.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
        if (need_config) c->required();
        sub->add_option("--out", o.out_dir, "Output directory");
        sub->add_option("--set", o.overrides, "Config override key=value (repeatable)")->take_all();
        sub->add_option("--seed", o.seed, "Base seed; repetition i uses seed + i");
        sub->add_option("--dataset", o.dataset, "Schema preset")->check(CLI::IsMember({"nslkdd", "unsw"}));
    };

    auto* run = app.add_subcommand("run", "Run the streaming experiment");
    add_common(run, true);
    run->add_flag("--buffer-features", o.buffer_features, "Include feature vectors in buffer.jsonl");

    auto* ablate = app.add_subcommand("ablate", "Run the full method and its three ablations");
    add_common(ablate, true);

    auto* evaluate = app.add_subcommand("evaluate", "Score a saved model on a labeled CSV");
    evaluate->add_option("--model", o.model_path, "model.json")->required();
    evaluate->add_option("--encoder", o.encoder_path, "encoder.json")->required();
    evaluate->add_option("--data", o.data_path, "Labeled CSV")->required();
    evaluate->add_option("--output", o.output_path, "Write metrics JSON here too");

    auto* inspect = app.add_subcommand("inspect-buffer", "Summarize an exported memory buffer");
    inspect->add_option("buffer", o.buffer_path, "buffer.jsonl or a run directory");
    inspect->add_option("--out", o.out_dir, "Run directory");

    auto* encode = app.add_subcommand("encode", "Encode a raw CSV into [0,1] feature vectors");
    encode->add_option("--data", o.data_path, "Raw CSV")->required();
    encode->add_option("--output", o.output_path, "Encoded CSV (features..., label)")->required();
    encode->add_option("--encoder", o.encoder_path, "Encoder JSON: reused if present, written otherwise");
    encode->add_option("--dataset", o.dataset, "Schema preset")->check(CLI::IsMember({"nslkdd", "unsw"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(o);
        if (*ablate) return cmd_ablate(o);
        if (*evaluate) return cmd_evaluate(o);
        if (*inspect) return cmd_inspect_buffer(o);
        if (*encode) return cmd_encode(o);
    } catch (const ssf::ConfigError& e) {
        ssf::log_error(std::string("config error: ") + e.what());
        return kExitConfig;
    } catch (const ssf::DataError& e) {
        ssf::log_error(std::string("data error: ") + e.what());
        return kExitConfig;
    } catch (const ssf::IoError& e) {
        ssf::log_error(std::string("i/o error: ") + e.what());
        return kExitIo;
    } catch (const ssf::NumericalError& e) {
        ssf::log_error(std::string("numerical failure: ") + e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        ssf::log_error(std::string("error: ") + e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
