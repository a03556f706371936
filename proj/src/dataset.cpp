#include "ssf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ssf {

namespace {

ColumnSpec numeric(std::string name) { return ColumnSpec{std::move(name), ColumnKind::Numeric, {}, true, false, {}}; }

ColumnSpec ignored(std::string name) { return ColumnSpec{std::move(name), ColumnKind::Ignore, {}, true, false, {}}; }

ColumnSpec categorical(std::string name, std::vector<std::string> seed = {}) {
    return ColumnSpec{std::move(name), ColumnKind::Categorical, std::move(seed), true, true, {}};
}

ColumnSpec label(std::string name, std::vector<std::string> normal_values) {
    return ColumnSpec{std::move(name), ColumnKind::Label, {}, true, false, std::move(normal_values)};
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

const char* kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Numeric: return "numeric";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Label: return "label";
        case ColumnKind::Ignore: return "ignore";
    }
    return "?";
}

ColumnKind kind_from_name(const std::string& s) {
    if (s == "numeric") return ColumnKind::Numeric;
    if (s == "categorical") return ColumnKind::Categorical;
    if (s == "label") return ColumnKind::Label;
    if (s == "ignore") return ColumnKind::Ignore;
    throw DataError("unknown column kind '" + s + "'");
}

}  // namespace

DatasetSchema DatasetSchema::nsl_kdd() {
    DatasetSchema s;
    s.name = DatasetName::NslKdd;
    s.has_header = false;
    s.expected_width = 121;
    s.columns = {
        numeric("duration"),
        categorical("protocol_type", {"icmp", "tcp", "udp"}),
        categorical("service"),
        categorical("flag", {"OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH"}),
        numeric("src_bytes"),
        numeric("dst_bytes"),
        numeric("land"),
        numeric("wrong_fragment"),
        numeric("urgent"),
        numeric("hot"),
        numeric("num_failed_logins"),
        numeric("logged_in"),
        numeric("num_compromised"),
        numeric("root_shell"),
        numeric("su_attempted"),
        numeric("num_root"),
        numeric("num_file_creations"),
        numeric("num_shells"),
        numeric("num_access_files"),
        ignored("num_outbound_cmds"),  // constant zero in NSL-KDD
        numeric("is_host_login"),
        numeric("is_guest_login"),
        numeric("count"),
        numeric("srv_count"),
        numeric("serror_rate"),
        numeric("srv_serror_rate"),
        numeric("rerror_rate"),
        numeric("srv_rerror_rate"),
        numeric("same_srv_rate"),
        numeric("diff_srv_rate"),
        numeric("srv_diff_host_rate"),
        numeric("dst_host_count"),
        numeric("dst_host_srv_count"),
        numeric("dst_host_same_srv_rate"),
        numeric("dst_host_diff_srv_rate"),
        numeric("dst_host_same_src_port_rate"),
        numeric("dst_host_srv_diff_host_rate"),
        numeric("dst_host_serror_rate"),
        numeric("dst_host_srv_serror_rate"),
        numeric("dst_host_rerror_rate"),
        numeric("dst_host_srv_rerror_rate"),
        label("label", {"normal"}),
        ignored("difficulty"),
    };
    return s;
}

DatasetSchema DatasetSchema::unsw_nb15() {
    DatasetSchema s;
    s.name = DatasetName::UnswNb15;
    s.has_header = true;
    s.expected_width = 196;
    s.columns = {
        ignored("id"),
        numeric("dur"),
        categorical("proto"),
        categorical("service"),
        // ACC and CLO only occur in the test split.
        categorical("state", {"ACC", "CLO"}),
    };
    for (const char* n : {"spkts", "dpkts", "sbytes", "dbytes", "rate", "sttl", "dttl", "sload", "dload", "sloss",
                          "dloss", "sinpkt", "dinpkt", "sjit", "djit", "swin", "stcpb", "dtcpb", "dwin", "tcprtt",
                          "synack", "ackdat", "smean", "dmean", "trans_depth", "response_body_len", "ct_srv_src",
                          "ct_state_ttl", "ct_dst_ltm", "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm",
                          "is_ftp_login", "ct_ftp_cmd", "ct_flw_http_mthd", "ct_src_ltm", "ct_srv_dst",
                          "is_sm_ips_ports"}) {
        s.columns.push_back(numeric(n));
    }
    s.columns.push_back(ignored("attack_cat"));
    s.columns.push_back(label("label", {"0"}));
    return s;
}

void DatasetSchema::validate() const {
    if (columns.empty()) throw DataError("schema has no columns");
    std::size_t labels = 0;
    for (const auto& c : columns) {
        if (c.kind == ColumnKind::Label) {
            ++labels;
            if (c.normal_values.empty()) throw DataError("label column '" + c.name + "' has no normal values");
        }
        if (c.kind == ColumnKind::Categorical) {
            if (c.categories.empty() && !c.learn_vocabulary)
                throw DataError("categorical column '" + c.name + "' has an empty category list");
            std::set<std::string> seen(c.categories.begin(), c.categories.end());
            if (seen.size() != c.categories.size())
                throw DataError("categorical column '" + c.name + "' has duplicate categories");
        }
    }
    if (labels > 1) throw DataError("schema has more than one label column");
}

std::string to_string(DatasetName name) {
    switch (name) {
        case DatasetName::NslKdd: return "nslkdd";
        case DatasetName::UnswNb15: return "unsw";
        case DatasetName::Custom: return "custom";
    }
    return "custom";
}

DatasetName dataset_name_from_string(const std::string& s) {
    if (s == "nslkdd") return DatasetName::NslKdd;
    if (s == "unsw") return DatasetName::UnswNb15;
    if (s == "custom") return DatasetName::Custom;
    throw ConfigError("unknown dataset '" + s + "' (expected nslkdd, unsw or custom)");
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, bool has_header,
                                               std::size_t expected_columns) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::size_t line_no = 0;
    bool skipped_header = !has_header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        std::vector<std::string> fields;
        fields.reserve(expected_columns);
        std::string_view rest(line);
        while (true) {
            auto pos = rest.find(',');
            fields.emplace_back(trim(rest.substr(0, pos)));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (fields.size() != expected_columns) {
            std::ostringstream os;
            os << path.string() << ": row " << rows.size() << " (line " << line_no << ") has " << fields.size()
               << " columns, expected " << expected_columns;
            throw DataError(os.str());
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

Encoder Encoder::fit(const DatasetSchema& schema, const std::vector<std::vector<std::string>>& rows) {
    schema.validate();
    Encoder enc;
    enc.schema_ = schema;
    for (const auto& spec : schema.columns) enc.columns_.push_back(Column{spec, 0.0, 0.0, {}});

    for (std::size_t c = 0; c < enc.columns_.size(); ++c) {
        auto& col = enc.columns_[c];
        if (col.spec.kind == ColumnKind::Numeric) {
            bool first = true;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                auto v = parse_number(rows[r][c]);
                if (!v) {
                    throw DataError("row " + std::to_string(r) + ", column '" + col.spec.name +
                                    "': not a finite number: '" + rows[r][c] + "'");
                }
                if (first) {
                    col.min = col.max = *v;
                    first = false;
                } else {
                    col.min = std::min(col.min, *v);
                    col.max = std::max(col.max, *v);
                }
            }
        } else if (col.spec.kind == ColumnKind::Categorical) {
            std::set<std::string> vocab(col.spec.categories.begin(), col.spec.categories.end());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto& v = rows[r][c];
                if (vocab.count(v)) continue;
                if (!col.spec.learn_vocabulary) {
                    throw DataError("row " + std::to_string(r) + ", column '" + col.spec.name +
                                    "': unknown category '" + v + "'");
                }
                vocab.insert(v);
            }
            if (vocab.empty()) throw DataError("categorical column '" + col.spec.name + "' has no categories");
            col.vocabulary.assign(vocab.begin(), vocab.end());
        }
    }
    enc.compute_width();
    if (schema.expected_width != 0 && enc.width_ != schema.expected_width) {
        throw DataError("encoded width " + std::to_string(enc.width_) + " does not match expected width " +
                        std::to_string(schema.expected_width) + " for dataset " + to_string(schema.name));
    }
    return enc;
}

void Encoder::compute_width() {
    width_ = 0;
    for (const auto& c : columns_) {
        if (c.spec.kind == ColumnKind::Numeric) width_ += 1;
        if (c.spec.kind == ColumnKind::Categorical) width_ += c.vocabulary.size();
    }
}

std::vector<FeatureRecord> Encoder::encode(const std::vector<std::vector<std::string>>& rows,
                                           std::size_t first_row) const {
    std::vector<FeatureRecord> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::size_t row_no = first_row + r;
        if (row.size() != columns_.size()) {
            throw DataError("row " + std::to_string(row_no) + " has " + std::to_string(row.size()) +
                            " columns, expected " + std::to_string(columns_.size()));
        }
        FeatureRecord rec;
        rec.stream_index = row_no;
        rec.features.reserve(width_);
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            const auto& col = columns_[c];
            switch (col.spec.kind) {
                case ColumnKind::Numeric: {
                    auto v = parse_number(row[c]);
                    if (!v) {
                        throw DataError("row " + std::to_string(row_no) + ", column '" + col.spec.name +
                                        "': not a finite number: '" + row[c] + "'");
                    }
                    double x = 0.0;
                    if (col.max > col.min) x = std::clamp((*v - col.min) / (col.max - col.min), 0.0, 1.0);
                    rec.features.push_back(x);
                    break;
                }
                case ColumnKind::Categorical: {
                    auto it = std::lower_bound(col.vocabulary.begin(), col.vocabulary.end(), row[c]);
                    const bool known = it != col.vocabulary.end() && *it == row[c];
                    if (!known && !col.spec.open_vocabulary) {
                        throw DataError("row " + std::to_string(row_no) + ", column '" + col.spec.name +
                                        "': unknown category '" + row[c] + "'");
                    }
                    const std::size_t hot = known ? static_cast<std::size_t>(it - col.vocabulary.begin())
                                                  : col.vocabulary.size();
                    for (std::size_t k = 0; k < col.vocabulary.size(); ++k) rec.features.push_back(k == hot ? 1.0 : 0.0);
                    break;
                }
                case ColumnKind::Label: {
                    const auto& nv = col.spec.normal_values;
                    rec.truth_label = std::find(nv.begin(), nv.end(), row[c]) != nv.end() ? kNormal : kAbnormal;
                    break;
                }
                case ColumnKind::Ignore: break;
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::string Encoder::to_json() const {
    nlohmann::json j;
    j["format"] = "ssf-encoder";
    j["version"] = 1;
    j["dataset"] = to_string(schema_.name);
    j["has_header"] = schema_.has_header;
    j["expected_width"] = schema_.expected_width;
    j["width"] = width_;
    auto& cols = j["columns"] = nlohmann::json::array();
    for (const auto& c : columns_) {
        nlohmann::json jc;
        jc["name"] = c.spec.name;
        jc["kind"] = kind_name(c.spec.kind);
        if (c.spec.kind == ColumnKind::Numeric) {
            jc["min"] = c.min;
            jc["max"] = c.max;
        } else if (c.spec.kind == ColumnKind::Categorical) {
            jc["vocabulary"] = c.vocabulary;
            jc["open_vocabulary"] = c.spec.open_vocabulary;
        } else if (c.spec.kind == ColumnKind::Label) {
            jc["normal_values"] = c.spec.normal_values;
        }
        cols.push_back(std::move(jc));
    }
    return j.dump(2);
}

Encoder Encoder::from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != "ssf-encoder") throw DataError("not an encoder file");
        Encoder enc;
        enc.schema_.name = dataset_name_from_string(j.at("dataset").get<std::string>());
        enc.schema_.has_header = j.at("has_header").get<bool>();
        enc.schema_.expected_width = j.at("expected_width").get<std::size_t>();
        for (const auto& jc : j.at("columns")) {
            Column c;
            c.spec.name = jc.at("name").get<std::string>();
            c.spec.kind = kind_from_name(jc.at("kind").get<std::string>());
            if (c.spec.kind == ColumnKind::Numeric) {
                c.min = jc.at("min").get<double>();
                c.max = jc.at("max").get<double>();
            } else if (c.spec.kind == ColumnKind::Categorical) {
                c.vocabulary = jc.at("vocabulary").get<std::vector<std::string>>();
                c.spec.categories = c.vocabulary;
                c.spec.learn_vocabulary = false;
                c.spec.open_vocabulary = jc.at("open_vocabulary").get<bool>();
            } else if (c.spec.kind == ColumnKind::Label) {
                c.spec.normal_values = jc.at("normal_values").get<std::vector<std::string>>();
            }
            enc.schema_.columns.push_back(c.spec);
            enc.columns_.push_back(std::move(c));
        }
        enc.compute_width();
        return enc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid encoder state: ") + e.what());
    }
}

void Encoder::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << to_json() << '\n';
}

Encoder Encoder::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

EncodedDataset load_and_encode(const std::filesystem::path& path, const DatasetSchema& schema) {
    schema.validate();
    auto rows = read_csv(path, schema.has_header, schema.columns.size());
    EncodedDataset ds;
    ds.encoder = Encoder::fit(schema, rows);
    ds.records = ds.encoder.encode(rows);
    return ds;
}

std::vector<FeatureRecord> load_with_encoder(const std::filesystem::path& path, const Encoder& encoder) {
    auto rows = read_csv(path, encoder.schema().has_header, encoder.columns().size());
    return encoder.encode(rows);
}

// ---------------------------------------------------------------------------

std::size_t StreamPlan::budget() const {
    return static_cast<std::size_t>(std::llround(label_budget_fraction * static_cast<double>(chunk_size)));
}

void StreamPlan::validate() const {
    if (!(bootstrap_fraction > 0.0 && bootstrap_fraction < 1.0))
        throw ConfigError("stream.bootstrap_fraction must lie in (0,1)");
    if (chunk_size == 0) throw ConfigError("stream.chunk_size must be positive");
    if (!(label_budget_fraction >= 0.0 && label_budget_fraction <= 1.0))
        throw ConfigError("stream.label_budget_fraction must lie in [0,1]");
}

StreamSplit split_bootstrap(std::vector<FeatureRecord> records, const StreamPlan& plan, std::uint64_t seed) {
    if (records.empty()) throw DataError("split_bootstrap: no records");
    if (!(plan.bootstrap_fraction > 0.0 && plan.bootstrap_fraction < 1.0))
        throw ConfigError("stream.bootstrap_fraction must lie in (0,1)");
    const std::size_t n = records.size();
    // Floor, not round: 0.2 of the full NSL-KDD train set is 25,194 records.
    const auto take = static_cast<std::size_t>(std::floor(plan.bootstrap_fraction * static_cast<double>(n) + 1e-9));
    std::vector<std::size_t> chosen;
    if (plan.bootstrap_prefix) {
        for (std::size_t i = 0; i < take; ++i) chosen.push_back(i);
    } else {
        chosen = sample_indices(n, take, seed);
    }

    StreamSplit out;
    out.bootstrap.reserve(chosen.size());
    out.stream.reserve(n - chosen.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (next < chosen.size() && chosen[next] == i) {
            if (!records[i].truth_label) throw DataError("bootstrap record " + std::to_string(i) + " has no label");
            out.bootstrap.push_back(std::move(records[i]));
            ++next;
        } else {
            auto& rec = records[i];
            if (rec.truth_label) out.hidden_labels.emplace_back(rec.stream_index, *rec.truth_label);
            rec.truth_label.reset();
            out.stream.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<std::span<const FeatureRecord>> stream_chunks(std::span<const FeatureRecord> stream,
                                                          std::size_t chunk_size) {
    if (chunk_size == 0) throw ConfigError("chunk_size must be positive");
    std::vector<std::span<const FeatureRecord>> out;
    for (std::size_t start = 0; start < stream.size(); start += chunk_size)
        out.push_back(stream.subspan(start, std::min(chunk_size, stream.size() - start)));
    return out;
}

std::vector<FeatureRecord> subsample(std::vector<FeatureRecord> records, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("dataset.subsample_fraction must lie in (0,1]");
    if (fraction == 1.0) return records;
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(records.size())));
    const auto idx = sample_indices(records.size(), take, seed);
    std::vector<FeatureRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(std::move(records[i]));
    return out;
}

}  // namespace ssf
