#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssf/common.hpp"

namespace ssf {

enum class DatasetName { NslKdd, UnswNb15, Custom };

enum class ColumnKind { Numeric, Categorical, Label, Ignore };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    // Categorical: declared categories. With learn_vocabulary the training
    // file's values are merged in; otherwise the list is the full vocabulary.
    std::vector<std::string> categories;
    bool learn_vocabulary = true;
    // Unknown categories encode to an all-zeros block instead of failing.
    bool open_vocabulary = false;
    // Label: raw values meaning "normal"; everything else is abnormal.
    std::vector<std::string> normal_values;
};

struct DatasetSchema {
    DatasetName name = DatasetName::Custom;
    std::vector<ColumnSpec> columns;
    bool has_header = false;
    // 0 disables the width check.
    std::size_t expected_width = 0;

    /// KDDTrain+/KDDTest+ layout: 43 columns, no header, 121 encoded features.
    static DatasetSchema nsl_kdd();
    /// UNSW_NB15_training-set layout: 45 columns with header, 196 encoded features.
    static DatasetSchema unsw_nb15();

    void validate() const;
};

std::string to_string(DatasetName name);
DatasetName dataset_name_from_string(const std::string& s);

/// One encoded traffic sample.
struct FeatureRecord {
    std::vector<double> features;
    std::optional<Label> truth_label;
    std::size_t stream_index = 0;
};

/// Fitted encoding state: per-column min/max and vocabularies. Fitted on
/// the training file and reused verbatim for the test file.
class Encoder {
public:
    struct Column {
        ColumnSpec spec;
        double min = 0.0;
        double max = 0.0;
        std::vector<std::string> vocabulary;  // sorted
    };

    Encoder() = default;

    /// Learns min/max and vocabularies from parsed CSV rows.
    static Encoder fit(const DatasetSchema& schema, const std::vector<std::vector<std::string>>& rows);

    /// Encodes parsed rows. Numeric values outside the fitted range are
    /// clamped to [0,1]. `first_row` offsets row numbers in error messages.
    std::vector<FeatureRecord> encode(const std::vector<std::vector<std::string>>& rows,
                                      std::size_t first_row = 0) const;

    std::size_t width() const { return width_; }
    const DatasetSchema& schema() const { return schema_; }
    const std::vector<Column>& columns() const { return columns_; }

    std::string to_json() const;
    static Encoder from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Encoder load(const std::filesystem::path& path);

private:
    DatasetSchema schema_;
    std::vector<Column> columns_;
    std::size_t width_ = 0;

    void compute_width();
};

/// Reads a comma-separated file into trimmed string fields. Every row must
/// have `expected_columns` fields.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, bool has_header,
                                               std::size_t expected_columns);

struct EncodedDataset {
    std::vector<FeatureRecord> records;
    Encoder encoder;
};

/// Parses a training file, fits the encoder on it and encodes every row.
/// stream_index is the row position in the file.
EncodedDataset load_and_encode(const std::filesystem::path& path, const DatasetSchema& schema);

/// Encodes a file (e.g. the test split) with a previously fitted encoder.
std::vector<FeatureRecord> load_with_encoder(const std::filesystem::path& path, const Encoder& encoder);

struct StreamPlan {
    double bootstrap_fraction = 0.2;
    std::size_t chunk_size = 5000;
    double label_budget_fraction = 0.01;
    // Take the bootstrap set as the leading rows instead of a uniform draw
    // (for time-ordered files whose later rows must stay unseen).
    bool bootstrap_prefix = false;

    /// Labeling budget per chunk: round(label_budget_fraction * chunk_size).
    std::size_t budget() const;
    void validate() const;
};

struct StreamSplit {
    std::vector<FeatureRecord> bootstrap;  // labels exposed
    std::vector<FeatureRecord> stream;     // labels stripped, original order
    std::vector<std::pair<std::size_t, Label>> hidden_labels;  // stream_index -> label
};

/// Draws floor(fraction * n) records uniformly (seeded), or the first ones
/// with bootstrap_prefix, as the labeled bootstrap set; the remainder keeps file order and loses its labels.
StreamSplit split_bootstrap(std::vector<FeatureRecord> records, const StreamPlan& plan, std::uint64_t seed);

/// Consecutive non-overlapping chunks; the last one may be partial.
std::vector<std::span<const FeatureRecord>> stream_chunks(std::span<const FeatureRecord> stream,
                                                          std::size_t chunk_size);

/// Seeded uniform subsample keeping original order.
std::vector<FeatureRecord> subsample(std::vector<FeatureRecord> records, double fraction, std::uint64_t seed);

}  // namespace ssf
