#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssf/common.hpp"
#include "ssf/dataset.hpp"

namespace ssf {

enum class Variant {
    AeGaussian,    // autoencoder + Gaussian posterior over reconstruction error
    AeClassifier,  // autoencoder with a sigmoid classifier unit on top
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

enum class Activation { Relu, Identity, Sigmoid };

struct DetectorConfig {
    std::vector<std::size_t> layer_sizes;
    Variant variant = Variant::AeGaussian;
    double learning_rate = 0.001;
    std::size_t batch_size = 128;
    std::size_t epochs_per_fit = 5;
    std::size_t bootstrap_epochs = 50;
    std::uint64_t rng_seed = 0;

    static DetectorConfig nsl_kdd();    // [121, 64, 32, 64, 121], AE_GAUSSIAN
    static DetectorConfig unsw_nb15();  // [196, 128, 64, 128, 196, 1], AE_CLASSIFIER

    void validate() const;
};

/// Per-class normal fits of reconstruction error; the score is the
/// equal-prior posterior of the normal class.
struct GaussianCalibration {
    static constexpr double kStdFloor = 1e-6;

    double mean_normal = 0.0;
    double std_normal = 1.0;
    double mean_abnormal = 1.0;
    double std_abnormal = 1.0;

    /// log N(e; normal) - log N(e; abnormal).
    double log_odds(double error) const;
    /// d log_odds / d error.
    double log_odds_slope(double error) const;
    /// Repulsion margin for abnormal samples in the task loss.
    double margin() const { return mean_normal + 3.0 * std_normal; }

    /// Fits from errors split by label. A class with no samples falls back
    /// to a placement relative to the other class.
    static GaussianCalibration fit(std::span<const double> errors, std::span<const Label> labels);
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // row-major in x out
    std::vector<double> bias;
    Activation activation = Activation::Relu;

    double& w(std::size_t i, std::size_t o) { return weights[i * out + o]; }
    double w(std::size_t i, std::size_t o) const { return weights[i * out + o]; }
};

class DetectorModel {
public:
    DetectorModel() = default;

    const DetectorConfig& config() const { return config_; }
    Variant variant() const { return config_.variant; }
    std::size_t input_width() const { return config_.layer_sizes.front(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    const std::optional<GaussianCalibration>& calibration() const { return calibration_; }
    void set_calibration(std::optional<GaussianCalibration> c) { calibration_ = std::move(c); }

    std::size_t parameter_count() const;
    /// All weights then biases, layer by layer.
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> params);

    /// Final-layer output (reconstruction, or sigmoid probability of the
    /// abnormal class for the classifier variant).
    std::vector<double> forward(std::span<const double> x) const;

    /// Mean squared reconstruction error. For the classifier variant this is
    /// taken at the layer whose width equals the input width.
    double reconstruction_error(std::span<const double> x) const;

    std::string to_json() const;
    static DetectorModel from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static DetectorModel load(const std::filesystem::path& path);

    bool operator==(const DetectorModel&) const;

    friend DetectorModel init_model(const DetectorConfig& config);

private:
    DetectorConfig config_;
    std::vector<DenseLayer> layers_;
    std::optional<GaussianCalibration> calibration_;
};

inline constexpr double kScoreFloor = 1e-7;

/// Glorot-uniform weights, zero biases, deterministic in config.rng_seed.
DetectorModel init_model(const DetectorConfig& config);

/// f(x) = P(y = normal | x), clamped to [1e-7, 1 - 1e-7].
double score(const DetectorModel& model, std::span<const double> x);
std::vector<double> score_all(const DetectorModel& model, std::span<const FeatureRecord> xs);

/// 0 (normal) iff f(x) >= 0.5.
Label predict(const DetectorModel& model, std::span<const double> x);
Label label_from_score(double f);

/// Samples and per-sample loss weights for one call to fit. Distillation
/// terms are optional (empty vectors disable them).
struct TrainingSet {
    std::vector<std::span<const double>> inputs;
    std::vector<Label> labels;
    std::vector<double> weights;
    std::vector<double> distill_targets;
    std::vector<double> distill_weights;

    std::size_t size() const { return inputs.size(); }
    void validate(std::size_t input_width) const;
};

/// Per-sample task loss for a label (reconstruction / hinge for the
/// Gaussian variant, binary cross-entropy for the classifier).
double sample_task_loss(const DetectorModel& model, std::span<const double> x, Label y, double margin);

/// Binary cross-entropy of the model's f(x) against a soft target.
double distillation_loss(const DetectorModel& model, std::span<const double> x, double target);

/// (1/|S|) sum_i [w_i * task_i + dw_i * distill_i] over `subset` (all
/// samples when empty), with an optional gradient in flat_parameters order.
double objective(const DetectorModel& model, const TrainingSet& data, std::span<const std::size_t> subset,
                 double margin, std::vector<double>* gradient);

/// Margin used by the Gaussian variant's task loss for the current model.
double task_margin(const DetectorModel& model);

/// Mini-batch SGD for opts.epochs_per_fit epochs, shuffled with
/// opts.rng_seed. The Gaussian variant is recalibrated afterwards.
DetectorModel fit(DetectorModel model, const TrainingSet& data, const DetectorConfig& opts);

/// Recomputes the Gaussian calibration from the model's reconstruction
/// errors on labeled data.
void recalibrate(DetectorModel& model, std::span<const std::span<const double>> inputs, std::span<const Label> labels);

class ModelSnapshot {
public:
    explicit ModelSnapshot(const DetectorModel& model) : model_(std::make_shared<const DetectorModel>(model)) {}
    const DetectorModel& model() const { return *model_; }

private:
    std::shared_ptr<const DetectorModel> model_;
};

ModelSnapshot take_snapshot(const DetectorModel& model);
std::vector<double> snapshot_outputs(const ModelSnapshot& snapshot, std::span<const std::span<const double>> xs);

}  // namespace ssf
