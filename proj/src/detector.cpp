#include "ssf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ssf {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double clamp_score(double f) { return std::clamp(f, kScoreFloor, 1.0 - kScoreFloor); }

double bce(double target, double f) {
    f = clamp_score(f);
    return -(target * std::log(f) + (1.0 - target) * std::log(1.0 - f));
}

bool is_palindrome(const std::vector<std::size_t>& v) { return std::equal(v.begin(), v.begin() + v.size() / 2, v.rbegin()); }

// Activations of one forward pass; z[l] is the pre-activation of layer l,
// a[l + 1] its output, a[0] the input.
struct Trace {
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> a;
};

void run_forward(const std::vector<DenseLayer>& layers, std::span<const double> x, Trace& t) {
    t.z.resize(layers.size());
    t.a.resize(layers.size() + 1);
    t.a[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const auto& in = t.a[l];
        auto& z = t.z[l];
        z.assign(layer.bias.begin(), layer.bias.end());
        for (std::size_t i = 0; i < layer.in; ++i) {
            const double xi = in[i];
            if (xi == 0.0) continue;
            const double* row = layer.weights.data() + i * layer.out;
            for (std::size_t o = 0; o < layer.out; ++o) z[o] += xi * row[o];
        }
        auto& a = t.a[l + 1];
        a.resize(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            switch (layer.activation) {
                case Activation::Relu: a[o] = z[o] > 0.0 ? z[o] : 0.0; break;
                case Activation::Identity: a[o] = z[o]; break;
                case Activation::Sigmoid: a[o] = sigmoid(z[o]); break;
            }
        }
    }
}

double mse(std::span<const double> x, std::span<const double> r) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - r[j];
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

std::size_t reconstruction_layer(const DetectorConfig& c) {
    return c.variant == Variant::AeGaussian ? c.layer_sizes.size() - 2 : c.layer_sizes.size() - 3;
}

double gaussian_score(const GaussianCalibration& cal, double error) { return clamp_score(sigmoid(cal.log_odds(error))); }

}  // namespace

std::string to_string(Variant v) { return v == Variant::AeGaussian ? "ae_gaussian" : "ae_classifier"; }

Variant variant_from_string(const std::string& s) {
    if (s == "ae_gaussian") return Variant::AeGaussian;
    if (s == "ae_classifier") return Variant::AeClassifier;
    throw ConfigError("unknown detector variant '" + s + "' (expected ae_gaussian or ae_classifier)");
}

DetectorConfig DetectorConfig::nsl_kdd() {
    DetectorConfig c;
    c.layer_sizes = {121, 64, 32, 64, 121};
    c.variant = Variant::AeGaussian;
    return c;
}

DetectorConfig DetectorConfig::unsw_nb15() {
    DetectorConfig c;
    c.layer_sizes = {196, 128, 64, 128, 196, 1};
    c.variant = Variant::AeClassifier;
    return c;
}

void DetectorConfig::validate() const {
    if (layer_sizes.size() < 3) throw ConfigError("detector.layer_sizes needs at least 3 entries");
    for (auto s : layer_sizes)
        if (s == 0) throw ConfigError("detector.layer_sizes entries must be positive");
    if (variant == Variant::AeGaussian && !is_palindrome(layer_sizes))
        throw ConfigError("detector.layer_sizes must be a palindrome for ae_gaussian");
    if (variant == Variant::AeClassifier) {
        if (layer_sizes.back() != 1) throw ConfigError("detector.layer_sizes must end in 1 for ae_classifier");
        if (layer_sizes.size() < 4 || layer_sizes[layer_sizes.size() - 2] != layer_sizes.front())
            throw ConfigError("detector.layer_sizes for ae_classifier must be an autoencoder followed by 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("detector.learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("detector.batch_size must be positive");
    if (epochs_per_fit == 0) throw ConfigError("detector.epochs_per_fit must be positive");
    if (bootstrap_epochs == 0) throw ConfigError("detector.bootstrap_epochs must be positive");
}

// ---------------------------------------------------------------------------

double GaussianCalibration::log_odds(double e) const {
    const double zn = (e - mean_normal) / std_normal;
    const double za = (e - mean_abnormal) / std_abnormal;
    return -0.5 * zn * zn - std::log(std_normal) + 0.5 * za * za + std::log(std_abnormal);
}

double GaussianCalibration::log_odds_slope(double e) const {
    return -(e - mean_normal) / (std_normal * std_normal) + (e - mean_abnormal) / (std_abnormal * std_abnormal);
}

GaussianCalibration GaussianCalibration::fit(std::span<const double> errors, std::span<const Label> labels) {
    double sum[2] = {0.0, 0.0};
    double sq[2] = {0.0, 0.0};
    std::size_t n[2] = {0, 0};
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const int c = labels[i] == kNormal ? 0 : 1;
        sum[c] += errors[i];
        ++n[c];
    }
    double mean[2] = {0.0, 0.0};
    double sd[2] = {kStdFloor, kStdFloor};
    for (int c = 0; c < 2; ++c)
        if (n[c] > 0) mean[c] = sum[c] / static_cast<double>(n[c]);
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const int c = labels[i] == kNormal ? 0 : 1;
        const double d = errors[i] - mean[c];
        sq[c] += d * d;
    }
    for (int c = 0; c < 2; ++c)
        if (n[c] > 0) sd[c] = std::max(std::sqrt(sq[c] / static_cast<double>(n[c])), kStdFloor);

    GaussianCalibration cal;
    if (n[0] == 0 && n[1] == 0) return cal;
    if (n[1] == 0) {
        mean[1] = mean[0] + 6.0 * sd[0];
        sd[1] = sd[0];
    } else if (n[0] == 0) {
        mean[0] = std::max(0.0, mean[1] - 6.0 * sd[1]);
        sd[0] = sd[1];
    }
    cal.mean_normal = mean[0];
    cal.std_normal = sd[0];
    cal.mean_abnormal = mean[1];
    cal.std_abnormal = sd[1];
    return cal;
}

// ---------------------------------------------------------------------------

DetectorModel init_model(const DetectorConfig& config) {
    config.validate();
    DetectorModel m;
    m.config_ = config;
    Rng rng(config.rng_seed);
    const auto& sizes = config.layer_sizes;
    const std::size_t recon = reconstruction_layer(config);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        const double s = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        layer.weights.resize(layer.in * layer.out);
        for (auto& w : layer.weights) w = rng.uniform(-s, s);
        layer.bias.assign(layer.out, 0.0);
        if (l + 2 == sizes.size())
            layer.activation = config.variant == Variant::AeClassifier ? Activation::Sigmoid : Activation::Identity;
        else
            layer.activation = l == recon ? Activation::Identity : Activation::Relu;
        m.layers_.push_back(std::move(layer));
    }
    return m;
}

std::size_t DetectorModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> DetectorModel::flat_parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& l : layers_) {
        p.insert(p.end(), l.weights.begin(), l.weights.end());
        p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
}

void DetectorModel::set_flat_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw DataError("parameter vector has the wrong size");
    std::size_t k = 0;
    for (auto& l : layers_) {
        for (auto& w : l.weights) w = p[k++];
        for (auto& b : l.bias) b = p[k++];
    }
}

std::vector<double> DetectorModel::forward(std::span<const double> x) const {
    if (x.size() != input_width()) throw DataError("input width mismatch");
    Trace t;
    run_forward(layers_, x, t);
    return std::move(t.a.back());
}

double DetectorModel::reconstruction_error(std::span<const double> x) const {
    if (x.size() != input_width()) throw DataError("input width mismatch");
    Trace t;
    run_forward(layers_, x, t);
    return mse(x, t.a[reconstruction_layer(config_) + 1]);
}

bool DetectorModel::operator==(const DetectorModel& o) const {
    if (config_.layer_sizes != o.config_.layer_sizes || config_.variant != o.config_.variant) return false;
    if (flat_parameters() != o.flat_parameters()) return false;
    if (calibration_.has_value() != o.calibration_.has_value()) return false;
    if (calibration_) {
        const auto& a = *calibration_;
        const auto& b = *o.calibration_;
        return a.mean_normal == b.mean_normal && a.std_normal == b.std_normal && a.mean_abnormal == b.mean_abnormal &&
               a.std_abnormal == b.std_abnormal;
    }
    return true;
}

std::string DetectorModel::to_json() const {
    nlohmann::json j;
    j["format"] = "ssf-detector";
    j["version"] = 1;
    j["config"] = {
        {"layer_sizes", config_.layer_sizes},
        {"variant", to_string(config_.variant)},
        {"learning_rate", config_.learning_rate},
        {"batch_size", config_.batch_size},
        {"epochs_per_fit", config_.epochs_per_fit},
        {"bootstrap_epochs", config_.bootstrap_epochs},
        {"rng_seed", config_.rng_seed},
    };
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& l : layers_) layers.push_back({{"weights", l.weights}, {"bias", l.bias}});
    if (calibration_) {
        j["calibration"] = {{"mean_normal", calibration_->mean_normal},
                            {"std_normal", calibration_->std_normal},
                            {"mean_abnormal", calibration_->mean_abnormal},
                            {"std_abnormal", calibration_->std_abnormal}};
    } else {
        j["calibration"] = nullptr;
    }
    return j.dump();
}

DetectorModel DetectorModel::from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format") != "ssf-detector") throw DataError("not a detector checkpoint");
        const auto& jc = j.at("config");
        DetectorConfig c;
        c.layer_sizes = jc.at("layer_sizes").get<std::vector<std::size_t>>();
        c.variant = variant_from_string(jc.at("variant").get<std::string>());
        c.learning_rate = jc.at("learning_rate").get<double>();
        c.batch_size = jc.at("batch_size").get<std::size_t>();
        c.epochs_per_fit = jc.at("epochs_per_fit").get<std::size_t>();
        c.bootstrap_epochs = jc.at("bootstrap_epochs").get<std::size_t>();
        c.rng_seed = jc.at("rng_seed").get<std::uint64_t>();
        DetectorModel m = init_model(c);
        const auto& jl = j.at("layers");
        if (jl.size() != m.layers_.size()) throw DataError("checkpoint layer count mismatch");
        for (std::size_t l = 0; l < jl.size(); ++l) {
            auto w = jl[l].at("weights").get<std::vector<double>>();
            auto b = jl[l].at("bias").get<std::vector<double>>();
            if (w.size() != m.layers_[l].weights.size() || b.size() != m.layers_[l].bias.size())
                throw DataError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
            m.layers_[l].weights = std::move(w);
            m.layers_[l].bias = std::move(b);
        }
        if (!j.at("calibration").is_null()) {
            const auto& k = j.at("calibration");
            m.calibration_ = GaussianCalibration{k.at("mean_normal").get<double>(), k.at("std_normal").get<double>(),
                                                 k.at("mean_abnormal").get<double>(),
                                                 k.at("std_abnormal").get<double>()};
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid detector checkpoint: ") + e.what());
    }
}

void DetectorModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << to_json() << '\n';
}

DetectorModel DetectorModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

// ---------------------------------------------------------------------------

double score(const DetectorModel& model, std::span<const double> x) {
    if (model.variant() == Variant::AeGaussian) {
        if (!model.calibration()) throw DataError("score: ae_gaussian model has no calibration");
        return gaussian_score(*model.calibration(), model.reconstruction_error(x));
    }
    const auto out = model.forward(x);
    return clamp_score(1.0 - out[0]);
}

std::vector<double> score_all(const DetectorModel& model, std::span<const FeatureRecord> xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (const auto& r : xs) out.push_back(score(model, r.features));
    return out;
}

Label label_from_score(double f) { return f >= 0.5 ? kNormal : kAbnormal; }

Label predict(const DetectorModel& model, std::span<const double> x) { return label_from_score(score(model, x)); }

void TrainingSet::validate(std::size_t input_width) const {
    const std::size_t n = inputs.size();
    if (n == 0) throw DataError("training set is empty");
    if (labels.size() != n || weights.size() != n) throw DataError("training set: labels/weights size mismatch");
    if (!distill_targets.empty() && (distill_targets.size() != n || distill_weights.size() != n))
        throw DataError("training set: distillation vectors size mismatch");
    for (const auto& x : inputs)
        if (x.size() != input_width) throw DataError("training set: input width mismatch");
}

double task_margin(const DetectorModel& model) {
    return model.calibration() ? model.calibration()->margin() : 0.0;
}

double sample_task_loss(const DetectorModel& model, std::span<const double> x, Label y, double margin) {
    Trace t;
    run_forward(model.layers(), x, t);
    if (model.variant() == Variant::AeClassifier) return softplus(t.z.back()[0]) - (y == kAbnormal ? t.z.back()[0] : 0.0);
    const double e = mse(x, t.a.back());
    return y == kNormal ? e : std::max(0.0, margin - e);
}

double distillation_loss(const DetectorModel& model, std::span<const double> x, double target) {
    return bce(target, score(model, x));
}

double objective(const DetectorModel& model, const TrainingSet& data, std::span<const std::size_t> subset,
                 double margin, std::vector<double>* gradient) {
    const auto& layers = model.layers();
    const bool classifier = model.variant() == Variant::AeClassifier;
    const bool distill = !data.distill_targets.empty();
    if (!classifier && distill && !model.calibration())
        throw DataError("objective: distillation on ae_gaussian needs a calibration");

    std::vector<std::size_t> all;
    if (subset.empty()) {
        all.resize(data.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        subset = all;
    }

    // Offsets of each layer's weights and biases inside the flat vector.
    std::vector<std::size_t> w_off(layers.size()), b_off(layers.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        w_off[l] = off;
        off += layers[l].weights.size();
        b_off[l] = off;
        off += layers[l].bias.size();
    }
    if (gradient) gradient->assign(off, 0.0);

    const double inv_n = 1.0 / static_cast<double>(subset.size());
    double total = 0.0;
    Trace t;
    std::vector<double> delta, prev;
    for (const std::size_t i : subset) {
        const auto x = data.inputs[i];
        const Label y = data.labels[i];
        const double w = data.weights[i];
        const double dw = distill ? data.distill_weights[i] : 0.0;
        run_forward(layers, x, t);

        double loss = 0.0;
        delta.assign(layers.back().out, 0.0);
        if (classifier) {
            const double z = t.z.back()[0];
            const double p = t.a.back()[0];
            loss += w * (softplus(z) - (y == kAbnormal ? z : 0.0));
            double dz = w * (p - (y == kAbnormal ? 1.0 : 0.0));
            if (dw != 0.0) {
                const double f = 1.0 - p;
                const double target = data.distill_targets[i];
                loss += dw * bce(target, f);
                if (f > kScoreFloor && f < 1.0 - kScoreFloor) dz += dw * (target - f);
            }
            delta[0] = dz;
        } else {
            const auto& r = t.a.back();
            const double e = mse(x, r);
            double de = 0.0;
            if (y == kNormal) {
                loss += w * e;
                de += w;
            } else if (margin > e) {
                loss += w * (margin - e);
                de -= w;
            }
            if (dw != 0.0) {
                const auto& cal = *model.calibration();
                const double target = data.distill_targets[i];
                const double f = sigmoid(cal.log_odds(e));
                loss += dw * bce(target, f);
                if (f > kScoreFloor && f < 1.0 - kScoreFloor) de += dw * (f - target) * cal.log_odds_slope(e);
            }
            const double scale = -2.0 / static_cast<double>(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) delta[j] = de * scale * (x[j] - r[j]);
        }
        total += loss;
        if (!gradient) continue;

        // delta holds dJ/da for the output layer, except for the sigmoid
        // head where it already is dJ/dz.
        for (std::size_t l = layers.size(); l-- > 0;) {
            const auto& layer = layers[l];
            const auto& z = t.z[l];
            if (layer.activation == Activation::Relu)
                for (std::size_t o = 0; o < layer.out; ++o)
                    if (!(z[o] > 0.0)) delta[o] = 0.0;
            auto& g = *gradient;
            const auto& in = t.a[l];
            for (std::size_t o = 0; o < layer.out; ++o) g[b_off[l] + o] += inv_n * delta[o];
            for (std::size_t ii = 0; ii < layer.in; ++ii) {
                const double xi = in[ii] * inv_n;
                if (xi == 0.0) continue;
                double* grow = g.data() + w_off[l] + ii * layer.out;
                for (std::size_t o = 0; o < layer.out; ++o) grow[o] += xi * delta[o];
            }
            if (l == 0) break;
            prev.assign(layer.in, 0.0);
            for (std::size_t ii = 0; ii < layer.in; ++ii) {
                const double* row = layer.weights.data() + ii * layer.out;
                double s = 0.0;
                for (std::size_t o = 0; o < layer.out; ++o) s += row[o] * delta[o];
                prev[ii] = s;
            }
            delta.swap(prev);
        }
    }
    return total * inv_n;
}

void recalibrate(DetectorModel& model, std::span<const std::span<const double>> inputs, std::span<const Label> labels) {
    std::vector<double> errors;
    errors.reserve(inputs.size());
    for (const auto& x : inputs) errors.push_back(model.reconstruction_error(x));
    model.set_calibration(GaussianCalibration::fit(errors, labels));
}

DetectorModel fit(DetectorModel model, const TrainingSet& data, const DetectorConfig& opts) {
    data.validate(model.input_width());
    const bool gaussian = model.variant() == Variant::AeGaussian;
    if (gaussian && !model.calibration()) recalibrate(model, data.inputs, data.labels);
    const double margin = task_margin(model);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(opts.rng_seed);
    std::vector<double> grad;
    std::size_t batch_index = 0;
    for (std::size_t epoch = 0; epoch < opts.epochs_per_fit; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size, ++batch_index) {
            const std::size_t len = std::min(opts.batch_size, order.size() - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            const double loss = objective(model, data, batch, margin, &grad);
            if (!std::isfinite(loss))
                throw NumericalError("fit: non-finite loss at batch " + std::to_string(batch_index));
            std::size_t k = 0;
            for (auto& layer : model.layers()) {
                for (auto& w : layer.weights) w -= opts.learning_rate * grad[k++];
                for (auto& b : layer.bias) b -= opts.learning_rate * grad[k++];
            }
        }
    }
    for (const double p : model.flat_parameters())
        if (!std::isfinite(p)) throw NumericalError("fit: parameters diverged");
    if (gaussian) recalibrate(model, data.inputs, data.labels);
    return model;
}

ModelSnapshot take_snapshot(const DetectorModel& model) { return ModelSnapshot(model); }

std::vector<double> snapshot_outputs(const ModelSnapshot& snapshot, std::span<const std::span<const double>> xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(score(snapshot.model(), x));
    return out;
}

}  // namespace ssf
