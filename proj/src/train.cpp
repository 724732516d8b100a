#include "dtb/train.hpp"

#include <algorithm>
#include <cmath>

#include "dtb/errors.hpp"
#include "dtb/rng.hpp"

namespace dtb {

using nn::Model;
using nn::RunMode;
using nn::Tensor;

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train.lr must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be at least 1");
    if (lr_patience < 1) throw ConfigError("train.lr_patience must be at least 1");
    if (stop_patience < 1) throw ConfigError("train.stop_patience must be at least 1");
    if (!(threshold > 0 && threshold < 1))
        throw ConfigError("train.threshold must lie in (0, 1)");
}

void PrfCounts::add(const PianoRoll& predicted, const PianoRoll& truth) {
    if (predicted.n_frames() != truth.n_frames() || predicted.n_pitches() != truth.n_pitches() ||
        predicted.pitch_lo().midi != truth.pitch_lo().midi)
        throw ArgumentError("prediction/truth rolls disagree in shape or pitch range");
    for (int t = 0; t < truth.n_frames(); ++t)
        for (int k = 0; k < truth.n_pitches(); ++k) {
            const bool p = predicted.at(t, k);
            const bool y = truth.at(t, k);
            if (p && y)
                ++tp;
            else if (p && !y)
                ++fp;
            else if (!p && y)
                ++fn;
        }
}

double PrfCounts::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double PrfCounts::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double PrfCounts::f_measure() const {
    const double p = precision(), r = recall();
    return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

Pitch default_pitch_base(int n_pitches) {
    if (n_pitches == kPianoRange) return kPianoLow;
    if (n_pitches == kFluidRange) return kFluidLow;
    throw ConfigError("no default base pitch for " + std::to_string(n_pitches) +
                      " outputs (expected 88 or 23)");
}

namespace {

bool is_window_model(const nn::ArchitectureSpec& spec) {
    return spec.output().flat;
}

void check_window_input(const nn::ArchitectureSpec& spec, const FeatureMatrix& features) {
    if (spec.input.c != 1 || spec.input.w != features.n_bins)
        throw ConfigError("model '" + spec.name + "' expects input " + spec.input.to_string() +
                          " but features have " + std::to_string(features.n_bins) + " bins");
}

PianoRoll predict_window_roll(Model<float>& model, const FeatureMatrix& features,
                              double threshold, Pitch pitch_lo) {
    const nn::ArchitectureSpec& spec = model.spec();
    check_window_input(spec, features);
    const int win = spec.input.h;
    const int k_out = spec.output().c;
    PianoRoll roll(features.frame_rate, pitch_lo, k_out, features.n_frames);
    constexpr int kChunk = 512;
    for (int t0 = 0; t0 < features.n_frames; t0 += kChunk) {
        const int b = std::min(kChunk, features.n_frames - t0);
        Tensor<float> x(b, 1, win, features.n_bins);
        for (int i = 0; i < b; ++i) copy_window(features, t0 + i, win, x.item(i));
        const Tensor<float> out = model.forward(x, RunMode::Infer);
        for (int i = 0; i < b; ++i)
            for (int k = 0; k < k_out; ++k)
                roll.set(t0 + i, k, out.data[static_cast<size_t>(i) * k_out + k] > threshold);
    }
    return roll;
}

PianoRoll predict_map_roll(Model<float>& model, const FeatureMatrix& features, double threshold,
                           Pitch pitch_lo) {
    const nn::ArchitectureSpec& spec = model.spec();
    if (spec.input.c != 1)
        throw ConfigError("model '" + spec.name + "' expects a single input channel");
    if (features.n_bins > spec.input.w)
        throw ConfigError("features have " + std::to_string(features.n_bins) +
                          " bins but model '" + spec.name + "' accepts at most " +
                          std::to_string(spec.input.w));
    const int chunk_h = spec.input.h;
    const int k_out = spec.output().w;
    PianoRoll roll(features.frame_rate, pitch_lo, k_out, features.n_frames);
    for (int t0 = 0; t0 < features.n_frames; t0 += chunk_h) {
        Tensor<float> x(1, 1, chunk_h, spec.input.w); // zero-padded beyond data
        const int rows = std::min(chunk_h, features.n_frames - t0);
        for (int r = 0; r < rows; ++r)
            std::copy(features.row(t0 + r), features.row(t0 + r) + features.n_bins,
                      x.plane(0, 0) + static_cast<size_t>(r) * spec.input.w);
        const Tensor<float> out = model.forward(x, RunMode::Infer);
        for (int r = 0; r < rows; ++r)
            for (int k = 0; k < k_out; ++k) roll.set(t0 + r, k, out.at(0, 0, r, k) > threshold);
    }
    return roll;
}

struct Sample {
    int item = 0;
    int frame = 0; // window center (window models) or crop start (map models)
};

void check_items(const nn::ArchitectureSpec& spec, const std::vector<TrainItem>& items,
                 int k_out, const char* split) {
    for (size_t i = 0; i < items.size(); ++i) {
        const TrainItem& it = items[i];
        if (it.features.n_frames != it.labels.n_frames())
            throw ArgumentError(std::string(split) + " item " + std::to_string(i) + ": " +
                                std::to_string(it.features.n_frames) + " feature frames vs " +
                                std::to_string(it.labels.n_frames()) + " label frames");
        if (it.labels.n_pitches() != k_out)
            throw ArgumentError(std::string(split) + " item " + std::to_string(i) + ": " +
                                std::to_string(it.labels.n_pitches()) +
                                " label pitches but the model emits " + std::to_string(k_out));
        if (is_window_model(spec)) {
            check_window_input(spec, it.features);
        } else if (it.features.n_bins > spec.input.w) {
            throw ArgumentError(std::string(split) + " item " + std::to_string(i) +
                                ": feature bins exceed model input width");
        }
    }
}

} // namespace

PianoRoll predict_roll(Model<float>& model, const FeatureMatrix& features, double threshold,
                       Pitch pitch_lo) {
    if (features.n_frames <= 0) throw ArgumentError("cannot transcribe empty features");
    return is_window_model(model.spec())
               ? predict_window_roll(model, features, threshold, pitch_lo)
               : predict_map_roll(model, features, threshold, pitch_lo);
}

TrainResult train(Model<float>& model, const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& valid_items, const TrainConfig& cfg) {
    cfg.validate();
    if (train_items.empty()) throw ArgumentError("training set is empty");
    if (valid_items.empty())
        throw ArgumentError("validation set is empty: checkpoint selection needs a "
                            "validation f-measure");
    const nn::ArchitectureSpec& spec = model.spec();
    const bool window = is_window_model(spec);
    const int k_out = window ? spec.output().c : spec.output().w;
    check_items(spec, train_items, k_out, "train");
    check_items(spec, valid_items, k_out, "validation");

    Rng shuffle_rng = Rng::derive(cfg.seed, {10});
    Rng dropout_rng = Rng::derive(cfg.seed, {11});
    Rng crop_rng = Rng::derive(cfg.seed, {12});

    const int win = spec.input.h;
    double lr = cfg.lr;
    double best_f = -1.0;
    int best_epoch = -1;
    int since_improve = 0;
    std::vector<nn::NodeParams<float>> best_params = model.params();
    TrainResult result;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Assemble this epoch's samples: every frame of every item for window
        // models, random fixed-height crops for map models.
        std::vector<Sample> samples;
        if (window) {
            for (size_t i = 0; i < train_items.size(); ++i)
                for (int t = 0; t < train_items[i].features.n_frames; ++t)
                    samples.push_back({static_cast<int>(i), t});
        } else {
            for (size_t i = 0; i < train_items.size(); ++i) {
                const int frames = train_items[i].features.n_frames;
                const int crops = std::max(1, (frames + win - 1) / win);
                const uint64_t span = static_cast<uint64_t>(std::max(1, frames - win + 1));
                for (int c = 0; c < crops; ++c)
                    samples.push_back(
                        {static_cast<int>(i), static_cast<int>(crop_rng.below(span))});
            }
        }
        shuffle_rng.shuffle(samples);

        double loss_sum = 0;
        long long loss_elems = 0;
        for (size_t start = 0; start < samples.size(); start += cfg.batch_size) {
            const int b =
                static_cast<int>(std::min<size_t>(cfg.batch_size, samples.size() - start));
            Tensor<float> x(b, 1, win, spec.input.w);
            Tensor<float> y = window ? Tensor<float>(b, k_out, 1, 1)
                                     : Tensor<float>(b, 1, win, k_out);
            for (int i = 0; i < b; ++i) {
                const Sample& s = samples[start + i];
                const TrainItem& item = train_items[s.item];
                if (window) {
                    copy_window(item.features, s.frame, win, x.item(i));
                    for (int k = 0; k < k_out; ++k)
                        y.data[static_cast<size_t>(i) * k_out + k] =
                            item.labels.at(s.frame, k) ? 1.0f : 0.0f;
                } else {
                    const int rows = std::min(win, item.features.n_frames - s.frame);
                    for (int r = 0; r < rows; ++r) {
                        std::copy(item.features.row(s.frame + r),
                                  item.features.row(s.frame + r) + item.features.n_bins,
                                  x.plane(i, 0) + static_cast<size_t>(r) * spec.input.w);
                        for (int k = 0; k < k_out; ++k)
                            y.at(i, 0, r, k) = item.labels.at(s.frame + r, k) ? 1.0f : 0.0f;
                    }
                }
            }
            const Tensor<float> out = model.forward(
                x, RunMode::Train, cfg.dropout ? &dropout_rng : nullptr, /*cache=*/true);
            const double loss = Model<float>::bce_loss(model.logits(), y);
            if (!std::isfinite(loss))
                throw NumericalError("training diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(start / cfg.batch_size));
            loss_sum += loss * static_cast<double>(out.size());
            loss_elems += static_cast<long long>(out.size());

            model.zero_grad();
            Tensor<float> seed(out.n, out.c, out.h, out.w);
            const float inv = 1.0f / static_cast<float>(out.size());
            for (size_t j = 0; j < out.size(); ++j)
                seed.data[j] = (out.data[j] - y.data[j]) * inv;
            model.backward(seed, /*grad_wrt_preactivation=*/true);
            model.sgd_step(lr, cfg.momentum);
        }

        PrfCounts counts;
        for (const TrainItem& item : valid_items)
            counts.add(predict_roll(model, item.features, cfg.threshold, item.labels.pitch_lo()),
                       item.labels);

        EpochStats stats;
        stats.loss = loss_elems > 0 ? loss_sum / static_cast<double>(loss_elems) : 0.0;
        stats.precision = counts.precision();
        stats.recall = counts.recall();
        stats.f_measure = counts.f_measure();
        stats.lr = lr;
        result.history.push_back(stats);

        if (stats.f_measure > best_f) {
            best_f = stats.f_measure;
            best_epoch = epoch;
            best_params = model.params();
            since_improve = 0;
        } else {
            ++since_improve;
            if (since_improve % cfg.lr_patience == 0) lr *= 0.5;
            if (since_improve >= cfg.stop_patience) break;
        }
    }

    model.params() = best_params;
    result.best_epoch = best_epoch;
    result.checkpoint = checkpoint_from_model(model);
    nlohmann::json& meta = result.checkpoint.meta;
    meta["train"] = {
        {"lr", cfg.lr},
        {"momentum", cfg.momentum},
        {"batch_size", cfg.batch_size},
        {"max_epochs", cfg.max_epochs},
        {"lr_patience", cfg.lr_patience},
        {"stop_patience", cfg.stop_patience},
        {"dropout", cfg.dropout},
        {"threshold", cfg.threshold},
        {"seed", cfg.seed},
    };
    meta["best_epoch"] = best_epoch;
    nlohmann::json history = nlohmann::json::array();
    for (const EpochStats& s : result.history)
        history.push_back({{"loss", s.loss},
                           {"precision", s.precision},
                           {"recall", s.recall},
                           {"f_measure", s.f_measure},
                           {"lr", s.lr}});
    meta["history"] = std::move(history);
    return result;
}

} // namespace dtb
