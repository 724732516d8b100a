#pragma once

#include <cstdint>
#include <vector>

#include "dtb/checkpoint.hpp"
#include "dtb/features.hpp"
#include "dtb/nn/model.hpp"
#include "dtb/notation.hpp"

namespace dtb {

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    int batch_size = 128;
    int max_epochs = 100;
    int lr_patience = 5;    // halve lr after this many epochs without val improvement
    int stop_patience = 15; // stop after this many epochs without val improvement
    bool dropout = true;
    double threshold = 0.5; // validation binarization
    uint64_t seed = 1;

    void validate() const;
};

/// One supervised item: standardized features plus the aligned label roll.
/// The roll's pitch count must equal the model's output width and its frame
/// count must equal the feature frame count.
struct TrainItem {
    FeatureMatrix features;
    PianoRoll labels;
};

struct EpochStats {
    double loss = 0;      // mean training BCE
    double precision = 0; // validation, at the configured threshold
    double recall = 0;
    double f_measure = 0;
    double lr = 0;
};

struct TrainResult {
    Checkpoint checkpoint; // parameters of the best validation epoch
    std::vector<EpochStats> history;
    int best_epoch = -1; // index into history (first maximum)
};

/// SGD-with-momentum training of the mean per-pitch binary cross-entropy.
/// After every epoch the validation framewise f-measure is computed; the
/// learning rate halves after `lr_patience` epochs without improvement and
/// training stops early after `stop_patience`. The returned checkpoint holds
/// the parameters (and running statistics) of the best validation epoch, with
/// config, per-epoch history, and best epoch index in its metadata.
///
/// Window architectures (flat output) train on per-frame context windows;
/// map architectures (AUNet) train on random fixed-height feature crops.
TrainResult train(nn::Model<float>& model, const std::vector<TrainItem>& train_items,
                  const std::vector<TrainItem>& valid_items, const TrainConfig& cfg);

/// Default roll base pitch for a model output width: 88 pitches start at MIDI
/// 21 (full piano), 23 at MIDI 49 (the two-octave study range).
Pitch default_pitch_base(int n_pitches);

/// Window (or chunk, for map models) the features, run INFER forwards, and
/// binarize at the threshold (strictly greater than).
PianoRoll predict_roll(nn::Model<float>& model, const FeatureMatrix& features, double threshold,
                       Pitch pitch_lo);

/// Micro-averaged framewise precision/recall/f-measure counts.
struct PrfCounts {
    long long tp = 0, fp = 0, fn = 0;

    void add(const PianoRoll& predicted, const PianoRoll& truth);
    double precision() const;
    double recall() const;
    double f_measure() const;
};

} // namespace dtb
