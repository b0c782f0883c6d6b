// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "selfpitch/checkpoint.hpp"
#include "selfpitch/trainer.hpp"

namespace selfpitch {

/// Single linear layer over a raw log-magnitude CQT frame. The frozen pitch
/// network plays no part at inference; its only role was producing the EM
/// weights behind the pseudo-labels.
struct VoicingClassifier {
    std::vector<double> w;  // length B
    double b = 0.0;

    int bins() const { return int(w.size()); }
    void save(Checkpoint& ckpt) const;
    void load(const Checkpoint& ckpt);
};

struct PseudoLabelSet {
    std::vector<int> labels;       // aligned with the dataset/table rows
    std::vector<double> weights;   // the source EM weights
    long n_voiced = 0;
    long n_unvoiced = 0;
    bool degenerate = false;       // all labels in one class
};

/// v* = 1 iff w > theta (strict). theta must be inside (0, 1).
PseudoLabelSet pseudo_labels(const SampleWeightTable& table, double theta);

struct VoicingTrainConfig {
    int epochs = 200;
    double lr = 1e-2;
    std::uint64_t seed = 1;
    bool class_balance = true;  // inverse-frequency weighting of BCE terms
};

/// Full-batch BCE-with-logits on raw CQT frames against the pseudo-labels.
/// Throws when the labels are single-class.
VoicingClassifier train_voicing(const TrainDataset& data, const PseudoLabelSet& labels,
                                const VoicingTrainConfig& cfg = {});

/// probability = sigmoid(w . x + b); flag = probability > 0.5
std::pair<double, bool> predict_voicing(const VoicingClassifier& clf, std::span<const float> frame);

/// frame-level F1 with voiced as the positive class
double voicing_f1(std::span<const int> predicted, std::span<const int> truth);

}  // namespace selfpitch
