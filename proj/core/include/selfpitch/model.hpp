// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "selfpitch/autodiff.hpp"
#include "selfpitch/checkpoint.hpp"
#include "selfpitch/cqt.hpp"

namespace selfpitch {

/// Encoder + head hyperparameters. The stem maps 1 -> 32 channels; three
/// stages of grouped-convolution residual blocks follow; the pitch head is
/// one 81-tap convolution over frequency with circular padding, shared
/// across all output positions.
struct ModelConfig {
    int output_bins = 269;                       // K; must equal the CQT bin count
    int stem_channels = 32;
    int stem_kernel = 7;
    std::array<int, 3> stage_channels{32, 64, 128};
    std::array<int, 3> stage_strides{1, 2, 2};   // frequency-axis downsampling per stage
    int blocks_per_stage = 2;
    int groups = 4;
    int block_kernel = 3;
    int head_kernel = 81;
    std::uint64_t seed = 1;

    void validate() const;
};

struct PitchEstimate {
    double bin = 0.0;         // refined (real-valued) bin
    double f0_hz = 0.0;
    double confidence = 0.0;  // max probability
};

/// The pitch network f_theta. Parameters are owned tensors; forward() builds
/// the computation into a caller-provided graph so training, inference and
/// diagnostics share one code path. Inference on a frozen model is
/// read-shareable; training mutation is single-writer.
template <typename Real>
class PitchModel {
  public:
    PitchModel(ModelConfig cfg, int input_bins);

    const ModelConfig& config() const { return cfg_; }
    long parameter_count() const;
    std::vector<ad::Tensor<Real>*> parameters();
    const std::vector<std::pair<std::string, ad::Tensor<Real>*>>& named_parameters() const {
        return named_;
    }

    /// frames: N x B row-major -> logits (N,1,K); rows of the result are
    /// independent. Throws NumericError on non-finite input.
    typename ad::Graph<Real>::Id forward(ad::Graph<Real>& g, std::span<const float> frames,
                                         int n_frames);
    /// same, but the input is an existing graph node of shape (N,1,B)
    typename ad::Graph<Real>::Id forward_node(ad::Graph<Real>& g, typename ad::Graph<Real>::Id x);

    /// convenience: probabilities for a batch without keeping the graph
    std::vector<Real> predict_probs(std::span<const float> frames, int n_frames);

    /// circular permutation of the head kernel taps (post-hoc pitch-offset
    /// calibration). The contract is kernel-level: taps are permuted, the
    /// weight multiset is preserved.
    void calibrate_head(int offset);

    /// deep copy (worker threads own clones; gradients are reduced by caller)
    std::unique_ptr<PitchModel<Real>> clone() const;

    void save(Checkpoint& ckpt) const;
    void load(const Checkpoint& ckpt);

  private:
    void register_param(const std::string& name, ad::Shape shape);
    ad::Tensor<Real>& p(const std::string& name);
    const ad::Tensor<Real>& p(const std::string& name) const;

    ModelConfig cfg_;
    int input_bins_;
    std::vector<std::pair<std::string, std::unique_ptr<ad::Tensor<Real>>>> params_;
    std::vector<std::pair<std::string, ad::Tensor<Real>*>> named_;
};

/// argmax bin refined by a +-4-bin local centroid; f0 = bin_to_hz(refined).
PitchEstimate decode_pitch(std::span<const float> probs, const CqtConfig& cqt);
PitchEstimate decode_pitch(std::span<const double> probs, const CqtConfig& cqt);

/// Estimates the systematic output-bin offset of a trained model from
/// synthetic probe tones (positive = model reports sharp). Offsets are
/// reduced to the circular range [-K/2, K/2).
template <typename Real>
int estimate_bin_offset(PitchModel<Real>& model, const CqtEngine& engine,
                        std::span<const int> probe_bins);

/// Iterated tap-shift calibration against probe tones spread over the
/// playable range; returns the total applied offset.
template <typename Real>
int self_calibrate(PitchModel<Real>& model, const CqtEngine& engine, int max_rounds = 4);

using PitchModelF = PitchModel<float>;
using PitchModelD = PitchModel<double>;

}  // namespace selfpitch
