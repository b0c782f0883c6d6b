// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "selfpitch/audio.hpp"
#include "selfpitch/cqt.hpp"
#include "selfpitch/losses.hpp"
#include "selfpitch/model.hpp"

namespace selfpitch {

struct FrameKey {
    int clip = 0;   // index into the dataset's clip name table
    int frame = 0;  // hop index within the clip
};

/// All training frames in memory: CQT rows plus their (clip, frame) keys.
struct TrainDataset {
    int bins = 0;
    std::vector<std::string> clip_names;
    std::vector<FrameKey> keys;
    std::vector<float> frames;  // n x bins, row-major

    int n() const { return int(keys.size()); }
    std::span<const float> frame(int i) const {
        return std::span<const float>(frames).subspan(std::size_t(i) * bins, std::size_t(bins));
    }
    /// stable per-frame RNG key, independent of dataset ordering
    std::uint64_t frame_uid(int i) const {
        return key_hash(std::uint64_t(keys[std::size_t(i)].clip) + 1,
                        std::uint64_t(keys[std::size_t(i)].frame) + 1);
    }
};

TrainDataset dataset_from_clips(const std::vector<std::pair<std::string, AudioClip>>& clips,
                                const CqtEngine& engine, int threads);
/// scans `dir` for *.wav (sorted by name) and extracts features
TrainDataset load_dataset(const std::string& dir, const CqtEngine& engine, int threads);

/// Per-frame EM weights; row i corresponds to dataset frame i. Weights start
/// at 1 and never increase across E-steps.
struct SampleWeightTable {
    std::vector<double> weights;
    std::vector<double> sce_norm;  // last normalized SCE per frame (-1 before first E-step)

    void init(int n) {
        weights.assign(std::size_t(n), 1.0);
        sce_norm.assign(std::size_t(n), -1.0);
    }
};

// CSV: header `clip,frame,weight,sce_norm`
void save_weight_table(const std::string& path, const SampleWeightTable& table,
                       const TrainDataset& data);
SampleWeightTable load_weight_table(const std::string& path, const TrainDataset& data);

struct TrainConfig {
    int k_epochs = 5;
    int epochs = 60;  // must be a multiple of k_epochs
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int delta_max = 15;
    int checkpoint_every = 10;     // epochs; 0 disables
    std::string checkpoint_path;   // written at the cadence when set
    int threads = 2;
    bool deterministic = true;
    LossConfig loss;

    void validate() const;
};

/// annealing factor: exp(e^1.25 / 1000) - 1, monotone in e
double lambda_anneal(int epoch);

/// (L - min) / (max - min + eps) over the whole pass
std::vector<double> normalize_sce(std::span<const double> losses, double eps = 1e-8);

/// One E-step at epoch e (multiple of k_epochs): per-frame SCE under the
/// frozen model with a fresh deterministic shift per frame (no gain/noise),
/// normalized over the full pass; w <- max(0, w - lambda(e) * norm).
template <typename Real>
void e_step(PitchModel<Real>& model, const TrainDataset& data, SampleWeightTable& table, int epoch,
            const TrainConfig& cfg);

struct EpochLog {
    int epoch = 0;
    bool e_step_ran = false;
    double lambda = 0.0;
    double mean_equiv = 0.0, mean_invar = 0.0, mean_sce = 0.0, mean_total = 0.0;
    std::vector<double> weight_deciles;  // 11 values, min..max
    double silent_grad_norm = -1.0;      // max |dL_sce/dlogits| over constant frames; -1 if none
};

struct TrainResult {
    SampleWeightTable table;
    std::vector<EpochLog> log;
    int applied_calibration = 0;
};

/// The full loop: k_epochs warm-up at w=1, then alternating E/M, then
/// head self-calibration against synthetic probe tones. Emits one JSON
/// record per epoch to `jsonl` when given. Deterministic for a fixed
/// (dataset, config) regardless of thread count.
template <typename Real>
TrainResult train(PitchModel<Real>& model, const TrainDataset& data, const TrainConfig& cfg,
                  const CqtEngine& engine, std::ostream* jsonl = nullptr, bool calibrate = true);

/// Diagnostic for the clean-silence property: max SCE gradient norm at the
/// logits over exactly-constant frames (shift-only views). Returns -1 when
/// the dataset has no constant frames.
template <typename Real>
double silent_frame_grad_norm(const PitchModel<Real>& model, const TrainDataset& data, int epoch,
                              const TrainConfig& cfg, int max_frames = 8);

}  // namespace selfpitch
