// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfpitch/audio.hpp"

namespace selfpitch {

/// Constant-Q geometry: 36 bins/octave from A0, 269 bins (~7.5 octaves,
/// top bin just under 4.8 kHz), hop 160 at 16 kHz.
struct CqtConfig {
    double f_min = 27.5;
    int bins_per_octave = 36;
    int bins_per_semitone = 3;
    int n_bins = 269;
    int hop = 160;
    int sample_rate = 16000;
    double eps = 1e-8;

    double quality() const;  // Q = 1 / (2^(1/36) - 1)
    void validate() const;
};

double bin_to_hz(const CqtConfig& cfg, double bin);  // real-valued exponent
double hz_to_bin(const CqtConfig& cfg, double hz);
// integer-bin variant with the declared range check
double bin_to_hz_checked(const CqtConfig& cfg, int bin);

/// Log-magnitude CQT, frames x bins row-major. Values are >= log(eps).
struct CqtSpectrogram {
    int frames = 0;
    int bins = 0;
    int hop = 160;
    CqtConfig config;
    std::vector<float> values;

    std::span<const float> frame(int t) const {
        return std::span<const float>(values).subspan(std::size_t(t) * bins, std::size_t(bins));
    }
    std::span<float> frame(int t) {
        return std::span<float>(values).subspan(std::size_t(t) * bins, std::size_t(bins));
    }
};

/// Precomputed per-bin windowed complex kernels; direct evaluation, no
/// octave decimation. Frame t is centered at sample t*hop; out-of-range
/// samples read as zero, so clips shorter than a kernel are zero-padded.
class CqtEngine {
  public:
    explicit CqtEngine(CqtConfig cfg = {});

    const CqtConfig& config() const { return cfg_; }
    int longest_kernel() const { return lengths_.empty() ? 0 : lengths_[0]; }

    CqtSpectrogram compute(const AudioClip& clip, int threads = 1) const;
    /// One frame centered at the given sample position (used for spot checks
    /// on long clips where computing every frame would be wasteful).
    std::vector<float> frame_at(const AudioClip& clip, std::int64_t center) const;

  private:
    CqtConfig cfg_;
    std::vector<int> lengths_;           // kernel length per bin
    std::vector<std::size_t> offsets_;   // start of each kernel in re_/im_
    std::vector<double> re_, im_;        // Hann-windowed, window-sum normalized
};

/// Boundary-safe bin shift: out(b) = x(b - delta) where defined; vacated
/// bins take the frame minimum (the frame's own noise floor). Distinct from
/// the circular roll used on output distributions.
std::vector<float> shift_frame(std::span<const float> x, int delta);

struct ShiftPair {
    std::vector<float> view_a;
    std::vector<float> view_b;
    int delta = 0;
};

struct AugmentOptions {
    int delta_max = 15;
    bool gain = true;   // test hooks: identity augmentations when disabled
    bool noise = true;
};

/// Training pair: view_a = augment(x), view_b = augment(shift(x, delta)),
/// delta uniform over nonzero [-delta_max, delta_max]. The RNG stream is
/// keyed by (seed, epoch, frame_id) so pairs are reproducible under any
/// batch composition or schedule.
ShiftPair augment_pair(std::span<const float> x, std::uint64_t seed, int epoch,
                       std::uint64_t frame_id, const CqtConfig& cfg,
                       const AugmentOptions& opts = {});

// Binary spectrogram dump: "CQTS", u32 version, u32 T, u32 B, u32 hop,
// then T*B little-endian f32 row-major by frame.
void save_cqts(const std::string& path, const CqtSpectrogram& spec);
CqtSpectrogram load_cqts(const std::string& path);

}  // namespace selfpitch
