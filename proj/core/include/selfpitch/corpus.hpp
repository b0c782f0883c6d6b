// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "selfpitch/audio.hpp"
#include "selfpitch/cqt.hpp"
#include "selfpitch/f0track.hpp"

namespace selfpitch {

/// One additive-synthesis note. Pitch is given as MIDI; amplitude scales
/// linearly with velocity.
struct NoteSpec {
    double onset_s = 0.0;
    double duration_s = 0.5;
    int midi = 69;
    double velocity = 1.0;  // (0, 1]
};

struct StemSpec;

/// Acoustic degradation: noise floor at a target SNR, an exponentially
/// decaying reverb tail, and optional inter-track bleed from another stem.
/// A value of 0 disables the corresponding effect.
struct DegradeConfig {
    double noise_floor_snr_db = 0.0;  // 0 = off, else within [5, 60]
    double reverb_decay_s = 0.0;
    double bleed_gain = 0.0;          // linear, [0, 0.5]
    std::shared_ptr<const StemSpec> bleed_source;  // rendered clean, mixed at bleed_gain

    void validate() const;
};

enum class Profile { kClean, kRealistic };

/// Recipe for one synthetic monophonic stem. The clean profile renders the
/// notes only (inter-note regions are bitwise zero); the realistic profile
/// additionally runs the rendered audio through `degrade`.
struct StemSpec {
    std::vector<NoteSpec> notes;       // non-overlapping, sorted by onset
    int harmonics = 8;
    std::vector<double> decay_rates;   // per harmonic, 1/s; last value repeats
    double vibrato_rate_hz = 0.0;
    double vibrato_depth_cents = 0.0;
    Profile profile = Profile::kClean;
    DegradeConfig degrade_cfg;         // used when profile == kRealistic

    void validate(const CqtConfig& cqt) const;
};

/// Renders the stem and its exact ground truth on the CQT frame grid
/// (T = floor(len/hop) + 1 frames, centers at i*hop). Deterministic for a
/// fixed (spec, seed).
std::pair<AudioClip, F0Track> generate_stem(const StemSpec& spec, std::uint64_t seed,
                                            const CqtConfig& cqt = {});

/// clip + SNR-scaled noise + reverb tail + optional bleed. Silent inputs use
/// the fixed reference power 1e-4 for the SNR so the noise level is defined.
AudioClip degrade(const AudioClip& clip, const DegradeConfig& cfg, std::uint64_t seed);

/// instantaneous note frequency including vibrato (the ground-truth formula)
double note_frequency(const NoteSpec& note, const StemSpec& spec, double t_in_note);

// ---------------------------------------------------------------------------
// corpus presets
// ---------------------------------------------------------------------------

struct CorpusClip {
    std::string name;
    StemSpec spec;
    std::uint64_t seed;
    bool holdout = false;
};

/// `demo`: ~20 clips / ~60 s; realistic-profile training split plus a clean
/// held-out split. `mini`: a few seconds for smoke tests.
std::vector<CorpusClip> corpus_preset(const std::string& preset, std::uint64_t seed,
                                      const CqtConfig& cqt = {});

/// Renders a preset to <outdir>/train and <outdir>/holdout as WAV plus
/// `<name>.f0.csv` annotations. Byte-identical across reruns.
void generate_corpus(const std::string& outdir, const std::string& preset, std::uint64_t seed,
                     const CqtConfig& cqt = {});

}  // namespace selfpitch
