// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "selfpitch/common.hpp"

namespace selfpitch {

namespace {

constexpr double kAttackS = 0.005;
constexpr double kReleaseS = 0.010;
constexpr double kSilentRefPower = 1e-4;  // SNR reference for silent clips
constexpr double kReverbWetPower = 0.05;  // kernel energy relative to dry

double midi_to_hz(int midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

}  // namespace

void DegradeConfig::validate() const {
    if (noise_floor_snr_db != 0.0 && (noise_floor_snr_db < 5.0 || noise_floor_snr_db > 60.0))
        throw RangeError("degrade.noise_floor_snr_db: " + std::to_string(noise_floor_snr_db) +
                         " outside [5, 60] (0 disables)");
    if (reverb_decay_s < 0.0) throw RangeError("degrade.reverb_decay_s: must be >= 0");
    if (bleed_gain < 0.0 || bleed_gain > 0.5)
        throw RangeError("degrade.bleed_gain: " + std::to_string(bleed_gain) + " outside [0, 0.5]");
    if (bleed_source && bleed_source->profile != Profile::kClean)
        throw ConfigError("degrade.bleed_source: must use the clean profile");
}

void StemSpec::validate(const CqtConfig& cqt) const {
    if (harmonics < 1) throw RangeError("stem.harmonics: must be >= 1");
    const double f_top = bin_to_hz(cqt, double(cqt.n_bins - 1));
    double prev_end = -1.0;
    for (std::size_t i = 0; i < notes.size(); ++i) {
        const NoteSpec& n = notes[i];
        if (n.duration_s <= 0.0)
            throw RangeError("note " + std::to_string(i) + ": duration must be positive");
        if (n.velocity <= 0.0 || n.velocity > 1.0)
            throw RangeError("note " + std::to_string(i) + ": velocity outside (0, 1]");
        if (n.onset_s < prev_end - 1e-9)
            throw RangeError("note " + std::to_string(i) + ": overlaps previous note");
        prev_end = n.onset_s + n.duration_s;
        const double f = midi_to_hz(n.midi);
        if (f < cqt.f_min || f > f_top)
            throw RangeError("note " + std::to_string(i) + ": midi " + std::to_string(n.midi) +
                             " (" + std::to_string(f) + " Hz) outside CQT range");
    }
    if (vibrato_rate_hz < 0.0 || vibrato_depth_cents < 0.0)
        throw RangeError("stem.vibrato: rate and depth must be >= 0");
    degrade_cfg.validate();
}

double note_frequency(const NoteSpec& note, const StemSpec& spec, double t_in_note) {
    const double base = midi_to_hz(note.midi);
    if (spec.vibrato_depth_cents <= 0.0 || spec.vibrato_rate_hz <= 0.0) return base;
    const double cents = spec.vibrato_depth_cents *
                         std::sin(2.0 * std::numbers::pi * spec.vibrato_rate_hz * t_in_note);
    return base * std::pow(2.0, cents / 1200.0);
}

std::pair<AudioClip, F0Track> generate_stem(const StemSpec& spec, std::uint64_t seed,
                                            const CqtConfig& cqt) {
    spec.validate(cqt);
    const int fs = kSampleRate;
    double end_s = 1.0;
    if (!spec.notes.empty()) {
        const NoteSpec& last = spec.notes.back();
        end_s = last.onset_s + last.duration_s + 0.1;
    }
    const std::int64_t n_samples = std::int64_t(std::ceil(end_s * fs));
    std::vector<double> buf(std::size_t(n_samples), 0.0);

    for (std::size_t ni = 0; ni < spec.notes.size(); ++ni) {
        const NoteSpec& note = spec.notes[ni];
        const std::int64_t s0 = std::int64_t(std::llround(note.onset_s * fs));
        const std::int64_t s1 =
            std::min<std::int64_t>(n_samples, std::int64_t(std::llround((note.onset_s + note.duration_s) * fs)));
        const int span = int(s1 - s0);
        if (span <= 0) continue;

        // harmonic amplitudes: 1/h rolloff, velocity-scaled, peak-bounded
        const double nyq_limit = 0.95 * fs / 2.0;
        const double f_base = midi_to_hz(note.midi);
        const double f_peak = f_base * std::pow(2.0, spec.vibrato_depth_cents / 1200.0);
        std::vector<double> amp(std::size_t(spec.harmonics), 0.0);
        double amp_sum = 0.0;
        for (int h = 1; h <= spec.harmonics; ++h) {
            if (h * f_peak > nyq_limit) break;
            amp[std::size_t(h - 1)] = 1.0 / h;
            amp_sum += 1.0 / h;
        }
        if (amp_sum <= 0.0) continue;
        const double scale = 0.85 * note.velocity / amp_sum;
        for (double& a : amp) a *= scale;

        // deterministic per-(seed, note, harmonic) starting phases
        std::vector<double> phase(std::size_t(spec.harmonics));
        for (int h = 0; h < spec.harmonics; ++h)
            phase[std::size_t(h)] =
                2.0 * std::numbers::pi * Rng(key_hash(seed, ni, std::uint64_t(h))).next_double();

        const int attack = std::max(1, int(kAttackS * fs));
        const int release = std::max(1, int(kReleaseS * fs));
        for (int t = 0; t < span; ++t) {
            const double t_s = double(t) / fs;
            const double f0 = note_frequency(note, spec, t_s);
            double env = 1.0;
            if (t < attack) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * t / attack);
            if (span - t <= release)
                env *= 0.5 - 0.5 * std::cos(std::numbers::pi * (span - t) / release);
            double sample = 0.0;
            for (int h = 1; h <= spec.harmonics; ++h) {
                const double a = amp[std::size_t(h - 1)];
                if (a == 0.0) continue;
                const double di = std::size_t(h - 1) < spec.decay_rates.size()
                                      ? spec.decay_rates[std::size_t(h - 1)]
                                      : (spec.decay_rates.empty() ? 0.0 : spec.decay_rates.back());
                phase[std::size_t(h - 1)] += 2.0 * std::numbers::pi * h * f0 / fs;
                sample += a * std::exp(-di * t_s) * std::sin(phase[std::size_t(h - 1)]);
            }
            buf[std::size_t(s0 + t)] += env * sample;
        }
    }

    AudioClip clip;
    clip.samples.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) clip.samples[i] = float(buf[i]);

    if (spec.profile == Profile::kRealistic)
        clip = degrade(clip, spec.degrade_cfg, key_hash(seed, 0xde67ull));

    // exact ground truth on the CQT frame grid
    F0Track track;
    track.hop = cqt.hop;
    const int n_frames = int(n_samples / cqt.hop) + 1;
    track.entries.reserve(std::size_t(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        const double t_s = double(i) * cqt.hop / fs;
        F0Entry e;
        e.frame = i;
        for (const NoteSpec& note : spec.notes) {
            if (t_s >= note.onset_s && t_s < note.onset_s + note.duration_s) {
                e.voiced = 1;
                e.f0_hz = note_frequency(note, spec, t_s - note.onset_s);
                break;
            }
        }
        track.entries.push_back(e);
    }
    return {std::move(clip), std::move(track)};
}

AudioClip degrade(const AudioClip& clip, const DegradeConfig& cfg, std::uint64_t seed) {
    clip.validate();
    cfg.validate();
    const int fs = clip.sample_rate;
    const std::size_t n = clip.samples.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = double(clip.samples[i]);

    double dry_power = 0.0;
    for (const float s : clip.samples) dry_power += double(s) * s;
    dry_power = n > 0 ? dry_power / double(n) : 0.0;

    if (cfg.reverb_decay_s > 0.0) {
        Rng rng(key_hash(seed, 0x7265766bull));
        const int klen = std::max(2, int(std::llround(2.0 * cfg.reverb_decay_s * fs)));
        std::vector<double> kernel(static_cast<std::size_t>(klen), 0.0);
        double k_energy = 0.0;
        for (int t = 0; t < klen; ++t) {
            const double env = std::exp(-(double(t) / fs) * (2.0 / cfg.reverb_decay_s));
            kernel[std::size_t(t)] = rng.normal(0.0, 1.0) * env;
            k_energy += kernel[std::size_t(t)] * kernel[std::size_t(t)];
        }
        const double k_scale = k_energy > 0.0 ? std::sqrt(kReverbWetPower / k_energy) : 0.0;
        for (double& k : kernel) k *= k_scale;
        // direct convolution, tail truncated at the clip length
        std::vector<double> wet(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = double(clip.samples[i]);
            if (x == 0.0) continue;
            const std::size_t kmax = std::min<std::size_t>(std::size_t(klen), n - i);
            for (std::size_t k = 0; k < kmax; ++k) wet[i + k] += x * kernel[k];
        }
        for (std::size_t i = 0; i < n; ++i) out[i] += wet[i];
    }

    if (cfg.bleed_gain > 0.0 && cfg.bleed_source) {
        auto [bleed_clip, bleed_track] = generate_stem(*cfg.bleed_source, key_hash(seed, 0x626c6564ull));
        for (std::size_t i = 0; i < n && i < bleed_clip.samples.size(); ++i)
            out[i] += cfg.bleed_gain * double(bleed_clip.samples[i]);
    }

    if (cfg.noise_floor_snr_db != 0.0) {
        Rng rng(key_hash(seed, 0x6e6f6973ull));
        const double p_ref = dry_power > 1e-12 ? dry_power : kSilentRefPower;
        const double p_n = p_ref * std::pow(10.0, -cfg.noise_floor_snr_db / 10.0);
        const double sigma = std::sqrt(p_n);
        for (std::size_t i = 0; i < n; ++i) out[i] += rng.normal(0.0, sigma);
    }

    AudioClip result;
    result.sample_rate = clip.sample_rate;
    result.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.samples[i] = float(out[i]);
    return result;
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

namespace {

// random note walk in a register whose fundamentals sit well inside the CQT
StemSpec random_stem(Rng& rng, double target_len_s, bool realistic, std::uint64_t bleed_seed_tag) {
    StemSpec spec;
    spec.harmonics = 8;
    spec.decay_rates = {0.6, 0.9, 1.2, 1.5, 1.8, 2.1, 2.4, 2.7};
    if (rng.next_double() < 0.35) {
        spec.vibrato_rate_hz = rng.uniform(4.0, 6.5);
        spec.vibrato_depth_cents = rng.uniform(8.0, 35.0);
    }
    int midi = int(rng.uniform_int(55, 79));
    double t = rng.uniform(0.05, 0.25);
    while (t < target_len_s) {
        NoteSpec note;
        note.onset_s = t;
        note.duration_s = rng.uniform(0.28, 0.60);
        note.midi = midi;
        note.velocity = rng.uniform(0.5, 1.0);
        spec.notes.push_back(note);
        t += note.duration_s;
        if (rng.next_double() < 0.75) t += rng.uniform(0.10, 0.32);  // rest
        midi += int(rng.uniform_int(-5, 5));
        midi = std::clamp(midi, 52, 84);
    }
    if (realistic) {
        spec.profile = Profile::kRealistic;
        spec.degrade_cfg.noise_floor_snr_db = rng.uniform(26.0, 34.0);
        spec.degrade_cfg.reverb_decay_s = rng.uniform(0.15, 0.30);
        spec.degrade_cfg.bleed_gain = rng.uniform(0.05, 0.12);
        auto bleed = std::make_shared<StemSpec>();
        bleed->harmonics = 6;
        bleed->decay_rates = {1.0, 1.5, 2.0};
        Rng brng(bleed_seed_tag);
        double bt = brng.uniform(0.0, 0.4);
        while (bt < target_len_s) {
            NoteSpec note;
            note.onset_s = bt;
            note.duration_s = brng.uniform(0.4, 0.9);
            note.midi = int(brng.uniform_int(40, 52));  // low register interference
            note.velocity = brng.uniform(0.3, 0.7);
            bleed->notes.push_back(note);
            bt += note.duration_s + brng.uniform(0.2, 0.6);
        }
        spec.degrade_cfg.bleed_source = bleed;
    }
    return spec;
}

}  // namespace

std::vector<CorpusClip> corpus_preset(const std::string& preset, std::uint64_t seed,
                                      const CqtConfig& cqt) {
    int n_train = 0, n_holdout = 0;
    double train_len = 0, holdout_len = 0;
    if (preset == "demo") {
        n_train = 11;
        n_holdout = 9;
        train_len = 2.5;
        holdout_len = 3.2;
    } else if (preset == "mini") {
        n_train = 4;
        n_holdout = 2;
        train_len = 1.2;
        holdout_len = 1.2;
    } else {
        throw ConfigError("unknown corpus preset '" + preset + "' (expected demo or mini)");
    }

    std::vector<CorpusClip> clips;
    char name[64];
    for (int i = 0; i < n_train; ++i) {
        Rng rng(key_hash(seed, 0x747261696eull, std::uint64_t(i)));
        CorpusClip clip;
        std::snprintf(name, sizeof name, "train_%03d", i);
        clip.name = name;
        clip.seed = key_hash(seed, 1, std::uint64_t(i));
        clip.spec = random_stem(rng, train_len, true, key_hash(seed, 2, std::uint64_t(i)));
        clip.holdout = false;
        clip.spec.validate(cqt);
        clips.push_back(std::move(clip));
    }
    for (int i = 0; i < n_holdout; ++i) {
        Rng rng(key_hash(seed, 0x686f6c64ull, std::uint64_t(i)));
        CorpusClip clip;
        std::snprintf(name, sizeof name, "holdout_%03d", i);
        clip.name = name;
        clip.seed = key_hash(seed, 3, std::uint64_t(i));
        clip.spec = random_stem(rng, holdout_len, false, 0);
        clip.holdout = true;
        clip.spec.validate(cqt);
        clips.push_back(std::move(clip));
    }
    return clips;
}

void generate_corpus(const std::string& outdir, const std::string& preset, std::uint64_t seed,
                     const CqtConfig& cqt) {
    namespace fs = std::filesystem;
    const auto clips = corpus_preset(preset, seed, cqt);
    fs::create_directories(fs::path(outdir) / "train");
    fs::create_directories(fs::path(outdir) / "holdout");
    for (const CorpusClip& c : clips) {
        auto [clip, track] = generate_stem(c.spec, c.seed, cqt);
        const fs::path dir = fs::path(outdir) / (c.holdout ? "holdout" : "train");
        write_wav((dir / (c.name + ".wav")).string(), clip);
        write_annotation((dir / (c.name + ".f0.csv")).string(), track);
    }
}

}  // namespace selfpitch
