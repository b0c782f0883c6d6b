// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "selfpitch/common.hpp"

using namespace selfpitch;

namespace {

StemSpec single_note_spec(int midi, double dur = 1.0) {
    StemSpec spec;
    NoteSpec note;
    note.onset_s = 0.2;
    note.duration_s = dur;
    note.midi = midi;
    note.velocity = 0.9;
    spec.notes = {note};
    spec.harmonics = 6;
    spec.decay_rates = {0.5, 1.0, 1.5};
    return spec;
}

}  // namespace

TEST_CASE("single A4 note: all voiced frames report 440 Hz exactly") {
    const auto [clip, track] = generate_stem(single_note_spec(69), 1);
    long voiced = 0;
    for (const F0Entry& e : track.entries) {
        if (e.voiced) {
            ++voiced;
            CHECK(e.f0_hz == 440.0);
        }
    }
    CHECK(voiced > 90);  // ~1 s of voiced frames at 100 fps
}

TEST_CASE("zero notes: all-zero audio, all frames unvoiced") {
    StemSpec spec;
    spec.harmonics = 4;
    const auto [clip, track] = generate_stem(spec, 2);
    for (const float s : clip.samples) CHECK(s == 0.0f);
    for (const F0Entry& e : track.entries) CHECK(e.voiced == 0);
    CHECK(track.entries.size() > 0);
}

TEST_CASE("vibrato stays within the oracle band") {
    StemSpec spec = single_note_spec(69, 2.0);
    spec.vibrato_rate_hz = 5.0;
    spec.vibrato_depth_cents = 50.0;
    const auto [clip, track] = generate_stem(spec, 3);
    const double lo = 440.0 * std::pow(2.0, -50.0 / 1200.0);
    const double hi = 440.0 * std::pow(2.0, 50.0 / 1200.0);
    bool near_lo = false, near_hi = false;
    for (const F0Entry& e : track.entries) {
        if (!e.voiced) continue;
        CHECK(e.f0_hz >= lo - 1e-9);
        CHECK(e.f0_hz <= hi + 1e-9);
        near_lo = near_lo || e.f0_hz < lo * 1.005;
        near_hi = near_hi || e.f0_hz > hi * 0.995;
    }
    CHECK(near_lo);  // the band is actually explored
    CHECK(near_hi);
}

TEST_CASE("clean profile: inter-note regions are bitwise zero") {
    const StemSpec spec = single_note_spec(60);
    const auto [clip, track] = generate_stem(spec, 4);
    const int fs = clip.sample_rate;
    const int before_onset = int(0.19 * fs);
    for (int t = 0; t < before_onset; ++t) CHECK(clip.samples[std::size_t(t)] == 0.0f);
    // after note end + margin
    for (std::size_t t = std::size_t(1.25 * fs); t < clip.samples.size(); ++t)
        CHECK(clip.samples[t] == 0.0f);
}

TEST_CASE("realistic profile: inter-note regions have nonzero RMS") {
    StemSpec spec = single_note_spec(60);
    spec.profile = Profile::kRealistic;
    spec.degrade_cfg.noise_floor_snr_db = 30.0;
    spec.degrade_cfg.reverb_decay_s = 0.2;
    const auto [clip, track] = generate_stem(spec, 5);
    double rms = 0.0;
    const int n = int(0.15 * clip.sample_rate);
    for (int t = 0; t < n; ++t) rms += double(clip.samples[std::size_t(t)]) * clip.samples[std::size_t(t)];
    rms = std::sqrt(rms / n);
    CHECK(rms > 1e-5);
}

TEST_CASE("generate_stem is deterministic") {
    StemSpec spec = single_note_spec(64);
    spec.profile = Profile::kRealistic;
    spec.degrade_cfg.noise_floor_snr_db = 25.0;
    spec.degrade_cfg.reverb_decay_s = 0.15;
    const auto [a, ta] = generate_stem(spec, 7);
    const auto [b, tb] = generate_stem(spec, 7);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("voiced flags agree with note spans to within one hop") {
    const StemSpec spec = single_note_spec(72, 0.7);
    const auto [clip, track] = generate_stem(spec, 8);
    for (const F0Entry& e : track.entries) {
        const double t = double(e.frame) * track.hop / clip.sample_rate;
        const bool inside = t >= 0.2 && t < 0.9;
        CHECK(int(inside) == e.voiced);
    }
}

TEST_CASE("note out of CQT pitch range raises a range error") {
    StemSpec spec = single_note_spec(15);  // ~19.4 Hz, below A0
    CHECK_THROWS_AS(generate_stem(spec, 1), RangeError);
    StemSpec high = single_note_spec(119);  // ~7.9 kHz, above the top bin
    CHECK_THROWS_AS(generate_stem(high, 1), RangeError);
}

TEST_CASE("degrade: all-zero effects is the identity") {
    const auto [clip, track] = generate_stem(single_note_spec(69), 9);
    const AudioClip out = degrade(clip, DegradeConfig{}, 1);
    REQUIRE(out.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i) CHECK(out.samples[i] == clip.samples[i]);
}

TEST_CASE("degrade: snr 20 dB on a unit-power clip adds noise power about 0.01") {
    AudioClip clip;
    clip.samples.resize(32000);
    Rng rng(11);
    for (float& s : clip.samples) s = float(rng.normal(0.0, 0.5));  // power 0.25
    double p_clip = 0.0;
    for (const float s : clip.samples) p_clip += double(s) * s;
    p_clip /= double(clip.samples.size());

    DegradeConfig cfg;
    cfg.noise_floor_snr_db = 20.0;
    const AudioClip out = degrade(clip, cfg, 12);
    double p_noise = 0.0;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const double d = double(out.samples[i]) - double(clip.samples[i]);
        p_noise += d * d;
    }
    p_noise /= double(out.samples.size());
    CHECK(p_noise == doctest::Approx(p_clip * 0.01).epsilon(0.08));
}

TEST_CASE("degrade: silent input uses the fixed 1e-4 reference power") {
    AudioClip clip;
    clip.samples.assign(16000, 0.0f);
    DegradeConfig cfg;
    cfg.noise_floor_snr_db = 20.0;
    const AudioClip out = degrade(clip, cfg, 13);
    double p = 0.0;
    for (const float s : out.samples) p += double(s) * s;
    p /= double(out.samples.size());
    CHECK(p == doctest::Approx(1e-4 * 0.01).epsilon(0.1));
}

TEST_CASE("degrade: reverb tail envelope decays to about e^-2 at the decay time") {
    // impulse through the reverb path; fit the energy envelope of the tail
    AudioClip clip;
    clip.samples.assign(16000, 0.0f);
    clip.samples[0] = 1.0f;
    DegradeConfig cfg;
    cfg.reverb_decay_s = 0.3;
    const AudioClip out = degrade(clip, cfg, 14);
    // windowed RMS near t=0 vs near t=decay
    auto window_rms = [&](double t0) {
        const int c = int(t0 * out.sample_rate);
        const int w = 160;
        double acc = 0.0;
        for (int t = c; t < c + w; ++t) acc += double(out.samples[std::size_t(t)]) * out.samples[std::size_t(t)];
        return std::sqrt(acc / w);
    };
    const double early = window_rms(0.004);
    const double late = window_rms(0.3);
    // amplitude envelope exp(-2 t / decay): at t = decay the ratio is e^-2
    const double ratio = late / early;
    CHECK(ratio == doctest::Approx(std::exp(-2.0)).epsilon(0.5));
    // the kernel spans 2x decay; past that the impulse response is silent
    CHECK(std::abs(out.samples[std::size_t(int(0.65 * out.sample_rate))]) <= 1e-9);
}

TEST_CASE("degrade config validation names the field") {
    DegradeConfig cfg;
    cfg.noise_floor_snr_db = 3.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("noise_floor_snr_db"), RangeError);
    cfg = DegradeConfig{};
    cfg.bleed_gain = 0.7;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("bleed_gain"), RangeError);
}

TEST_CASE("bleed mixes a second stem at the configured gain") {
    AudioClip clip;
    clip.samples.assign(24000, 0.0f);
    DegradeConfig cfg;
    cfg.bleed_gain = 0.25;
    auto bleed = std::make_shared<StemSpec>(single_note_spec(50, 0.8));
    cfg.bleed_source = bleed;
    const AudioClip out = degrade(clip, cfg, 15);
    double peak = 0.0;
    for (const float s : out.samples) peak = std::max(peak, std::abs(double(s)));
    CHECK(peak > 0.01);
    CHECK(peak < 0.5);
}

TEST_CASE("corpus presets render deterministically") {
    namespace fs = std::filesystem;
    const std::string dir_a = (fs::temp_directory_path() / "sp_corpus_a").string();
    const std::string dir_b = (fs::temp_directory_path() / "sp_corpus_b").string();
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    generate_corpus(dir_a, "mini", 7);
    generate_corpus(dir_b, "mini", 7);
    int files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(entry.path(), dir_a);
        std::ifstream fa(entry.path(), std::ios::binary);
        std::ifstream fb(fs::path(dir_b) / rel, std::ios::binary);
        REQUIRE(fb.good());
        const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(ca == cb);
    }
    CHECK(files == 12);  // 6 clips x (wav + annotation)
}
