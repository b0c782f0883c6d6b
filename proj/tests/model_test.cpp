// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/model.hpp"

#include <cmath>

#include "doctest.h"
#include "selfpitch/common.hpp"

using namespace selfpitch;

namespace {

const CqtConfig& cqt() {
    static const CqtConfig cfg;
    return cfg;
}

ModelConfig small_config(std::uint64_t seed = 1) {
    ModelConfig cfg;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("same seed twice: bitwise identical parameters") {
    PitchModel<float> a(small_config(5), cqt().n_bins);
    PitchModel<float> b(small_config(5), cqt().n_bins);
    const auto& na = a.named_parameters();
    const auto& nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].first == nb[i].first);
        REQUIRE(na[i].second->v.size() == nb[i].second->v.size());
        for (std::size_t j = 0; j < na[i].second->v.size(); ++j)
            CHECK(na[i].second->v[j] == nb[i].second->v[j]);
    }
}

TEST_CASE("parameter count matches shape arithmetic and stays under 500k") {
    const ModelConfig cfg = small_config();
    PitchModel<float> model(cfg, cqt().n_bins);
    // oracle: summed shape arithmetic for the configured layers
    long expect = 0;
    expect += 32 * 1 * 7 + 32 + 32 + 32;  // stem conv + bias + norm
    int in_ch = 32;
    const int stage_ch[3] = {32, 64, 128};
    const int stage_st[3] = {1, 2, 2};
    for (int s = 0; s < 3; ++s) {
        const int out = stage_ch[s];
        for (int b = 0; b < 2; ++b) {
            const int bin = b == 0 ? in_ch : out;
            expect += out * (bin / 4) * 3 + out + 2 * out;  // conv1 + norm1
            expect += out * (out / 4) * 3 + out + 2 * out;  // conv2 + norm2
            if (b == 0 && (bin != out || stage_st[s] != 1)) expect += out * bin * 1 + out;  // proj
        }
        in_ch = out;
    }
    expect += 1 * 128 * 81 + 1;  // head
    CHECK(model.parameter_count() == expect);
    CHECK(model.parameter_count() < 500000);
}

TEST_CASE("output bins must match the CQT bin count") {
    ModelConfig cfg = small_config();
    cfg.output_bins = 128;
    CHECK_THROWS_AS(PitchModel<float>(cfg, cqt().n_bins), ConfigError);
}

TEST_CASE("zero frames produce identical, bin-constant logits") {
    PitchModel<float> model(small_config(3), cqt().n_bins);
    const int B = cqt().n_bins;
    std::vector<float> frames(std::size_t(3) * B, float(std::log(1e-8)));
    ad::Graph<float> g;
    const auto logits = model.forward(g, frames, 3);
    const auto& v = g.val(logits);
    // time-constant: rows identical
    for (int r = 1; r < 3; ++r)
        for (int k = 0; k < B; ++k)
            CHECK(v[std::size_t(r) * B + k] == v[std::size_t(k)]);
    // constant input + constant-preserving padding: bin-constant logits too
    float lo = v[0], hi = v[0];
    for (int k = 0; k < B; ++k) {
        lo = std::min(lo, v[std::size_t(k)]);
        hi = std::max(hi, v[std::size_t(k)]);
    }
    CHECK(double(hi - lo) < 1e-4);
}

TEST_CASE("batch rows are independent: permuting rows permutes outputs") {
    PitchModel<float> model(small_config(4), cqt().n_bins);
    const int B = cqt().n_bins;
    Rng rng(17);
    std::vector<float> frames(std::size_t(2) * B);
    for (auto& v : frames) v = float(rng.uniform(-10.0, 2.0));
    std::vector<float> swapped(frames.size());
    std::copy(frames.begin() + B, frames.end(), swapped.begin());
    std::copy(frames.begin(), frames.begin() + B, swapped.begin() + B);

    const auto a = model.predict_probs(frames, 2);
    const auto b = model.predict_probs(swapped, 2);
    for (int k = 0; k < B; ++k) {
        CHECK(a[std::size_t(k)] == b[std::size_t(B + k)]);
        CHECK(a[std::size_t(B + k)] == b[std::size_t(k)]);
    }
}

TEST_CASE("forward shape contract and NaN rejection") {
    PitchModel<float> model(small_config(5), cqt().n_bins);
    const int B = cqt().n_bins;
    std::vector<float> frames(std::size_t(8) * B, 0.1f);
    ad::Graph<float> g;
    const auto logits = model.forward(g, frames, 8);
    CHECK(g.shape(logits) == ad::make_shape(8, 1, B));
    frames[100] = std::nanf("");
    ad::Graph<float> g2;
    CHECK_THROWS_AS(model.forward(g2, frames, 8), NumericError);
}

TEST_CASE("forward is deterministic") {
    PitchModel<float> model(small_config(6), cqt().n_bins);
    const int B = cqt().n_bins;
    Rng rng(23);
    std::vector<float> frames(std::size_t(4) * B);
    for (auto& v : frames) v = float(rng.uniform(-12.0, 2.0));
    const auto a = model.predict_probs(frames, 4);
    const auto b = model.predict_probs(frames, 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("decode_pitch anchors") {
    std::vector<float> p(std::size_t(cqt().n_bins), 0.0f);
    SUBCASE("one-hot at 144 -> 440 Hz") {
        p[144] = 1.0f;
        const PitchEstimate est = decode_pitch(std::span<const float>(p), cqt());
        CHECK(est.bin == doctest::Approx(144.0));
        CHECK(est.f0_hz == doctest::Approx(440.0).epsilon(1e-9));
        CHECK(est.confidence == doctest::Approx(1.0));
    }
    SUBCASE("symmetric mass stays centered") {
        p[143] = 0.25f;
        p[144] = 0.5f;
        p[145] = 0.25f;
        const PitchEstimate est = decode_pitch(std::span<const float>(p), cqt());
        CHECK(est.bin == doctest::Approx(144.0).epsilon(1e-9));
    }
    SUBCASE("split mass lands halfway: f0 = bin_to_hz(144.5)") {
        p[144] = 0.5f;
        p[145] = 0.5f;
        const PitchEstimate est = decode_pitch(std::span<const float>(p), cqt());
        CHECK(est.bin == doctest::Approx(144.5).epsilon(1e-9));
        const double oracle = 27.5 * std::pow(2.0, 144.5 / 36.0);
        CHECK(est.f0_hz == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(oracle == doctest::Approx(444.3).epsilon(1e-3));
    }
}

TEST_CASE("decode_pitch of a rolled one-hot moves by the roll") {
    std::vector<float> p(std::size_t(cqt().n_bins), 0.0f);
    p[100] = 1.0f;
    const PitchEstimate base = decode_pitch(std::span<const float>(p), cqt());
    for (const int d : {-20, -3, 5, 40}) {
        std::vector<float> rolled(p.size(), 0.0f);
        rolled[std::size_t(100 + d)] = 1.0f;
        const PitchEstimate est = decode_pitch(std::span<const float>(rolled), cqt());
        CHECK(est.bin == doctest::Approx(base.bin + d).epsilon(1e-9));
    }
}

TEST_CASE("calibrate_head offset 0 is a no-op; +3 then -3 restores bitwise") {
    PitchModel<float> model(small_config(7), cqt().n_bins);
    std::vector<float> orig;
    for (const auto& [name, t] : model.named_parameters())
        if (name == "head.w") orig = t->v;
    REQUIRE(!orig.empty());

    model.calibrate_head(0);
    model.calibrate_head(3);
    model.calibrate_head(-3);
    for (const auto& [name, t] : model.named_parameters())
        if (name == "head.w")
            for (std::size_t i = 0; i < orig.size(); ++i) CHECK(t->v[i] == orig[i]);
}

TEST_CASE("calibrate_head preserves the tap multiset") {
    PitchModel<float> model(small_config(8), cqt().n_bins);
    std::vector<float> before, after;
    for (const auto& [name, t] : model.named_parameters())
        if (name == "head.w") before = t->v;
    model.calibrate_head(17);
    for (const auto& [name, t] : model.named_parameters())
        if (name == "head.w") after = t->v;
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("calibrate_head rejects offsets beyond the kernel length") {
    PitchModel<float> model(small_config(9), cqt().n_bins);
    CHECK_THROWS_AS(model.calibrate_head(81), RangeError);
    CHECK_THROWS_AS(model.calibrate_head(-81), RangeError);
}

TEST_CASE("save and load round-trip through the checkpoint container") {
    PitchModel<float> a(small_config(10), cqt().n_bins);
    Checkpoint ckpt;
    a.save(ckpt);
    PitchModel<float> b(small_config(11), cqt().n_bins);  // different init
    b.load(ckpt);
    const int B = cqt().n_bins;
    std::vector<float> frames(static_cast<std::size_t>(B), 0.0f);
    Rng rng(31);
    for (auto& v : frames) v = float(rng.uniform(-10.0, 0.0));
    const auto pa = a.predict_probs(frames, 1);
    const auto pb = b.predict_probs(frames, 1);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("clone produces an identical, independent model") {
    PitchModel<float> a(small_config(12), cqt().n_bins);
    auto b = a.clone();
    const int B = cqt().n_bins;
    std::vector<float> frames(std::size_t(B), -3.0f);
    const auto pa = a.predict_probs(frames, 1);
    const auto pb = b->predict_probs(frames, 1);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    // mutating the clone leaves the original alone
    b->calibrate_head(5);
    const auto pa2 = a.predict_probs(frames, 1);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pa2[i]);
}
