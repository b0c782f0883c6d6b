// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "selfpitch/cqt.hpp"
#include "selfpitch/losses.hpp"
#include "selfpitch/model.hpp"
#include "selfpitch/common.hpp"

using namespace selfpitch;

namespace {

const CqtEngine& engine() {
    static const CqtEngine e{CqtConfig{}};
    return e;
}

std::vector<float> random_frames(int n, std::uint64_t seed) {
    std::vector<float> frames(std::size_t(n) * 269);
    Rng rng(seed);
    for (float& v : frames) v = float(rng.uniform(-14.0, 2.0));
    return frames;
}

void BM_cqt_frame(benchmark::State& state) {
    AudioClip clip;
    clip.samples.resize(48000);
    Rng rng(1);
    for (float& s : clip.samples) s = float(rng.uniform(-0.5, 0.5));
    for (auto _ : state) {
        benchmark::DoNotOptimize(engine().frame_at(clip, 24000).data());
    }
}

void BM_model_forward(benchmark::State& state) {
    const int n = int(state.range(0));
    ModelConfig cfg;
    PitchModel<float> model(cfg, 269);
    const std::vector<float> frames = random_frames(n, 2);
    for (auto _ : state) {
        ad::Graph<float> g;
        const auto logits = model.forward(g, frames, n);
        benchmark::DoNotOptimize(g.val(logits).data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}

void BM_model_train_pair_step(benchmark::State& state) {
    // one forward+backward over n view pairs, the M-step inner loop
    const int n = int(state.range(0));
    ModelConfig cfg;
    PitchModel<float> model(cfg, 269);
    const std::vector<float> va = random_frames(n, 3);
    const std::vector<float> vb = random_frames(n, 4);
    std::vector<int> deltas(std::size_t(n), 6);
    std::vector<float> weights(std::size_t(n), 1.0f);
    for (auto _ : state) {
        ad::Graph<float> g;
        const auto y = model.forward(g, va, n);
        const auto y2 = model.forward(g, vb, n);
        const auto losses = pair_losses(g, y, y2, deltas, LossConfig{});
        const auto total = total_loss<float>(g, losses, weights, n);
        g.backward(total);
        for (auto* p : model.parameters()) p->zero_grad();
        benchmark::DoNotOptimize(total);
    }
    state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_cqt_frame);
BENCHMARK(BM_model_forward)->Arg(16)->Arg(64);
BENCHMARK(BM_model_train_pair_step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
