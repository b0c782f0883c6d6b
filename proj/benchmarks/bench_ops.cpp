// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "selfpitch/autodiff.hpp"
#include "selfpitch/common.hpp"

using namespace selfpitch;
using namespace selfpitch::ad;

namespace {

template <typename Real>
Tensor<Real> randn(Shape s, std::uint64_t seed) {
    Tensor<Real> t(s);
    Rng rng(seed);
    for (Real& v : t.v) v = Real(rng.uniform(-1.0, 1.0));
    return t;
}

template <typename Real>
void BM_conv1d_forward(benchmark::State& state) {
    const int N = int(state.range(0));
    const int C = int(state.range(1));
    const int L = 269;
    Tensor<Real> x = randn<Real>(make_shape(N, C, L), 1);
    Tensor<Real> w = randn<Real>(make_shape(C, C / 4, 3), 2);
    Tensor<Real> b = randn<Real>(make_shape(C), 3);
    for (auto _ : state) {
        Graph<Real> g;
        const auto out = g.conv1d(g.leaf(x), g.leaf(w), g.leaf(b), 1, 1, 4, PadMode::kReplicate);
        benchmark::DoNotOptimize(g.val(out).data());
    }
    const double macs = double(N) * L * C * (C / 4) * 3;
    state.SetItemsProcessed(std::int64_t(macs) * state.iterations());
}

template <typename Real>
void BM_conv1d_train_step(benchmark::State& state) {
    const int N = int(state.range(0));
    const int C = int(state.range(1));
    const int L = 269;
    Tensor<Real> x = randn<Real>(make_shape(N, C, L), 1);
    Tensor<Real> w = randn<Real>(make_shape(C, C / 4, 3), 2);
    Tensor<Real> b = randn<Real>(make_shape(C), 3);
    for (auto _ : state) {
        Graph<Real> g;
        const auto out = g.conv1d(g.leaf(x), g.leaf(w), g.leaf(b), 1, 1, 4, PadMode::kReplicate);
        g.backward(g.sum(g.mul(out, out)));
        w.zero_grad();
        b.zero_grad();
        x.zero_grad();
        benchmark::DoNotOptimize(w.g.data());
    }
    const double macs = 3.0 * double(N) * L * C * (C / 4) * 3;
    state.SetItemsProcessed(std::int64_t(macs) * state.iterations());
}

void BM_stft_mag(benchmark::State& state) {
    const int fft = int(state.range(0));
    const StftPlan<float> plan = make_stft_plan<float>(fft, fft / 4);
    Tensor<float> x = randn<float>(make_shape(16000), 4);
    for (auto _ : state) {
        Graph<float> g;
        const auto out = g.stft_mag(g.leaf(x), plan);
        benchmark::DoNotOptimize(g.val(out).data());
    }
}

}  // namespace

BENCHMARK(BM_conv1d_forward<float>)->Args({16, 32})->Args({16, 64})->Args({16, 128});
BENCHMARK(BM_conv1d_forward<double>)->Args({16, 128});
BENCHMARK(BM_conv1d_train_step<float>)->Args({16, 32})->Args({16, 64})->Args({16, 128});
BENCHMARK(BM_stft_mag)->Arg(512)->Arg(1024)->Arg(2048);
