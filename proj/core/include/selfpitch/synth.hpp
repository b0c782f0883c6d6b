// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "selfpitch/audio.hpp"
#include "selfpitch/autodiff.hpp"
#include "selfpitch/f0track.hpp"

namespace selfpitch {

/// Learnable synthesizer state: pre-activation per-frame harmonic gains,
/// per-harmonic global phase offsets, and a log10 master gain.
template <typename Real>
struct SynthParams {
    ad::Tensor<Real> g_pre;     // H x T
    ad::Tensor<Real> psi;       // H x 1 (per-harmonic phase offsets)
    ad::Tensor<Real> g_master;  // scalar

    SynthParams(int harmonics, int frames)
        : g_pre(ad::make_shape(harmonics, frames)), psi(ad::make_shape(harmonics, 1)),
          g_master(ad::make_shape(1)) {}
    int harmonics() const { return g_pre.shape.d[0]; }
    int frames() const { return g_pre.shape.d[1]; }
    std::vector<ad::Tensor<Real>*> parameters() { return {&g_pre, &psi, &g_master}; }
};

struct MrStftConfig {
    std::vector<int> fft_sizes{512, 1024, 2048};  // hop = fft/4, Hann windows
    double eps = 1e-7;

    void validate() const;
};

struct FitConfig {
    int harmonics = 24;
    int epochs = 500;
    double lr = 1e-2;
    double lambda_smooth = 0.1;

    void validate() const;
};

/// F0 via linear interpolation between frame centers, voicing via nearest
/// neighbor; both at sample rate, `out_len` samples.
std::pair<std::vector<double>, std::vector<double>> upsample_contours(const F0Track& track, int fs,
                                                                      int hop, int out_len);

/// Differentiable synthesis: s(t) = 10^g_master * v(t) * sum_h g_h(t) sin(phi_h(t)).
/// Harmonics above Nyquist contribute exactly zero. Returns the audio node.
template <typename Real>
typename ad::Graph<Real>::Id synthesize_node(ad::Graph<Real>& g, SynthParams<Real>& params,
                                             std::span<const double> f0, std::span<const double> v,
                                             int fs, int hop);

/// Same graph built from existing nodes (g_pre (H,T), psi (H,1), g_master (1)).
template <typename Real>
typename ad::Graph<Real>::Id synthesize_from_nodes(ad::Graph<Real>& g,
                                                   typename ad::Graph<Real>::Id g_pre,
                                                   typename ad::Graph<Real>::Id psi,
                                                   typename ad::Graph<Real>::Id g_master,
                                                   std::span<const double> f0,
                                                   std::span<const double> v, int fs, int hop);

/// Plain-value convenience wrapper around synthesize_node.
template <typename Real>
std::vector<Real> synthesize(SynthParams<Real>& params, std::span<const double> f0,
                             std::span<const double> v, int fs, int hop);

/// Owns the per-resolution DFT plans plus the precomputed target magnitudes.
template <typename Real>
class MrStftLoss {
  public:
    MrStftLoss(std::span<const Real> target, const MrStftConfig& cfg);

    /// sum over resolutions of mean |S - Y| + mean (log(S+eps) - log(Y+eps))^2
    typename ad::Graph<Real>::Id loss_node(ad::Graph<Real>& g, typename ad::Graph<Real>::Id s) const;

    const MrStftConfig& config() const { return cfg_; }

  private:
    MrStftConfig cfg_;
    std::vector<ad::StftPlan<Real>> plans_;
    std::vector<std::vector<Real>> target_mag_;
    std::vector<ad::Shape> target_shape_;
};

/// mean temporal total variation of an H x T gain matrix (graph node)
template <typename Real>
typename ad::Graph<Real>::Id tv_smoothness_node(ad::Graph<Real>& g, typename ad::Graph<Real>::Id gains);

/// plain-value TV for oracles: 1/(H(T-1)) sum |G[h,t+1] - G[h,t]|; 0 when T < 2
double tv_smoothness_value(std::span<const double> gains, int harmonics, int frames);

struct FitCurvePoint {
    int epoch = 0;
    double total = 0, mrstft = 0, tv = 0;
};

struct FitResult {
    std::vector<FitCurvePoint> curve;
    bool aborted_nan = false;
};

/// Analysis-by-synthesis: Adam on {G_pre, psi, g_master} against
/// MR-STFT + lambda * TV, with 10 ms raised-cosine fades applied to both the
/// synthesized and target audio before the loss. On a NaN loss the fit stops
/// and the best-so-far parameters are restored.
template <typename Real>
FitResult fit_synth(SynthParams<Real>& params, std::span<const Real> target, const F0Track& track,
                    const FitConfig& cfg, const MrStftConfig& stft_cfg = {});

}  // namespace selfpitch
