// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "selfpitch/adam.hpp"
#include "selfpitch/dotprod.hpp"
#include "selfpitch/common.hpp"

namespace selfpitch {

void MrStftConfig::validate() const {
    if (fft_sizes.empty()) throw ConfigError("mrstft.fft_sizes: need at least one resolution");
    for (std::size_t i = 1; i < fft_sizes.size(); ++i)
        if (fft_sizes[i] <= fft_sizes[i - 1])
            throw ConfigError("mrstft.fft_sizes: must be strictly increasing");
    if (!(eps > 0)) throw ConfigError("mrstft.eps: must be positive");
}

void FitConfig::validate() const {
    if (harmonics < 1) throw ConfigError("synth.harmonics: must be >= 1");
    if (epochs < 1) throw ConfigError("synth.fit_epochs: must be >= 1");
    if (!(lr > 0)) throw ConfigError("synth.fit_lr: must be positive");
    if (lambda_smooth < 0) throw ConfigError("synth.lambda_smooth: must be >= 0");
}

std::pair<std::vector<double>, std::vector<double>> upsample_contours(const F0Track& track, int fs,
                                                                      int hop, int out_len) {
    if (track.entries.empty()) throw RangeError("upsample_contours: empty track");
    if (out_len < 1 || hop < 1) throw RangeError("upsample_contours: bad hop/out_len");
    (void)fs;
    // dense frame arrays; frame indices absent from the track read as unvoiced
    const int T = track.entries.back().frame + 1;
    std::vector<double> f0_frames(std::size_t(T), 0.0), v_frames(std::size_t(T), 0.0);
    for (const F0Entry& e : track.entries) {
        f0_frames[std::size_t(e.frame)] = e.f0_hz;
        v_frames[std::size_t(e.frame)] = double(e.voiced);
    }
    std::vector<double> f0(static_cast<std::size_t>(out_len), 0.0), v(static_cast<std::size_t>(out_len), 0.0);
    for (int t = 0; t < out_len; ++t) {
        const int i = t / hop;
        if (i >= T - 1) {
            f0[std::size_t(t)] = f0_frames[std::size_t(T - 1)];
        } else {
            const double frac = double(t - i * hop) / double(hop);
            f0[std::size_t(t)] =
                (1.0 - frac) * f0_frames[std::size_t(i)] + frac * f0_frames[std::size_t(i + 1)];
        }
        int j = (t + hop / 2) / hop;  // nearest frame center: sharp on/offsets
        if (j > T - 1) j = T - 1;
        v[std::size_t(t)] = v_frames[std::size_t(j)];
    }
    return {std::move(f0), std::move(v)};
}

template <typename Real>
typename ad::Graph<Real>::Id synthesize_from_nodes(ad::Graph<Real>& g,
                                                   typename ad::Graph<Real>::Id g_pre,
                                                   typename ad::Graph<Real>::Id psi,
                                                   typename ad::Graph<Real>::Id g_master,
                                                   std::span<const double> f0,
                                                   std::span<const double> v, int fs, int hop) {
    const int H = g.shape(g_pre).d[0];
    const int T = g.shape(g_pre).d[1];
    const int L = int(f0.size());
    if (!(g.shape(psi) == ad::make_shape(H, 1)))
        throw ShapeError("synthesize: psi shape " + g.shape(psi).str() + " != (H,1)");
    if (int(v.size()) != L)
        throw ShapeError("synthesize: f0 length " + std::to_string(L) + " != v length " +
                         std::to_string(v.size()));
    if ((L + hop - 1) / hop > T)
        throw ShapeError("synthesize: " + std::to_string(T) + " frames do not cover " +
                         std::to_string(L) + " samples");

    // The phase integral and the Nyquist mask depend only on the (fixed) f0
    // contour, so they enter the graph as constants; gradients flow through
    // the gains, the phase offsets, and the master gain.
    const double twopi = 2.0 * std::numbers::pi;
    std::vector<Real> phase(std::size_t(H) * std::size_t(L), Real(0));
    std::vector<Real> mask(std::size_t(H) * L);
    std::vector<Real> gate(static_cast<std::size_t>(L), Real(0));
    const double nyquist = fs / 2.0;
    for (int t = 0; t < L; ++t) gate[std::size_t(t)] = Real(v[std::size_t(t)]);
    for (int h = 0; h < H; ++h) {
        double acc = 0.0;
        Real* ph = &phase[std::size_t(h) * L];
        Real* mk = &mask[std::size_t(h) * L];
        for (int t = 0; t < L; ++t) {
            acc += twopi * (h + 1) * f0[std::size_t(t)] / fs;
            ph[t] = Real(acc);
            mk[t] = (h + 1) * f0[std::size_t(t)] > nyquist ? Real(0) : Real(1);
        }
    }

    const auto gains = g.upsample_linear(g.softplus(g_pre), hop, L);  // (H,L)
    const auto psi_full = g.upsample_nearest(psi, 1, L);              // (H,1) -> (H,L)
    const auto phi = g.add(g.constant(ad::make_shape(H, L), std::span<const Real>(phase)), psi_full);
    const auto osc = g.mul(g.sin(phi), g.constant(ad::make_shape(H, L), std::span<const Real>(mask)));
    const auto mix = g.sum_axis0(g.mul(gains, osc));                  // (L)
    const auto gated = g.mul(mix, g.constant(ad::make_shape(L), std::span<const Real>(gate)));
    const auto master = g.exp(g.affine(g_master, Real(std::numbers::ln10), Real(0)));
    return g.mul(gated, master);
}

template <typename Real>
typename ad::Graph<Real>::Id synthesize_node(ad::Graph<Real>& g, SynthParams<Real>& params,
                                             std::span<const double> f0, std::span<const double> v,
                                             int fs, int hop) {
    return synthesize_from_nodes(g, g.leaf(params.g_pre), g.leaf(params.psi),
                                 g.leaf(params.g_master), f0, v, fs, hop);
}

template <typename Real>
std::vector<Real> synthesize(SynthParams<Real>& params, std::span<const double> f0,
                             std::span<const double> v, int fs, int hop) {
    ad::Graph<Real> g;
    const auto s = synthesize_node(g, params, f0, v, fs, hop);
    return g.val(s);
}

// ---------------------------------------------------------------------------
// MR-STFT loss
// ---------------------------------------------------------------------------

namespace {

template <typename Real>
std::vector<Real> stft_mag_values(std::span<const Real> x, const ad::StftPlan<Real>& plan) {
    const int L = int(x.size());
    if (L < plan.fft)
        throw ShapeError("mrstft: segment length " + std::to_string(L) + " < fft " +
                         std::to_string(plan.fft));
    const int nf = (L - plan.fft) / plan.hop + 1;
    std::vector<Real> out(std::size_t(nf) * plan.bins);
    constexpr Real kTiny = Real(1e-20);
    for (int f = 0; f < nf; ++f) {
        const Real* xw = &x[std::size_t(f) * plan.hop];
        for (int b = 0; b < plan.bins; ++b) {
            const Real* cr = &plan.cos_w[std::size_t(b) * plan.fft];
            const Real* sr = &plan.sin_w[std::size_t(b) * plan.fft];
            Real re = 0, im = 0;
            dot8_dual(xw, cr, sr, plan.fft, re, im);
            out[std::size_t(f) * plan.bins + b] = std::sqrt(re * re + im * im + kTiny);
        }
    }
    return out;
}

}  // namespace

template <typename Real>
MrStftLoss<Real>::MrStftLoss(std::span<const Real> target, const MrStftConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (const int fft : cfg_.fft_sizes) {
        plans_.push_back(ad::make_stft_plan<Real>(fft, fft / 4));
        const ad::StftPlan<Real>& plan = plans_.back();
        target_mag_.push_back(stft_mag_values(target, plan));
        const int nf = (int(target.size()) - plan.fft) / plan.hop + 1;
        target_shape_.push_back(ad::make_shape(nf, plan.bins));
    }
}

template <typename Real>
typename ad::Graph<Real>::Id MrStftLoss<Real>::loss_node(ad::Graph<Real>& g,
                                                         typename ad::Graph<Real>::Id s) const {
    typename ad::Graph<Real>::Id total = -1;
    for (std::size_t r = 0; r < plans_.size(); ++r) {
        const auto smag = g.stft_mag(s, plans_[r]);
        const auto y = g.constant(target_shape_[r], std::span<const Real>(target_mag_[r]));
        const auto l1 = g.mean(g.abs(g.sub(smag, y)));
        // log target is constant: precompute into the graph
        std::vector<Real> logy(target_mag_[r].size());
        for (std::size_t i = 0; i < logy.size(); ++i)
            logy[i] = Real(std::log(double(target_mag_[r][i]) + cfg_.eps));
        const auto d = g.sub(g.log(g.affine(smag, Real(1), Real(cfg_.eps))),
                             g.constant(target_shape_[r], std::span<const Real>(logy)));
        const auto l2 = g.mean(g.mul(d, d));
        const auto term = g.add(l1, l2);
        total = total < 0 ? term : g.add(total, term);
    }
    return total;
}

// ---------------------------------------------------------------------------
// TV smoothness
// ---------------------------------------------------------------------------

template <typename Real>
typename ad::Graph<Real>::Id tv_smoothness_node(ad::Graph<Real>& g,
                                                typename ad::Graph<Real>::Id gains) {
    const ad::Shape s = g.shape(gains);
    if (s.rank != 2) throw ShapeError("tv_smoothness: need H x T gains, got " + s.str());
    const int H = s.d[0], T = s.d[1];
    if (T < 2) {
        std::fprintf(stderr, "warning: tv_smoothness on %d frame(s); value is 0 by convention\n", T);
        return g.scalar(Real(0));
    }
    // |G[h,t+1] - G[h,t]| via a circular roll with the wrap column masked out
    const auto shifted = g.roll(gains, -1);
    std::vector<Real> mask(std::size_t(H) * T, Real(1));
    for (int h = 0; h < H; ++h) mask[std::size_t(h) * T + (T - 1)] = Real(0);
    const auto diffs = g.mul(g.sub(shifted, gains), g.constant(s, std::span<const Real>(mask)));
    return g.affine(g.sum(g.abs(diffs)), Real(1.0 / (double(H) * (T - 1))), Real(0));
}

double tv_smoothness_value(std::span<const double> gains, int harmonics, int frames) {
    if (int(gains.size()) != harmonics * frames)
        throw ShapeError("tv_smoothness: " + std::to_string(gains.size()) + " values for " +
                         std::to_string(harmonics) + "x" + std::to_string(frames));
    if (frames < 2) return 0.0;
    double acc = 0.0;
    for (int h = 0; h < harmonics; ++h)
        for (int t = 0; t + 1 < frames; ++t)
            acc += std::abs(gains[std::size_t(h) * frames + t + 1] - gains[std::size_t(h) * frames + t]);
    return acc / (double(harmonics) * (frames - 1));
}

// ---------------------------------------------------------------------------
// the fit
// ---------------------------------------------------------------------------

template <typename Real>
FitResult fit_synth(SynthParams<Real>& params, std::span<const Real> target, const F0Track& track,
                    const FitConfig& cfg, const MrStftConfig& stft_cfg) {
    cfg.validate();
    const int L = int(target.size());
    const int fs = kSampleRate;
    auto [f0, v] = upsample_contours(track, fs, track.hop, L);

    // init: G_pre at softplus^-1(0.01), psi = 0, master = 0
    const Real g0 = Real(std::log(std::expm1(0.01)));
    std::fill(params.g_pre.v.begin(), params.g_pre.v.end(), g0);
    std::fill(params.psi.v.begin(), params.psi.v.end(), Real(0));
    params.g_master.v[0] = Real(0);

    // 10 ms raised-cosine fades on both sides of both signals
    std::vector<Real> env(std::size_t(L), Real(1));
    const int fade = std::min(L / 2, fs / 100);
    for (int t = 0; t < fade; ++t) {
        const Real e = Real(0.5 - 0.5 * std::cos(std::numbers::pi * t / fade));
        env[std::size_t(t)] *= e;
        env[std::size_t(L - 1 - t)] *= e;
    }
    std::vector<Real> faded_target(static_cast<std::size_t>(L), Real(0));
    for (int t = 0; t < L; ++t) faded_target[std::size_t(t)] = target[std::size_t(t)] * env[std::size_t(t)];
    const MrStftLoss<Real> mrstft(faded_target, stft_cfg);

    auto plist = params.parameters();
    ad::AdamState<Real> adam(Real(cfg.lr));
    FitResult result;
    // best-so-far snapshot for the NaN-abort contract
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<std::vector<Real>> best_values;
    for (auto* p : plist) best_values.push_back(p->v);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ad::Graph<Real> g;
        const auto s = synthesize_node(g, params, f0, v, fs, track.hop);
        const auto s_faded = g.mul(s, g.constant(ad::make_shape(L), std::span<const Real>(env)));
        const auto l_spec = mrstft.loss_node(g, s_faded);
        const auto gains = g.softplus(g.leaf(params.g_pre));
        const auto l_tv = tv_smoothness_node(g, gains);
        const auto total = g.add(l_spec, g.affine(l_tv, Real(cfg.lambda_smooth), Real(0)));

        FitCurvePoint pt;
        pt.epoch = epoch;
        pt.mrstft = double(g.val(l_spec)[0]);
        pt.tv = double(g.val(l_tv)[0]);
        pt.total = double(g.val(total)[0]);
        if (!std::isfinite(pt.total)) {
            result.aborted_nan = true;
            for (std::size_t p = 0; p < plist.size(); ++p) plist[p]->v = best_values[p];
            break;
        }
        result.curve.push_back(pt);
        if (pt.total < best_total) {
            best_total = pt.total;
            for (std::size_t p = 0; p < plist.size(); ++p) best_values[p] = plist[p]->v;
        }
        g.backward(total);
        adam.step(plist);
    }
    return result;
}

template struct SynthParams<float>;
template struct SynthParams<double>;
template class MrStftLoss<float>;
template class MrStftLoss<double>;
template typename ad::Graph<float>::Id synthesize_from_nodes<float>(ad::Graph<float>&, int, int, int,
                                                                    std::span<const double>,
                                                                    std::span<const double>, int, int);
template typename ad::Graph<double>::Id synthesize_from_nodes<double>(ad::Graph<double>&, int, int,
                                                                      int, std::span<const double>,
                                                                      std::span<const double>, int,
                                                                      int);
template typename ad::Graph<float>::Id synthesize_node<float>(ad::Graph<float>&, SynthParams<float>&,
                                                              std::span<const double>,
                                                              std::span<const double>, int, int);
template typename ad::Graph<double>::Id synthesize_node<double>(ad::Graph<double>&,
                                                                SynthParams<double>&,
                                                                std::span<const double>,
                                                                std::span<const double>, int, int);
template std::vector<float> synthesize<float>(SynthParams<float>&, std::span<const double>,
                                              std::span<const double>, int, int);
template std::vector<double> synthesize<double>(SynthParams<double>&, std::span<const double>,
                                                std::span<const double>, int, int);
template typename ad::Graph<float>::Id tv_smoothness_node<float>(ad::Graph<float>&, int);
template typename ad::Graph<double>::Id tv_smoothness_node<double>(ad::Graph<double>&, int);
template FitResult fit_synth<float>(SynthParams<float>&, std::span<const float>, const F0Track&,
                                    const FitConfig&, const MrStftConfig&);
template FitResult fit_synth<double>(SynthParams<double>&, std::span<const double>, const F0Track&,
                                     const FitConfig&, const MrStftConfig&);

}  // namespace selfpitch
