// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/cqt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selfpitch/binio.hpp"
#include "selfpitch/dotprod.hpp"
#include "selfpitch/common.hpp"
#include "selfpitch/parallel.hpp"

namespace selfpitch {

double CqtConfig::quality() const {
    return 1.0 / (std::pow(2.0, 1.0 / bins_per_octave) - 1.0);
}

void CqtConfig::validate() const {
    if (n_bins != 269) throw ConfigError("cqt.n_bins: must be 269, got " + std::to_string(n_bins));
    if (bins_per_octave != 36)
        throw ConfigError("cqt.bins_per_octave: must be 36, got " + std::to_string(bins_per_octave));
    if (bins_per_semitone * 12 != bins_per_octave)
        throw ConfigError("cqt.bins_per_semitone inconsistent with bins_per_octave");
    if (hop <= 0) throw ConfigError("cqt.hop: must be positive");
    if (sample_rate != 16000) throw ConfigError("cqt.sample_rate: must be 16000");
    if (!(eps > 0)) throw ConfigError("cqt.eps: must be positive");
    const double top = f_min * std::pow(2.0, double(n_bins - 1) / bins_per_octave);
    if (!(top < sample_rate / 2.0))
        throw ConfigError("cqt: top bin " + std::to_string(top) + " Hz exceeds Nyquist");
}

double bin_to_hz(const CqtConfig& cfg, double bin) {
    return cfg.f_min * std::pow(2.0, bin / cfg.bins_per_octave);
}

double hz_to_bin(const CqtConfig& cfg, double hz) {
    if (!(hz > 0)) throw RangeError("hz_to_bin: frequency must be positive");
    return cfg.bins_per_octave * std::log2(hz / cfg.f_min);
}

double bin_to_hz_checked(const CqtConfig& cfg, int bin) {
    if (bin < 0 || bin >= cfg.n_bins)
        throw RangeError("bin " + std::to_string(bin) + " outside [0, " + std::to_string(cfg.n_bins) + ")");
    return bin_to_hz(cfg, double(bin));
}

CqtEngine::CqtEngine(CqtConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const double q = cfg_.quality();
    lengths_.resize(std::size_t(cfg_.n_bins));
    offsets_.resize(std::size_t(cfg_.n_bins));
    std::size_t total = 0;
    for (int k = 0; k < cfg_.n_bins; ++k) {
        const double fk = bin_to_hz(cfg_, double(k));
        int len = int(std::ceil(q * cfg_.sample_rate / fk));
        if (len < 4) len = 4;
        lengths_[std::size_t(k)] = len;
        offsets_[std::size_t(k)] = total;
        total += std::size_t(len);
    }
    re_.resize(total);
    im_.resize(total);
    const double twopi = 2.0 * std::numbers::pi;
    for (int k = 0; k < cfg_.n_bins; ++k) {
        const double fk = bin_to_hz(cfg_, double(k));
        const int len = lengths_[std::size_t(k)];
        double* re = &re_[offsets_[std::size_t(k)]];
        double* im = &im_[offsets_[std::size_t(k)]];
        const double center = (len - 1) / 2.0;
        double wsum = 0.0;
        for (int n = 0; n < len; ++n) wsum += 0.5 - 0.5 * std::cos(twopi * n / (len - 1));
        for (int n = 0; n < len; ++n) {
            const double w = (0.5 - 0.5 * std::cos(twopi * n / (len - 1))) / wsum;
            const double ang = twopi * fk * (n - center) / cfg_.sample_rate;
            re[n] = w * std::cos(ang);
            im[n] = -w * std::sin(ang);
        }
    }
}

std::vector<float> CqtEngine::frame_at(const AudioClip& clip, std::int64_t center) const {
    const std::int64_t len = std::int64_t(clip.samples.size());
    std::vector<float> out(std::size_t(cfg_.n_bins));
    const double log_eps = std::log(cfg_.eps);

    // All kernels are centered on the same sample, so one zero-padded copy of
    // the widest window serves every bin; shorter kernels read its middle.
    const int max_len = lengths_[0];
    std::vector<double> window(static_cast<std::size_t>(max_len), 0.0);
    {
        const std::int64_t start = center - (max_len - 1) / 2;
        const std::int64_t n0 = start < 0 ? -start : 0;
        const std::int64_t n1 = std::min<std::int64_t>(max_len, len - start);
        for (std::int64_t n = n0; n < n1; ++n)
            window[std::size_t(n)] = double(clip.samples[std::size_t(start + n)]);
    }
    for (int k = 0; k < cfg_.n_bins; ++k) {
        const int klen = lengths_[std::size_t(k)];
        const double* re = &re_[offsets_[std::size_t(k)]];
        const double* im = &im_[offsets_[std::size_t(k)]];
        const double* x = window.data() + ((max_len - 1) / 2 - (klen - 1) / 2);
        double acc_re = 0.0, acc_im = 0.0;
        dot8_dual(x, re, im, klen, acc_re, acc_im);
        const double mag = std::sqrt(acc_re * acc_re + acc_im * acc_im);
        out[std::size_t(k)] = float(mag > cfg_.eps ? std::log(mag) : log_eps);
    }
    return out;
}

CqtSpectrogram CqtEngine::compute(const AudioClip& clip, int threads) const {
    clip.validate();
    CqtSpectrogram spec;
    spec.config = cfg_;
    spec.hop = cfg_.hop;
    spec.bins = cfg_.n_bins;
    spec.frames = int(clip.samples.size() / std::size_t(cfg_.hop)) + 1;
    spec.values.resize(std::size_t(spec.frames) * spec.bins);
    // one chunk per frame stripe; each frame's values are independent
    const int n_chunks = std::min(spec.frames, std::max(1, threads * 4));
    parallel_chunks(n_chunks, threads, [&](int chunk) {
        for (int t = chunk; t < spec.frames; t += n_chunks) {
            const std::vector<float> row = frame_at(clip, std::int64_t(t) * cfg_.hop);
            std::copy(row.begin(), row.end(), spec.values.begin() + std::size_t(t) * spec.bins);
        }
    });
    return spec;
}

std::vector<float> shift_frame(std::span<const float> x, int delta) {
    const int B = int(x.size());
    if (std::abs(delta) >= B) throw RangeError("shift_frame: |delta| must be < bin count");
    float pad = x[0];
    for (const float v : x) pad = std::min(pad, v);
    std::vector<float> out(std::size_t(B), pad);
    for (int b = 0; b < B; ++b) {
        const int src = b - delta;
        if (src >= 0 && src < B) out[std::size_t(b)] = x[std::size_t(src)];
    }
    return out;
}

namespace {

void augment_view(std::vector<float>& x, Rng& rng, const CqtConfig& cfg, const AugmentOptions& opts) {
    if (opts.gain) {
        const double g = rng.uniform(0.5, 1.5);
        const float dg = float(std::log(g));
        for (float& v : x) v += dg;
    }
    if (opts.noise) {
        const double snr_db = rng.uniform(15.0, 50.0);
        std::vector<double> m(x.size());
        double ps = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = std::exp(double(x[i]));
            ps += m[i] * m[i];
        }
        ps /= double(x.size());
        const double pn = ps * std::pow(10.0, -snr_db / 10.0);
        const double sigma = std::sqrt(pn);
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] += rng.normal(0.0, sigma);
            x[i] = float(std::log(std::max(m[i], cfg.eps)));
        }
    }
}

}  // namespace

ShiftPair augment_pair(std::span<const float> x, std::uint64_t seed, int epoch,
                       std::uint64_t frame_id, const CqtConfig& cfg, const AugmentOptions& opts) {
    if (opts.delta_max < 1 || opts.delta_max >= int(x.size()))
        throw RangeError("augment: delta_max " + std::to_string(opts.delta_max) + " out of range");
    Rng rng(key_hash(seed, std::uint64_t(epoch), frame_id));
    // nonzero delta in [-delta_max, delta_max]
    const int idx = int(rng.uniform_int(0, 2 * opts.delta_max - 1));
    const int delta = idx < opts.delta_max ? idx - opts.delta_max : idx - opts.delta_max + 1;

    ShiftPair pair;
    pair.delta = delta;
    pair.view_a.assign(x.begin(), x.end());
    pair.view_b = shift_frame(x, delta);
    augment_view(pair.view_a, rng, cfg, opts);
    augment_view(pair.view_b, rng, cfg, opts);
    return pair;
}

void save_cqts(const std::string& path, const CqtSpectrogram& spec) {
    binio::Writer w(path);
    w.tag("CQTS");
    w.u32(1);
    w.u32(std::uint32_t(spec.frames));
    w.u32(std::uint32_t(spec.bins));
    w.u32(std::uint32_t(spec.hop));
    w.f32s(spec.values.data(), spec.values.size());
}

CqtSpectrogram load_cqts(const std::string& path) {
    binio::Reader r(path);
    if (r.tag() != "CQTS") throw FormatError("cqts magic: not a CQTS file: " + path);
    const std::uint32_t version = r.u32();
    if (version != 1) throw FormatError("cqts version: expected 1, got " + std::to_string(version));
    CqtSpectrogram spec;
    spec.frames = int(r.u32());
    spec.bins = int(r.u32());
    spec.hop = int(r.u32());
    if (spec.frames < 0 || spec.bins <= 0) throw FormatError("cqts header: bad dimensions in " + path);
    spec.values.resize(std::size_t(spec.frames) * spec.bins);
    r.f32s(spec.values.data(), spec.values.size());
    spec.config.hop = spec.hop;
    return spec;
}

}  // namespace selfpitch
