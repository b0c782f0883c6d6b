// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "selfpitch/common.hpp"

namespace selfpitch {

namespace {
constexpr double kNormEps = 1e-5;
}

void ModelConfig::validate() const {
    if (output_bins < 2) throw ConfigError("model.output_bins: must be >= 2");
    if (stem_channels < 1 || stem_kernel < 1 || stem_kernel % 2 == 0)
        throw ConfigError("model.stem: channels >= 1 and odd kernel required");
    for (int c : stage_channels)
        if (c < 1 || c % groups != 0)
            throw ConfigError("model.stage_channels: must be positive and divisible by groups");
    for (int s : stage_strides)
        if (s != 1 && s != 2) throw ConfigError("model.stage_strides: must be 1 or 2");
    if (stem_channels % groups != 0)
        throw ConfigError("model.stem_channels: must be divisible by groups");
    if (blocks_per_stage < 1) throw ConfigError("model.blocks_per_stage: must be >= 1");
    if (block_kernel % 2 == 0) throw ConfigError("model.block_kernel: must be odd");
    if (head_kernel % 2 == 0 || head_kernel < 3) throw ConfigError("model.head_kernel: must be odd and >= 3");
}

template <typename Real>
PitchModel<Real>::PitchModel(ModelConfig cfg, int input_bins) : cfg_(cfg), input_bins_(input_bins) {
    cfg_.validate();
    if (cfg_.output_bins != input_bins)
        throw ConfigError("model.output_bins (" + std::to_string(cfg_.output_bins) +
                          ") must equal the CQT bin count (" + std::to_string(input_bins) + ")");

    register_param("stem.w", ad::make_shape(cfg_.stem_channels, 1, cfg_.stem_kernel));
    register_param("stem.b", ad::make_shape(cfg_.stem_channels));
    register_param("stem.norm.g", ad::make_shape(cfg_.stem_channels));
    register_param("stem.norm.b", ad::make_shape(cfg_.stem_channels));

    int in_ch = cfg_.stem_channels;
    for (int s = 0; s < 3; ++s) {
        const int out_ch = cfg_.stage_channels[std::size_t(s)];
        for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
            const std::string base = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
            const int bin = b == 0 ? in_ch : out_ch;
            register_param(base + "conv1.w", ad::make_shape(out_ch, bin / cfg_.groups, cfg_.block_kernel));
            register_param(base + "conv1.b", ad::make_shape(out_ch));
            register_param(base + "norm1.g", ad::make_shape(out_ch));
            register_param(base + "norm1.b", ad::make_shape(out_ch));
            register_param(base + "conv2.w", ad::make_shape(out_ch, out_ch / cfg_.groups, cfg_.block_kernel));
            register_param(base + "conv2.b", ad::make_shape(out_ch));
            register_param(base + "norm2.g", ad::make_shape(out_ch));
            register_param(base + "norm2.b", ad::make_shape(out_ch));
            const bool need_proj = b == 0 && (bin != out_ch || cfg_.stage_strides[std::size_t(s)] != 1);
            if (need_proj) {
                register_param(base + "proj.w", ad::make_shape(out_ch, bin, 1));
                register_param(base + "proj.b", ad::make_shape(out_ch));
            }
        }
        in_ch = out_ch;
    }
    register_param("head.w", ad::make_shape(1, in_ch, cfg_.head_kernel));
    register_param("head.b", ad::make_shape(1));

    // fan-in-scaled uniform init, deterministic from the seed; norm scales
    // start at 1, biases and shifts at 0
    int pi = 0;
    for (auto& [name, tensor] : params_) {
        Rng rng(key_hash(cfg_.seed, 0x696e6974ull, std::uint64_t(pi++)));
        if (name.ends_with("norm.g") || name.ends_with("norm1.g") || name.ends_with("norm2.g")) {
            std::fill(tensor->v.begin(), tensor->v.end(), Real(1));
        } else if (name.ends_with(".b") || name.ends_with("norm.b")) {
            std::fill(tensor->v.begin(), tensor->v.end(), Real(0));
        } else {
            const ad::Shape& s = tensor->shape;
            const int fan_in = s.rank == 3 ? s.d[1] * s.d[2] : s.d[0];
            const double bound = 1.0 / std::sqrt(double(fan_in));
            for (Real& v : tensor->v) v = Real(rng.uniform(-bound, bound));
        }
    }
}

template <typename Real>
void PitchModel<Real>::register_param(const std::string& name, ad::Shape shape) {
    params_.emplace_back(name, std::make_unique<ad::Tensor<Real>>(shape));
    named_.emplace_back(name, params_.back().second.get());
}

template <typename Real>
ad::Tensor<Real>& PitchModel<Real>::p(const std::string& name) {
    for (auto& [n, t] : params_)
        if (n == name) return *t;
    throw ConfigError("model: unknown parameter '" + name + "'");
}

template <typename Real>
const ad::Tensor<Real>& PitchModel<Real>::p(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return *t;
    throw ConfigError("model: unknown parameter '" + name + "'");
}

template <typename Real>
long PitchModel<Real>::parameter_count() const {
    long total = 0;
    for (const auto& [n, t] : params_) total += t->numel();
    return total;
}

template <typename Real>
std::vector<ad::Tensor<Real>*> PitchModel<Real>::parameters() {
    std::vector<ad::Tensor<Real>*> out;
    out.reserve(params_.size());
    for (auto& [n, t] : params_) out.push_back(t.get());
    return out;
}

template <typename Real>
typename ad::Graph<Real>::Id PitchModel<Real>::forward(ad::Graph<Real>& g,
                                                       std::span<const float> frames, int n_frames) {
    if (int(frames.size()) != n_frames * input_bins_)
        throw ShapeError("model.forward: " + std::to_string(frames.size()) + " values for " +
                         std::to_string(n_frames) + " frames of " + std::to_string(input_bins_));
    std::vector<Real> input(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!std::isfinite(frames[i]))
            throw NumericError("model.forward: non-finite input at index " + std::to_string(i));
        input[i] = Real(frames[i]);
    }
    const auto x = g.constant(ad::make_shape(n_frames, 1, input_bins_), std::span<const Real>(input));
    return forward_node(g, x);
}

template <typename Real>
typename ad::Graph<Real>::Id PitchModel<Real>::forward_node(ad::Graph<Real>& g,
                                                            typename ad::Graph<Real>::Id x) {
    using ad::PadMode;
    auto conv = [&](typename ad::Graph<Real>::Id in, const std::string& base, int stride, int groups,
                    PadMode mode) {
        auto w = g.leaf(p(base + ".w"));
        auto b = g.leaf(p(base + ".b"));
        const int pad = (p(base + ".w").shape.d[2] - 1) / 2;
        return g.conv1d(in, w, b, stride, pad, groups, mode);
    };
    auto norm = [&](typename ad::Graph<Real>::Id in, const std::string& base) {
        auto gm = g.leaf(p(base + ".g"));
        auto bt = g.leaf(p(base + ".b"));
        return g.channel_norm(in, gm, bt, Real(kNormEps));
    };

    // Replicate padding everywhere in the encoder: constant frames stay
    // constant along frequency, which keeps silent-input predictions exactly
    // uniform after the circular head.
    auto h = conv(x, "stem", 1, 1, PadMode::kReplicate);
    h = g.relu(norm(h, "stem.norm"));

    for (int s = 0; s < 3; ++s) {
        for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
            const std::string base = "stage" + std::to_string(s) + ".block" + std::to_string(b);
            const int stride = b == 0 ? cfg_.stage_strides[std::size_t(s)] : 1;
            auto y = conv(h, base + ".conv1", stride, cfg_.groups, PadMode::kReplicate);
            y = g.relu(norm(y, base + ".norm1"));
            y = conv(y, base + ".conv2", 1, cfg_.groups, PadMode::kReplicate);
            y = norm(y, base + ".norm2");
            auto skip = h;
            bool has_proj = false;
            for (const auto& [n, t] : params_)
                if (n == base + ".proj.w") has_proj = true;
            if (has_proj) skip = conv(h, base + ".proj", stride, 1, PadMode::kReplicate);
            h = g.relu(g.add(y, skip));
        }
    }

    const int len = g.shape(h).d[2];
    if (len != cfg_.output_bins) h = g.upsample_linear(h, (cfg_.output_bins - 1) / (len - 1), cfg_.output_bins);
    return conv(h, "head", 1, 1, PadMode::kCircular);  // (N,1,K) logits
}

template <typename Real>
std::vector<Real> PitchModel<Real>::predict_probs(std::span<const float> frames, int n_frames) {
    ad::Graph<Real> g;
    const auto logits = forward(g, frames, n_frames);
    const auto probs = g.softmax(logits);
    return g.val(probs);
}

template <typename Real>
void PitchModel<Real>::calibrate_head(int offset) {
    ad::Tensor<Real>& head = p("head.w");
    const int C = head.shape.d[1], K = head.shape.d[2];
    if (std::abs(offset) >= K)
        throw RangeError("calibrate_head: |offset| must be < head kernel length " + std::to_string(K));
    if (offset == 0) return;
    std::vector<Real> out(head.v.size());
    for (int c = 0; c < C; ++c) {
        const Real* src = &head.v[std::size_t(c) * K];
        Real* dst = &out[std::size_t(c) * K];
        for (int j = 0; j < K; ++j) {
            int from = (j - offset) % K;
            if (from < 0) from += K;
            dst[j] = src[from];
        }
    }
    head.v = std::move(out);
}

template <typename Real>
std::unique_ptr<PitchModel<Real>> PitchModel<Real>::clone() const {
    auto copy = std::make_unique<PitchModel<Real>>(cfg_, input_bins_);
    for (std::size_t i = 0; i < params_.size(); ++i) copy->params_[i].second->v = params_[i].second->v;
    return copy;
}

template <typename Real>
void PitchModel<Real>::save(Checkpoint& ckpt) const {
    for (const auto& [name, tensor] : params_) ckpt.put(name, *tensor);
}

template <typename Real>
void PitchModel<Real>::load(const Checkpoint& ckpt) {
    for (auto& [name, tensor] : params_) ckpt.get(name, *tensor);
}

// ---------------------------------------------------------------------------
// decoding and calibration
// ---------------------------------------------------------------------------

namespace {

template <typename T>
PitchEstimate decode_impl(std::span<const T> probs, const CqtConfig& cqt) {
    const int K = int(probs.size());
    if (K != cqt.n_bins)
        throw ShapeError("decode_pitch: " + std::to_string(K) + " probabilities for " +
                         std::to_string(cqt.n_bins) + " bins");
    int k_star = 0;
    for (int k = 1; k < K; ++k)
        if (probs[std::size_t(k)] > probs[std::size_t(k_star)]) k_star = k;
    const int lo = std::max(0, k_star - 4), hi = std::min(K - 1, k_star + 4);
    double num = 0.0, den = 0.0;
    for (int j = lo; j <= hi; ++j) {
        num += double(probs[std::size_t(j)]) * j;
        den += double(probs[std::size_t(j)]);
    }
    PitchEstimate est;
    est.bin = den > 0.0 ? num / den : double(k_star);
    est.f0_hz = bin_to_hz(cqt, est.bin);
    est.confidence = double(probs[std::size_t(k_star)]);
    return est;
}

}  // namespace

PitchEstimate decode_pitch(std::span<const float> probs, const CqtConfig& cqt) {
    return decode_impl(probs, cqt);
}
PitchEstimate decode_pitch(std::span<const double> probs, const CqtConfig& cqt) {
    return decode_impl(probs, cqt);
}

template <typename Real>
int estimate_bin_offset(PitchModel<Real>& model, const CqtEngine& engine,
                        std::span<const int> probe_bins) {
    const CqtConfig& cqt = engine.config();
    const int K = cqt.n_bins;
    std::vector<int> offsets;
    for (const int k : probe_bins) {
        const double f = bin_to_hz_checked(cqt, k);
        AudioClip tone;
        tone.samples.resize(std::size_t(engine.longest_kernel() + 4 * cqt.hop));
        for (std::size_t t = 0; t < tone.samples.size(); ++t)
            tone.samples[t] = float(0.5 * std::sin(2.0 * std::numbers::pi * f * double(t) / cqt.sample_rate));
        const std::vector<float> frame =
            engine.frame_at(tone, std::int64_t(tone.samples.size() / 2));
        const std::vector<Real> probs = model.predict_probs(frame, 1);
        int arg = 0;
        for (int j = 1; j < K; ++j)
            if (probs[std::size_t(j)] > probs[std::size_t(arg)]) arg = j;
        int off = arg - k;
        while (off >= K / 2) off -= K;
        while (off < -K / 2) off += K;
        offsets.push_back(off);
    }
    std::sort(offsets.begin(), offsets.end());
    return offsets[offsets.size() / 2];  // median
}

template <typename Real>
int self_calibrate(PitchModel<Real>& model, const CqtEngine& engine, int max_rounds) {
    // probe bins spread over the mid register, clear of the CQT edges
    static const std::vector<int> probes = {90, 110, 130, 150, 170, 190, 210};
    const int max_shift = model.config().head_kernel - 1;
    int total = 0;
    for (int round = 0; round < max_rounds; ++round) {
        const int off = estimate_bin_offset(model, engine, probes);
        if (off == 0) break;
        int applied = std::clamp(off, -max_shift, max_shift);
        model.calibrate_head(applied);
        total += applied;
    }
    return total;
}

template class PitchModel<float>;
template class PitchModel<double>;
template int estimate_bin_offset<float>(PitchModel<float>&, const CqtEngine&, std::span<const int>);
template int estimate_bin_offset<double>(PitchModel<double>&, const CqtEngine&, std::span<const int>);
template int self_calibrate<float>(PitchModel<float>&, const CqtEngine&, int);
template int self_calibrate<double>(PitchModel<double>&, const CqtEngine&, int);

}  // namespace selfpitch
