// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/losses.hpp"

#include <algorithm>
#include <cmath>

#include "selfpitch/common.hpp"

namespace selfpitch {

template <typename Real>
typename ad::Graph<Real>::Id scalar_pitch(ad::Graph<Real>& g, typename ad::Graph<Real>::Id probs,
                                          double alpha) {
    if (!(alpha > 1.0)) throw RangeError("scalar_pitch: alpha must be > 1");
    const ad::Shape s = g.shape(probs);
    const int rows = s.rows(), K = s.last();
    std::vector<Real> weights(std::size_t(rows) * K);
    for (int k = 0; k < K; ++k) weights[std::size_t(k)] = Real(std::pow(alpha, double(k)));
    for (int r = 1; r < rows; ++r)
        std::copy(weights.begin(), weights.begin() + K, weights.begin() + std::size_t(r) * K);
    const auto w = g.constant(s, std::span<const Real>(weights));
    return g.sum_rows(g.mul(probs, w));
}

namespace {

// roll each row of `vals` by its per-row delta (plain-array detach helper)
template <typename Real>
std::vector<Real> roll_values(const std::vector<Real>& vals, int rows, int K,
                              std::span<const int> deltas, int sign) {
    std::vector<Real> out(vals.size());
    for (int r = 0; r < rows; ++r) {
        const Real* src = &vals[std::size_t(r) * K];
        Real* dst = &out[std::size_t(r) * K];
        const int d = sign * deltas[std::size_t(r)];
        for (int k = 0; k < K; ++k) {
            int from = (k - d) % K;
            if (from < 0) from += K;
            dst[k] = src[from];
        }
    }
    return out;
}

}  // namespace

template <typename Real>
PairLossNodes<Real> pair_losses(ad::Graph<Real>& g, typename ad::Graph<Real>::Id y,
                                typename ad::Graph<Real>::Id y2, std::span<const int> deltas,
                                const LossConfig& cfg) {
    const ad::Shape sy = g.shape(y);
    if (!(sy == g.shape(y2)))
        throw ShapeError("pair_losses: logit shapes " + sy.str() + " vs " + g.shape(y2).str());
    const int rows = sy.rows(), K = sy.last();
    if (int(deltas.size()) != rows)
        throw ShapeError("pair_losses: " + std::to_string(deltas.size()) + " deltas for " +
                         std::to_string(rows) + " samples");

    const auto p = g.softmax(y);
    const auto p2 = g.softmax(y2);

    // ----- equivariance: 0.5 [ H(z'/z - a^d) + H(z/z' - a^-d) ] -----------
    const auto z = scalar_pitch(g, p, cfg.alpha);
    const auto z2 = scalar_pitch(g, p2, cfg.alpha);
    for (const Real v : g.val(z))
        if (!(double(v) > cfg.eps)) throw NumericError("loss_equiv: z below eps guard");
    for (const Real v : g.val(z2))
        if (!(double(v) > cfg.eps)) throw NumericError("loss_equiv: z' below eps guard");
    std::vector<Real> apos(static_cast<std::size_t>(rows), Real(0)), aneg(static_cast<std::size_t>(rows), Real(0));
    for (int r = 0; r < rows; ++r) {
        apos[std::size_t(r)] = Real(-std::pow(cfg.alpha, double(deltas[std::size_t(r)])));
        aneg[std::size_t(r)] = Real(-std::pow(cfg.alpha, -double(deltas[std::size_t(r)])));
    }
    const auto r1 = g.add(g.div(z2, z), g.constant(ad::make_shape(rows), std::span<const Real>(apos)));
    const auto r2 = g.add(g.div(z, z2), g.constant(ad::make_shape(rows), std::span<const Real>(aneg)));
    const auto equiv = g.affine(g.add(g.huber(r1, Real(cfg.huber_delta)), g.huber(r2, Real(cfg.huber_delta))),
                                Real(0.5), Real(0));

    // ----- invariance: 0.5 [ CE(y, detach p') + CE(y2, detach p) ] ---------
    const auto tgt_p2 = g.constant(sy, std::span<const Real>(g.val(p2)));
    const auto tgt_p = g.constant(sy, std::span<const Real>(g.val(p)));
    const auto invar =
        g.affine(g.add(g.cross_entropy(y, tgt_p2), g.cross_entropy(y2, tgt_p)), Real(0.5), Real(0));

    // ----- shift cross-entropy: 0.5 [ CE(y2, roll(p,d)) + CE(y, roll(p2,-d)) ]
    const std::vector<Real> rolled_p = roll_values(g.val(p), rows, K, deltas, +1);
    const std::vector<Real> rolled_p2 = roll_values(g.val(p2), rows, K, deltas, -1);
    const auto tgt_rp = g.constant(sy, std::span<const Real>(rolled_p));
    const auto tgt_rp2 = g.constant(sy, std::span<const Real>(rolled_p2));
    const auto sce =
        g.affine(g.add(g.cross_entropy(y2, tgt_rp), g.cross_entropy(y, tgt_rp2)), Real(0.5), Real(0));

    PairLossNodes<Real> out;
    out.equiv = equiv;
    out.invar = invar;
    out.sce = sce;
    return out;
}

template <typename Real>
typename ad::Graph<Real>::Id total_loss(ad::Graph<Real>& g, const PairLossNodes<Real>& losses,
                                        std::span<const Real> weights, int normalizer) {
    const int n = g.shape(losses.equiv).numel();
    if (int(weights.size()) != n)
        throw ShapeError("total_loss: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(n) + " samples");
    for (const Real w : weights)
        if (w < Real(0) || w > Real(1))
            throw RangeError("total_loss: weight " + std::to_string(double(w)) + " outside [0,1]");
    const int norm = normalizer < 0 ? n : normalizer;
    const auto w = g.constant(ad::make_shape(n), weights);
    const auto per_sample = g.add(g.add(losses.equiv, losses.invar), losses.sce);
    return g.affine(g.sum(g.mul(per_sample, w)), Real(1.0 / double(norm)), Real(0));
}

// ---------------------------------------------------------------------------
// plain-value forms
// ---------------------------------------------------------------------------

std::vector<double> softmax_values(std::span<const double> y) {
    std::vector<double> p(y.size());
    double mx = y[0];
    for (const double v : y) mx = std::max(mx, v);
    double den = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        p[i] = std::exp(y[i] - mx);
        den += p[i];
    }
    for (double& v : p) v /= den;
    return p;
}

double scalar_pitch_value(std::span<const double> p, double alpha) {
    double z = 0;
    for (std::size_t k = 0; k < p.size(); ++k) z += std::pow(alpha, double(k)) * p[k];
    return z;
}

namespace {

double huber_value(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double ce_value(std::span<const double> y, std::span<const double> q) {
    double mx = y[0];
    for (const double v : y) mx = std::max(mx, v);
    double den = 0;
    for (const double v : y) den += std::exp(v - mx);
    const double lse = mx + std::log(den);
    double ce = 0;
    for (std::size_t k = 0; k < y.size(); ++k) ce += q[k] * (lse - y[k]);
    return ce;
}

std::vector<double> roll_value(std::span<const double> x, int delta) {
    const int K = int(x.size());
    std::vector<double> out(x.size());
    for (int k = 0; k < K; ++k) {
        int from = (k - delta) % K;
        if (from < 0) from += K;
        out[std::size_t(k)] = x[std::size_t(from)];
    }
    return out;
}

}  // namespace

double loss_equiv_value(std::span<const double> p, std::span<const double> p2, int delta,
                        const LossConfig& cfg) {
    const double z = scalar_pitch_value(p, cfg.alpha);
    const double z2 = scalar_pitch_value(p2, cfg.alpha);
    if (!(z > cfg.eps) || !(z2 > cfg.eps)) throw NumericError("loss_equiv: z below eps guard");
    const double ad = std::pow(cfg.alpha, double(delta));
    return 0.5 * (huber_value(z2 / z - ad, cfg.huber_delta) +
                  huber_value(z / z2 - 1.0 / ad, cfg.huber_delta));
}

double loss_invar_value(std::span<const double> y, std::span<const double> y2) {
    const std::vector<double> p = softmax_values(y);
    const std::vector<double> p2 = softmax_values(y2);
    return 0.5 * (ce_value(y, p2) + ce_value(y2, p));
}

double loss_sce_value(std::span<const double> y, std::span<const double> y2, int delta) {
    const std::vector<double> p = softmax_values(y);
    const std::vector<double> p2 = softmax_values(y2);
    const std::vector<double> rp = roll_value(p, delta);
    const std::vector<double> rp2 = roll_value(p2, -delta);
    return 0.5 * (ce_value(y2, rp) + ce_value(y, rp2));
}

template typename ad::Graph<float>::Id scalar_pitch<float>(ad::Graph<float>&, int, double);
template typename ad::Graph<double>::Id scalar_pitch<double>(ad::Graph<double>&, int, double);
template PairLossNodes<float> pair_losses<float>(ad::Graph<float>&, int, int, std::span<const int>,
                                                 const LossConfig&);
template PairLossNodes<double> pair_losses<double>(ad::Graph<double>&, int, int, std::span<const int>,
                                                   const LossConfig&);
template typename ad::Graph<float>::Id total_loss<float>(ad::Graph<float>&, const PairLossNodes<float>&,
                                                         std::span<const float>, int);
template typename ad::Graph<double>::Id total_loss<double>(ad::Graph<double>&,
                                                           const PairLossNodes<double>&,
                                                           std::span<const double>, int);

}  // namespace selfpitch
