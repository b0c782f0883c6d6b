// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/voicing.hpp"

#include <cmath>

#include "selfpitch/adam.hpp"

namespace selfpitch {

void VoicingClassifier::save(Checkpoint& ckpt) const {
    ad::Tensor<double> wt(ad::make_shape(int(w.size())));
    wt.v = w;
    ckpt.put("voicing.w", wt);
    ad::Tensor<double> bt(ad::make_shape(1));
    bt.v = {b};
    ckpt.put("voicing.b", bt);
}

void VoicingClassifier::load(const Checkpoint& ckpt) {
    const auto it = ckpt.tensors.find("voicing.w");
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint: missing tensor 'voicing.w'");
    const int bins = it->second.first.numel();
    ad::Tensor<double> wt(ad::make_shape(bins));
    ckpt.get("voicing.w", wt);
    w = wt.v;
    ad::Tensor<double> bt(ad::make_shape(1));
    ckpt.get("voicing.b", bt);
    b = bt.v[0];
}

PseudoLabelSet pseudo_labels(const SampleWeightTable& table, double theta) {
    if (!(theta > 0.0) || !(theta < 1.0))
        throw RangeError("pseudo_labels: theta " + std::to_string(theta) + " outside (0, 1)");
    PseudoLabelSet out;
    out.labels.reserve(table.weights.size());
    out.weights = table.weights;
    for (const double w : table.weights) {
        const int v = w > theta ? 1 : 0;
        out.labels.push_back(v);
        if (v) ++out.n_voiced;
        else ++out.n_unvoiced;
    }
    out.degenerate = out.n_voiced == 0 || out.n_unvoiced == 0;
    return out;
}

VoicingClassifier train_voicing(const TrainDataset& data, const PseudoLabelSet& labels,
                                const VoicingTrainConfig& cfg) {
    const int n = data.n();
    if (int(labels.labels.size()) != n)
        throw ShapeError("train_voicing: " + std::to_string(labels.labels.size()) + " labels for " +
                         std::to_string(n) + " frames");
    if (labels.n_voiced == 0 || labels.n_unvoiced == 0)
        throw RangeError("train_voicing: class balance: need at least one frame of each class (" +
                         std::to_string(labels.n_voiced) + " voiced, " +
                         std::to_string(labels.n_unvoiced) + " unvoiced)");
    const int B = data.bins;

    // BCE-with-logits: loss_i = softplus(z_i) - v_i * z_i, optionally
    // inverse-frequency weighted so the skewed voiced class cannot dominate
    std::vector<double> X(std::size_t(n) * B);
    for (int i = 0; i < n; ++i) {
        const auto row = data.frame(i);
        for (int k = 0; k < B; ++k) X[std::size_t(i) * B + k] = double(row[std::size_t(k)]);
    }
    std::vector<double> neg_v(static_cast<std::size_t>(n), 0.0);
    std::vector<double> cw(static_cast<std::size_t>(n), 0.0);
    const double w_pos = cfg.class_balance ? double(n) / (2.0 * double(labels.n_voiced)) : 1.0;
    const double w_neg = cfg.class_balance ? double(n) / (2.0 * double(labels.n_unvoiced)) : 1.0;
    for (int i = 0; i < n; ++i) {
        neg_v[std::size_t(i)] = -double(labels.labels[std::size_t(i)]);
        cw[std::size_t(i)] = labels.labels[std::size_t(i)] ? w_pos : w_neg;
    }

    ad::Tensor<double> w_param(ad::make_shape(B, 1));
    ad::Tensor<double> b_param(ad::make_shape(1));
    std::vector<ad::Tensor<double>*> params{&w_param, &b_param};
    ad::AdamState<double> adam(cfg.lr);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ad::Graph<double> g;
        const auto xn = g.constant(ad::make_shape(n, B), std::span<const double>(X));
        const auto z = g.add(g.matmul(xn, g.leaf(w_param)), g.leaf(b_param));  // (n,1)
        const auto vz = g.mul(z, g.constant(ad::make_shape(n, 1), std::span<const double>(neg_v)));
        const auto per = g.add(g.softplus(z), vz);
        const auto weighted = g.mul(per, g.constant(ad::make_shape(n, 1), std::span<const double>(cw)));
        g.backward(g.mean(weighted));
        adam.step(params);
    }

    VoicingClassifier clf;
    clf.w = w_param.v;
    clf.b = b_param.v[0];
    return clf;
}

std::pair<double, bool> predict_voicing(const VoicingClassifier& clf, std::span<const float> frame) {
    if (int(frame.size()) != clf.bins())
        throw ShapeError("predict_voicing: frame length " + std::to_string(frame.size()) +
                         " != classifier bins " + std::to_string(clf.bins()));
    double z = clf.b;
    for (std::size_t k = 0; k < frame.size(); ++k) z += clf.w[k] * double(frame[k]);
    double p;
    if (z >= 0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    return {p, p > 0.5};
}

double voicing_f1(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size())
        throw ShapeError("voicing_f1: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " truths");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] && truth[i]) ++tp;
        else if (predicted[i] && !truth[i]) ++fp;
        else if (!predicted[i] && truth[i]) ++fn;
    }
    if (tp == 0) return 0.0;
    const double precision = double(tp) / double(tp + fp);
    const double recall = double(tp) / double(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace selfpitch
