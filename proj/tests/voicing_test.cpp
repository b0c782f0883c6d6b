// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/voicing.hpp"

#include <cmath>

#include "doctest.h"
#include "selfpitch/common.hpp"

using namespace selfpitch;

namespace {

// two well-separated Gaussian clusters over a handful of bins
TrainDataset cluster_dataset(int n_per_class, int bins, std::uint64_t seed, double gap = 6.0) {
    TrainDataset data;
    data.bins = bins;
    data.clip_names = {"synthetic"};
    Rng rng(seed);
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const bool voiced = i % 2 == 1;
        data.keys.push_back(FrameKey{0, i});
        for (int k = 0; k < bins; ++k) {
            const double centre = voiced ? gap : -gap;
            data.frames.push_back(float(centre + rng.normal(0.0, 1.0)));
        }
    }
    return data;
}

PseudoLabelSet alternating_labels(int n_per_class) {
    SampleWeightTable table;
    table.init(2 * n_per_class);
    for (int i = 0; i < 2 * n_per_class; ++i) table.weights[std::size_t(i)] = i % 2 == 1 ? 0.95 : 0.05;
    return pseudo_labels(table, 0.5);
}

}  // namespace

TEST_CASE("pseudo_labels thresholding is strict") {
    SampleWeightTable table;
    table.init(3);
    table.weights = {0.7, 0.5, 0.2};
    const PseudoLabelSet set = pseudo_labels(table, 0.5);
    CHECK(set.labels[0] == 1);
    CHECK(set.labels[1] == 0);  // w == theta -> 0
    CHECK(set.labels[2] == 0);
    CHECK(set.n_voiced == 1);
    CHECK(set.n_unvoiced == 2);
}

TEST_CASE("pseudo_labels: all-zero table flags degeneracy") {
    SampleWeightTable table;
    table.init(4);
    std::fill(table.weights.begin(), table.weights.end(), 0.0);
    const PseudoLabelSet set = pseudo_labels(table, 0.5);
    CHECK(set.degenerate);
    for (const int v : set.labels) CHECK(v == 0);
}

TEST_CASE("pseudo_labels rejects theta outside (0,1)") {
    SampleWeightTable table;
    table.init(1);
    CHECK_THROWS_AS(pseudo_labels(table, 0.0), RangeError);
    CHECK_THROWS_AS(pseudo_labels(table, 1.0), RangeError);
}

TEST_CASE("linearly separable clusters reach training accuracy 1.0") {
    const int n = 40, bins = 12;
    const TrainDataset data = cluster_dataset(n, bins, 31);
    const PseudoLabelSet labels = alternating_labels(n);
    const VoicingClassifier clf = train_voicing(data, labels);
    int correct = 0;
    for (int i = 0; i < data.n(); ++i) {
        const auto [p, flag] = predict_voicing(clf, data.frame(i));
        if (int(flag) == labels.labels[std::size_t(i)]) ++correct;
    }
    CHECK(correct == data.n());
}

TEST_CASE("flipping every label flips decisions but keeps accuracy") {
    const int n = 30, bins = 8;
    const TrainDataset data = cluster_dataset(n, bins, 32);
    PseudoLabelSet labels = alternating_labels(n);
    const VoicingClassifier a = train_voicing(data, labels);
    PseudoLabelSet flipped = labels;
    for (auto& v : flipped.labels) v = 1 - v;
    std::swap(flipped.n_voiced, flipped.n_unvoiced);
    const VoicingClassifier b = train_voicing(data, flipped);
    int agree_flipped = 0;
    for (int i = 0; i < data.n(); ++i) {
        const auto [pa, fa] = predict_voicing(a, data.frame(i));
        const auto [pb, fb] = predict_voicing(b, data.frame(i));
        if (fa != fb) ++agree_flipped;
        CHECK(pa + pb == doctest::Approx(1.0).epsilon(0.05));  // logits approximately negated
    }
    CHECK(agree_flipped == data.n());
}

TEST_CASE("duplicating every frame leaves the classifier unchanged") {
    const int n = 25, bins = 10;
    const TrainDataset data = cluster_dataset(n, bins, 33);
    const PseudoLabelSet labels = alternating_labels(n);
    const VoicingClassifier a = train_voicing(data, labels);

    TrainDataset doubled = data;
    for (int i = 0; i < data.n(); ++i) {
        doubled.keys.push_back(FrameKey{0, data.n() + i});
        const auto row = data.frame(i);
        doubled.frames.insert(doubled.frames.end(), row.begin(), row.end());
    }
    PseudoLabelSet dl;
    dl.labels = labels.labels;
    dl.labels.insert(dl.labels.end(), labels.labels.begin(), labels.labels.end());
    dl.weights.assign(dl.labels.size(), 0.5);
    dl.n_voiced = 2 * labels.n_voiced;
    dl.n_unvoiced = 2 * labels.n_unvoiced;
    const VoicingClassifier b = train_voicing(doubled, dl);
    for (std::size_t k = 0; k < a.w.size(); ++k)
        CHECK(a.w[k] == doctest::Approx(b.w[k]).epsilon(1e-6));
    CHECK(a.b == doctest::Approx(b.b).epsilon(1e-6));
}

TEST_CASE("single-class labels raise a class-balance error") {
    const TrainDataset data = cluster_dataset(5, 6, 34);
    PseudoLabelSet labels;
    labels.labels.assign(std::size_t(data.n()), 1);
    labels.weights.assign(std::size_t(data.n()), 0.9);
    labels.n_voiced = data.n();
    labels.n_unvoiced = 0;
    CHECK_THROWS_WITH_AS(train_voicing(data, labels), doctest::Contains("class balance"), RangeError);
}

TEST_CASE("zero weights and bias predict exactly 0.5") {
    VoicingClassifier clf;
    clf.w.assign(16, 0.0);
    clf.b = 0.0;
    std::vector<float> frame(16, 3.0f);
    const auto [p, flag] = predict_voicing(clf, frame);
    CHECK(p == 0.5);
    CHECK_FALSE(flag);
}

TEST_CASE("large logits saturate without NaN") {
    VoicingClassifier clf;
    clf.w.assign(4, 500.0);
    clf.b = 100.0;
    std::vector<float> frame(4, 10.0f);
    const auto [p, flag] = predict_voicing(clf, frame);
    CHECK(std::isfinite(p));
    CHECK(p <= 1.0);
    CHECK(p > 0.999);
    CHECK(flag);
    clf.w.assign(4, -500.0);
    const auto [p2, flag2] = predict_voicing(clf, frame);
    CHECK(std::isfinite(p2));
    CHECK(p2 >= 0.0);
    CHECK_FALSE(flag2);
}

TEST_CASE("prediction is scale-monotone in the logit") {
    VoicingClassifier clf;
    clf.w = {1.0, 1.0};
    clf.b = 0.0;
    double prev = 0.0;
    for (const float x : {-2.0f, -1.0f, 0.0f, 1.0f, 2.0f}) {
        std::vector<float> frame{x, x};
        const auto [p, flag] = predict_voicing(clf, frame);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("frame length mismatch raises a shape error") {
    VoicingClassifier clf;
    clf.w.assign(8, 0.1);
    std::vector<float> frame(7, 0.0f);
    CHECK_THROWS_AS(predict_voicing(clf, frame), ShapeError);
}

TEST_CASE("voicing classifier round-trips through the checkpoint") {
    VoicingClassifier clf;
    clf.w = {0.5, -1.5, 2.0};
    clf.b = 0.75;
    Checkpoint ckpt;
    clf.save(ckpt);
    VoicingClassifier back;
    back.load(ckpt);
    REQUIRE(back.w.size() == clf.w.size());
    for (std::size_t i = 0; i < clf.w.size(); ++i)
        CHECK(back.w[i] == doctest::Approx(clf.w[i]).epsilon(1e-6));
    CHECK(back.b == doctest::Approx(clf.b).epsilon(1e-6));
}

TEST_CASE("voicing_f1 basics") {
    const std::vector<int> truth{1, 1, 0, 0, 1};
    CHECK(voicing_f1(truth, truth) == 1.0);
    const std::vector<int> none{0, 0, 0, 0, 0};
    CHECK(voicing_f1(none, truth) == 0.0);
    const std::vector<int> pred{1, 0, 0, 1, 1};  // tp=2 fp=1 fn=1
    CHECK(voicing_f1(pred, truth) == doctest::Approx(2.0 * (2.0 / 3.0) * (2.0 / 3.0) / (4.0 / 3.0)));
}
