// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "selfpitch/common.hpp"

namespace selfpitch {

PitchMetrics rpa_rca(const F0Track& est, const F0Track& ref, double threshold_cents) {
    if (est.hop != ref.hop)
        throw ShapeError("rpa_rca: hop mismatch (est " + std::to_string(est.hop) + ", ref " +
                         std::to_string(ref.hop) + ")");
    if (!(threshold_cents > 0)) throw RangeError("rpa_rca: threshold must be positive");

    std::unordered_map<int, const F0Entry*> by_frame;
    by_frame.reserve(est.entries.size());
    for (const F0Entry& e : est.entries) by_frame[e.frame] = &e;

    long voiced = 0, rpa_hits = 0, rca_hits = 0;
    for (const F0Entry& r : ref.entries) {
        if (!r.voiced) continue;
        ++voiced;
        const auto it = by_frame.find(r.frame);
        if (it == by_frame.end())
            throw ShapeError("rpa_rca: estimate missing frame " + std::to_string(r.frame));
        const double est_f0 = it->second->f0_hz;
        if (!(est_f0 > 0)) continue;  // unvoiced estimate on a voiced frame: miss
        const double cents = 1200.0 * std::log2(est_f0 / r.f0_hz);
        if (std::abs(cents) <= threshold_cents) ++rpa_hits;
        const double chroma = cents - 1200.0 * std::round(cents / 1200.0);
        if (std::abs(chroma) <= threshold_cents) ++rca_hits;
    }
    if (voiced == 0) throw RangeError("rpa_rca: undefined metric, no reference-voiced frames");

    PitchMetrics m;
    m.voiced_frames = voiced;
    m.threshold_cents = threshold_cents;
    m.rpa = 100.0 * double(rpa_hits) / double(voiced);
    m.rca = 100.0 * double(rca_hits) / double(voiced);
    return m;
}

WeightHistogram weight_histogram(std::span<const double> weights, int n_bins) {
    if (weights.empty()) throw RangeError("weight_histogram: empty table");
    if (n_bins < 2) throw RangeError("weight_histogram: need at least 2 bins");
    WeightHistogram h;
    h.counts.assign(std::size_t(n_bins), 0);
    long tails = 0;
    for (const double w : weights) {
        if (w < 0.0 || w > 1.0)
            throw RangeError("weight_histogram: weight " + std::to_string(w) + " outside [0,1]");
        int idx = int(w * n_bins);
        if (idx >= n_bins) idx = n_bins - 1;
        ++h.counts[std::size_t(idx)];
        if (w > 0.8 || w < 0.2) ++tails;
    }
    h.total = long(weights.size());
    h.bimodality = double(tails) / double(h.total);
    return h;
}

void save_weight_histogram_csv(const std::string& path, const WeightHistogram& hist) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "bin,lo,hi,count\n";
    const int n = int(hist.counts.size());
    char buf[96];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f,%ld\n", i, double(i) / n, double(i + 1) / n,
                      hist.counts[std::size_t(i)]);
        out << buf;
    }
}

void export_overlay(const CqtSpectrogram& spec, const F0Track& est, std::span<const double> weights,
                    const std::string& pgm_path, const std::string& csv_path) {
    if (!est.entries.empty() && est.entries.back().frame >= spec.frames)
        throw ShapeError("export_overlay: track frame " + std::to_string(est.entries.back().frame) +
                         " beyond spectrogram frames " + std::to_string(spec.frames));
    if (!weights.empty() && int(weights.size()) != spec.frames)
        throw ShapeError("export_overlay: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(spec.frames) + " frames");
    if (est.hop != spec.hop) throw ShapeError("export_overlay: hop mismatch");

    // grayscale over the value range, frequency upward
    float lo = spec.values.empty() ? 0.0f : spec.values[0];
    float hi = lo;
    for (const float v : spec.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    std::vector<unsigned char> img(std::size_t(spec.frames) * std::size_t(spec.bins), 0);
    for (int t = 0; t < spec.frames; ++t) {
        const auto row = spec.frame(t);
        for (int b = 0; b < spec.bins; ++b) {
            const int y = spec.bins - 1 - b;
            img[std::size_t(y) * spec.frames + t] =
                (unsigned char)(255.0f * (row[std::size_t(b)] - lo) / range);
        }
    }
    CqtConfig cfg = spec.config;
    cfg.hop = spec.hop;
    for (const F0Entry& e : est.entries) {
        if (!e.voiced || e.frame >= spec.frames) continue;
        const double bin = hz_to_bin(cfg, e.f0_hz);
        const int b = std::clamp(int(std::lround(bin)), 0, spec.bins - 1);
        img[std::size_t(spec.bins - 1 - b) * spec.frames + e.frame] = 0;
    }

    std::ofstream pgm(pgm_path, std::ios::binary);
    if (!pgm) throw IoError("cannot open for writing: " + pgm_path);
    pgm << "P5\n" << spec.frames << " " << spec.bins << "\n255\n";
    pgm.write(reinterpret_cast<const char*>(img.data()), std::streamsize(img.size()));

    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot open for writing: " + csv_path);
    csv << "frame,f0,w,v\n";
    std::unordered_map<int, const F0Entry*> by_frame;
    for (const F0Entry& e : est.entries) by_frame[e.frame] = &e;
    char buf[128];
    for (int t = 0; t < spec.frames; ++t) {
        const auto it = by_frame.find(t);
        const double f0 = it != by_frame.end() ? it->second->f0_hz : 0.0;
        const int v = it != by_frame.end() ? it->second->voiced : 0;
        const double w = weights.empty() ? 1.0 : weights[std::size_t(t)];
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%d\n", t, f0, w, v);
        csv << buf;
    }
}

}  // namespace selfpitch
