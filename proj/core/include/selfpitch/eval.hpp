// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "selfpitch/cqt.hpp"
#include "selfpitch/f0track.hpp"

namespace selfpitch {

struct PitchMetrics {
    double rpa = 0.0;  // percent
    double rca = 0.0;  // percent
    long voiced_frames = 0;
    double threshold_cents = 50.0;
};

/// Raw pitch / chroma accuracy over reference-voiced frames. Estimated
/// voicing does not gate the metrics; an unvoiced estimate (f0 = 0) on a
/// reference-voiced frame simply counts as a miss. Both tracks must share
/// the hop and cover every reference-voiced frame index.
PitchMetrics rpa_rca(const F0Track& est, const F0Track& ref, double threshold_cents = 50.0);

struct WeightHistogram {
    std::vector<long> counts;  // equal-width bins over [0, 1]
    long total = 0;
    double bimodality = 0.0;   // fraction of mass with w > 0.8 or w < 0.2
};

WeightHistogram weight_histogram(std::span<const double> weights, int n_bins = 20);

void save_weight_histogram_csv(const std::string& path, const WeightHistogram& hist);

/// 8-bit PGM of the spectrogram (low bins at the bottom) with the estimated
/// F0 path burned in black, plus a companion CSV `frame,f0,w,v`.
void export_overlay(const CqtSpectrogram& spec, const F0Track& est, std::span<const double> weights,
                    const std::string& pgm_path, const std::string& csv_path);

}  // namespace selfpitch
