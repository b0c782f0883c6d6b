// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace selfpitch {

inline constexpr int kHop = 160;  // frame hop in samples at 16 kHz

/// One frame of a reference or estimated pitch track.
struct F0Entry {
    int frame = 0;       // hop index
    double f0_hz = 0.0;  // 0 exactly when unvoiced
    int voiced = 0;      // 0 or 1
};

/// Framewise (time, f0, voiced) — the evaluation currency. Invariants:
/// f0 == 0 iff voiced == 0; voiced f0 within [27.5, 4900] Hz; frame
/// indices strictly increasing.
struct F0Track {
    int hop = kHop;
    std::vector<F0Entry> entries;

    std::size_t size() const { return entries.size(); }
    void validate() const;  // throws RangeError / FormatError on violations
};

// CSV with header `frame,f0_hz,voiced`; f0 printed at 6 decimals. Round-trip
// is lossless for values already at that precision.
F0Track read_annotation(const std::string& path);
void write_annotation(const std::string& path, const F0Track& track);

}  // namespace selfpitch
