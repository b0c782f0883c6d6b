// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/f0track.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "selfpitch/common.hpp"

namespace selfpitch {

namespace {
constexpr double kF0Min = 27.5;
constexpr double kF0Max = 4900.0;
}  // namespace

void F0Track::validate() const {
    if (hop <= 0) throw RangeError("hop must be positive, got " + std::to_string(hop));
    int prev = -1;
    for (const auto& e : entries) {
        if (e.frame <= prev)
            throw FormatError("frame indices not strictly increasing at frame " +
                              std::to_string(e.frame));
        prev = e.frame;
        if (e.voiced != 0 && e.voiced != 1)
            throw FormatError("voiced must be 0 or 1 at frame " + std::to_string(e.frame));
        if ((e.f0_hz == 0.0) != (e.voiced == 0))
            throw FormatError("consistency: f0_hz == 0 iff voiced == 0 violated at frame " +
                              std::to_string(e.frame));
        if (e.voiced == 1 && (e.f0_hz < kF0Min || e.f0_hz > kF0Max))
            throw RangeError("voiced f0_hz " + std::to_string(e.f0_hz) +
                             " outside [27.5, 4900] at frame " + std::to_string(e.frame));
        if (!std::isfinite(e.f0_hz))
            throw NumericError("non-finite f0_hz at frame " + std::to_string(e.frame));
    }
}

void write_annotation(const std::string& path, const F0Track& track) {
    track.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "frame,f0_hz,voiced\n";
    char buf[64];
    for (const auto& e : track.entries) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%d\n", e.frame, e.f0_hz, e.voiced);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

F0Track read_annotation(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty annotation file: " + path);
    // tolerate a trailing \r from files written on other platforms
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "frame,f0_hz,voiced")
        throw FormatError("annotation header: expected 'frame,f0_hz,voiced', got '" + line + "'");

    F0Track track;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        F0Entry e;
        char extra = 0;
        const int got = std::sscanf(line.c_str(), "%d,%lf,%d%c", &e.frame, &e.f0_hz, &e.voiced, &extra);
        if (got != 3)
            throw FormatError("annotation line " + std::to_string(lineno) + ": cannot parse '" +
                              line + "'");
        track.entries.push_back(e);
    }
    track.validate();
    return track;
}

}  // namespace selfpitch
