// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/audio.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "selfpitch/binio.hpp"
#include "selfpitch/common.hpp"
#include "selfpitch/f0track.hpp"

using namespace selfpitch;

namespace {
std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("wav round-trip: zeros come back exactly") {
    AudioClip clip;
    clip.samples.assign(16000, 0.0f);
    const std::string path = tmp_path("sp_zeros.wav");
    write_wav(path, clip);
    const AudioClip back = read_wav(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (const float s : back.samples) CHECK(s == 0.0f);
}

TEST_CASE("wav round-trip: full-scale sine within one quantization step") {
    AudioClip clip;
    clip.samples.resize(16000);
    for (std::size_t t = 0; t < clip.samples.size(); ++t)
        clip.samples[t] = float(std::sin(2.0 * std::numbers::pi * 440.0 * double(t) / 16000.0));
    const std::string path = tmp_path("sp_sine.wav");
    write_wav(path, clip);
    const AudioClip back = read_wav(path);
    REQUIRE(back.samples.size() == clip.samples.size());
    float max_err = 0.0f;
    for (std::size_t t = 0; t < clip.samples.size(); ++t)
        max_err = std::max(max_err, std::abs(back.samples[t] - clip.samples[t]));
    CHECK(max_err <= 1.0f / 32768.0f);
}

TEST_CASE("wav reader: wrong sample rate is named in the error") {
    // hand-write a 44.1 kHz mono 16-bit header
    const std::string path = tmp_path("sp_441.wav");
    {
        binio::Writer w(path);
        w.tag("RIFF");
        w.u32(36 + 4);
        w.tag("WAVE");
        w.tag("fmt ");
        w.u32(16);
        w.u16(1);
        w.u16(1);
        w.u32(44100);
        w.u32(44100 * 2);
        w.u16(2);
        w.u16(16);
        w.tag("data");
        w.u32(4);
        w.i16(0);
        w.i16(0);
    }
    CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("sample_rate"), FormatError);
}

TEST_CASE("wav reader: stereo and 8-bit are rejected with the field named") {
    const std::string path = tmp_path("sp_stereo.wav");
    {
        binio::Writer w(path);
        w.tag("RIFF");
        w.u32(36 + 4);
        w.tag("WAVE");
        w.tag("fmt ");
        w.u32(16);
        w.u16(1);
        w.u16(2);  // stereo
        w.u32(16000);
        w.u32(16000 * 4);
        w.u16(4);
        w.u16(16);
        w.tag("data");
        w.u32(4);
        w.i16(0);
        w.i16(0);
    }
    CHECK_THROWS_WITH_AS(read_wav(path), doctest::Contains("channels"), FormatError);
}

TEST_CASE("annotation round-trip and consistency checks") {
    F0Track track;
    track.entries = {{0, 440.0, 1}, {1, 0.0, 0}, {2, 432.123456, 1}};
    const std::string path = tmp_path("sp_track.csv");
    write_annotation(path, track);
    const F0Track back = read_annotation(path);
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[0].f0_hz == doctest::Approx(440.0).epsilon(1e-12));
    CHECK(back.entries[2].f0_hz == doctest::Approx(432.123456).epsilon(1e-12));
    CHECK(back.entries[1].voiced == 0);
}

TEST_CASE("annotation: empty track writes a header-only file") {
    F0Track track;
    const std::string path = tmp_path("sp_empty.csv");
    write_annotation(path, track);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "frame,f0_hz,voiced");
    CHECK_FALSE(std::getline(in, line));
    CHECK(read_annotation(path).entries.empty());
}

TEST_CASE("annotation: voiced row with zero f0 is a consistency error") {
    const std::string path = tmp_path("sp_bad.csv");
    {
        std::ofstream out(path);
        out << "frame,f0_hz,voiced\n5,0.000000,1\n";
    }
    CHECK_THROWS_WITH_AS(read_annotation(path), doctest::Contains("consistency"), FormatError);
}

TEST_CASE("annotation: non-increasing frames rejected") {
    F0Track track;
    track.entries = {{3, 440.0, 1}, {3, 440.0, 1}};
    CHECK_THROWS_AS(track.validate(), FormatError);
}
