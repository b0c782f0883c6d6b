// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "selfpitch/common.hpp"

// Little-endian binary file helpers shared by the WAV, checkpoint, and
// spectrogram-dump writers. All on-disk formats are little-endian.

namespace selfpitch::binio {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swaps");

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), std::streamsize(n));
        if (!out_) throw IoError("write failed: " + path_);
    }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void i16(std::int16_t v) { bytes(&v, 2); }
    void f32(float v) { bytes(&v, 4); }
    void f32s(const float* p, std::size_t n) { bytes(p, n * 4); }
    void tag(const char (&t)[5]) { bytes(t, 4); }

  private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path);
        path_ = path;
    }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), std::streamsize(n));
        if (std::size_t(in_.gcount()) != n) throw FormatError("truncated file: " + path_);
    }
    std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::int16_t i16() { std::int16_t v; bytes(&v, 2); return v; }
    float f32() { float v; bytes(&v, 4); return v; }
    void f32s(float* p, std::size_t n) { bytes(p, n * 4); }
    std::string tag() { char t[5] = {0}; bytes(t, 4); return std::string(t, 4); }
    void skip(std::size_t n) { in_.seekg(std::streamoff(n), std::ios::cur); }
    bool eof_next() { return in_.peek() == std::char_traits<char>::eof(); }
    const std::string& path() const { return path_; }

  private:
    std::ifstream in_;
    std::string path_;
};

}  // namespace selfpitch::binio
