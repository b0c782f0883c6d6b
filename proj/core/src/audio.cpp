// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/audio.hpp"

#include <algorithm>
#include <cmath>

#include "selfpitch/binio.hpp"
#include "selfpitch/common.hpp"

namespace selfpitch {

void AudioClip::validate() const {
    if (sample_rate != kSampleRate)
        throw FormatError("sample_rate: expected 16000, got " + std::to_string(sample_rate));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i]))
            throw NumericError("non-finite sample at index " + std::to_string(i));
    }
}

namespace {

// Scale by 32768 (not 32767) and clamp: keeps |x - dequantized| <= 1/32768
// for every x in [-1, 1].
std::int16_t quantize(float x) {
    const float c = std::clamp(x, -1.0f, 1.0f);
    const float s = std::round(c * 32768.0f);
    return std::int16_t(std::clamp(s, -32768.0f, 32767.0f));
}

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
    clip.validate();
    const std::uint32_t n = std::uint32_t(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;

    binio::Writer w(path);
    w.tag("RIFF");
    w.u32(36 + data_bytes);
    w.tag("WAVE");
    w.tag("fmt ");
    w.u32(16);                        // PCM fmt chunk size
    w.u16(1);                         // audio format: PCM
    w.u16(1);                         // channels: mono
    w.u32(std::uint32_t(clip.sample_rate));
    w.u32(std::uint32_t(clip.sample_rate) * 2);  // byte rate
    w.u16(2);                         // block align
    w.u16(16);                        // bits per sample
    w.tag("data");
    w.u32(data_bytes);
    for (float s : clip.samples) w.i16(quantize(s));
}

AudioClip read_wav(const std::string& path) {
    binio::Reader r(path);
    if (r.tag() != "RIFF") throw FormatError("riff_magic: not a RIFF file: " + path);
    r.u32();  // overall size, unchecked
    if (r.tag() != "WAVE") throw FormatError("wave_magic: not a WAVE file: " + path);

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    AudioClip clip;

    while (!r.eof_next()) {
        const std::string id = r.tag();
        const std::uint32_t size = r.u32();
        if (id == "fmt ") {
            if (size < 16) throw FormatError("fmt_chunk: too small in " + path);
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (size > 16) r.skip(size - 16);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError("data chunk before fmt chunk in " + path);
            if (format != 1) throw FormatError("audio_format: expected PCM (1), got " + std::to_string(format));
            if (channels != 1) throw FormatError("channels: expected mono (1), got " + std::to_string(channels));
            if (bits != 16) throw FormatError("bits_per_sample: expected 16, got " + std::to_string(bits));
            if (rate != std::uint32_t(kSampleRate))
                throw FormatError("sample_rate: expected 16000, got " + std::to_string(rate));
            const std::uint32_t n = size / 2;
            clip.samples.resize(n);
            for (std::uint32_t i = 0; i < n; ++i) clip.samples[i] = float(r.i16()) / 32768.0f;
            clip.sample_rate = int(rate);
            return clip;
        } else {
            r.skip(size + (size & 1));  // chunks are word-aligned
        }
    }
    throw FormatError("data chunk missing in " + path);
}

}  // namespace selfpitch
