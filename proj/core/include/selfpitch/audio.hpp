// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace selfpitch {

inline constexpr int kSampleRate = 16000;

/// Mono audio at the pipeline's fixed 16 kHz rate, samples in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kSampleRate;

    std::size_t size() const { return samples.size(); }
    double duration_s() const { return double(samples.size()) / sample_rate; }
    void validate() const;  // throws on non-finite samples or wrong rate
};

// 16-bit PCM mono RIFF WAV at 16 kHz. Anything else is rejected with the
// offending field named; resampling is out of scope.
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace selfpitch
