// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace selfpitch {

/// Merged view of the sectioned key=value config file plus flag overrides.
/// Every knob the pipeline exposes lives here; unknown keys are rejected
/// with the offending name.
struct RunConfig {
    // [corpus]
    std::string corpus_preset = "demo";
    std::uint64_t corpus_seed = 7;

    // [trainer]
    int epochs = 60;
    int k_epochs = 5;
    int batch = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int delta_max = 15;
    int checkpoint_every = 10;
    int threads = 0;  // 0 = hardware default
    bool deterministic = true;
    std::string precision = "float32";  // or float64

    // [voicing]
    double theta = 0.5;
    int voicing_epochs = 200;
    double voicing_lr = 1e-2;

    // [synth]
    int harmonics = 24;
    int fit_epochs = 500;
    double fit_lr = 1e-2;
    double lambda_smooth = 0.1;

    // [eval]
    double threshold_cents = 50.0;

    void validate() const;  // range checks, each naming its key
};

/// Parses `path` (empty string = defaults only) then applies
/// "section.key=value" overrides in order; overrides beat file values.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// one "section.key=value" line per setting
void echo_config(const RunConfig& cfg, std::ostream& os);

}  // namespace selfpitch
