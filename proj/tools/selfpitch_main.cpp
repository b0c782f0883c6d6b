// SPDX-License-Identifier: Apache-2.0
//
// selfpitch: self-supervised F0 + voicing pipeline on synthetic corpora.
// Subcommands: gen-corpus, cqt, train, train-voicing, infer, eval, resynth,
// export. Every run echoes its effective configuration so any artifact can
// be regenerated from the log.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "selfpitch/audio.hpp"
#include "selfpitch/corpus.hpp"
#include "selfpitch/cqt.hpp"
#include "selfpitch/eval.hpp"
#include "selfpitch/model.hpp"
#include "selfpitch/parallel.hpp"
#include "selfpitch/runconfig.hpp"
#include "selfpitch/synth.hpp"
#include "selfpitch/trainer.hpp"
#include "selfpitch/voicing.hpp"

namespace {

using namespace selfpitch;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key=value config file with [section]s");
    cmd->add_option("--set", opts.overrides, "override as section.key=value (repeatable)")
        ->take_all();
}

RunConfig effective_config(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts.config_path, opts.overrides);
    std::cerr << "# effective config\n";
    echo_config(cfg, std::cerr);
    return cfg;
}

int resolve_threads(const RunConfig& cfg) {
    return cfg.threads > 0 ? cfg.threads : default_threads();
}

TrainConfig to_train_config(const RunConfig& cfg) {
    TrainConfig tc;
    tc.k_epochs = cfg.k_epochs;
    tc.epochs = cfg.epochs;
    tc.batch = cfg.batch;
    tc.lr = cfg.lr;
    tc.seed = cfg.seed;
    tc.delta_max = cfg.delta_max;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.threads = resolve_threads(cfg);
    tc.deterministic = cfg.deterministic;
    return tc;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const CommonOpts& common, const std::string& out_dir) {
    const RunConfig cfg = effective_config(common);
    generate_corpus(out_dir, cfg.corpus_preset, cfg.corpus_seed);
    std::cout << "corpus written to " << out_dir << " (preset " << cfg.corpus_preset << ", seed "
              << cfg.corpus_seed << ")\n";
    return 0;
}

int cmd_cqt(const CommonOpts& common, const std::string& in_path, const std::string& out_path) {
    const RunConfig cfg = effective_config(common);
    const CqtEngine engine;
    const AudioClip clip = read_wav(in_path);
    const CqtSpectrogram spec = engine.compute(clip, resolve_threads(cfg));
    save_cqts(out_path, spec);
    std::cout << "cqt: " << spec.frames << " frames x " << spec.bins << " bins -> " << out_path
              << "\n";
    return 0;
}

template <typename Real>
int run_train(const RunConfig& cfg, const std::string& data_dir, const std::string& model_path,
              const std::string& weights_path, const std::string& log_path) {
    const CqtEngine engine;
    const TrainDataset data = load_dataset(data_dir, engine, resolve_threads(cfg));
    std::cerr << "dataset: " << data.n() << " frames from " << data.clip_names.size() << " clips\n";

    ModelConfig mc;
    mc.seed = cfg.seed;
    PitchModel<Real> model(mc, engine.config().n_bins);
    std::cerr << "model parameters: " << model.parameter_count() << "\n";

    TrainConfig tc = to_train_config(cfg);
    tc.checkpoint_path = model_path;

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw IoError("cannot open log for writing: " + log_path);
    }
    const TrainResult result = train(model, data, tc, engine, log.is_open() ? &log : nullptr);
    std::cerr << "calibration offset applied: " << result.applied_calibration << " bins\n";

    Checkpoint ckpt;
    model.save(ckpt);
    save_checkpoint(model_path, ckpt);
    save_weight_table(weights_path, result.table, data);
    const WeightHistogram hist = weight_histogram(result.table.weights);
    std::cout << "train: " << cfg.epochs << " epochs done; weight bimodality "
              << hist.bimodality << "; model -> " << model_path << "; weights -> " << weights_path
              << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& model_path,
              const std::string& weights_path, const std::string& log_path) {
    const RunConfig cfg = effective_config(common);
    if (cfg.precision == "float64")
        return run_train<double>(cfg, data_dir, model_path, weights_path, log_path);
    return run_train<float>(cfg, data_dir, model_path, weights_path, log_path);
}

int cmd_train_voicing(const CommonOpts& common, const std::string& data_dir,
                      const std::string& weights_path, const std::string& out_path) {
    const RunConfig cfg = effective_config(common);
    const CqtEngine engine;
    const TrainDataset data = load_dataset(data_dir, engine, resolve_threads(cfg));
    const SampleWeightTable table = load_weight_table(weights_path, data);
    const PseudoLabelSet labels = pseudo_labels(table, cfg.theta);
    if (labels.degenerate)
        std::cerr << "warning: pseudo-labels are single-class (" << labels.n_voiced << " voiced / "
                  << labels.n_unvoiced << " unvoiced)\n";
    std::cerr << "pseudo-labels: " << labels.n_voiced << " voiced, " << labels.n_unvoiced
              << " unvoiced (theta " << cfg.theta << ")\n";

    VoicingTrainConfig vc;
    vc.epochs = cfg.voicing_epochs;
    vc.lr = cfg.voicing_lr;
    vc.seed = cfg.seed;
    const VoicingClassifier clf = train_voicing(data, labels, vc);
    Checkpoint ckpt;
    clf.save(ckpt);
    save_checkpoint(out_path, ckpt);
    std::cout << "train-voicing: classifier -> " << out_path << "\n";
    return 0;
}

template <typename Real>
F0Track infer_track(const RunConfig& cfg, const std::string& model_path,
                    const std::string& voicing_path, const AudioClip& clip) {
    const CqtEngine engine;
    ModelConfig mc;
    mc.seed = cfg.seed;
    PitchModel<Real> model(mc, engine.config().n_bins);
    model.load(load_checkpoint(model_path));
    VoicingClassifier clf;
    clf.load(load_checkpoint(voicing_path));

    const CqtSpectrogram spec = engine.compute(clip, resolve_threads(cfg));
    F0Track track;
    track.hop = spec.hop;
    const int batch = 256;
    for (int start = 0; start < spec.frames; start += batch) {
        const int n = std::min(batch, spec.frames - start);
        const std::span<const float> rows(spec.values.data() + std::size_t(start) * spec.bins,
                                          std::size_t(n) * spec.bins);
        const std::vector<Real> probs = model.predict_probs(rows, n);
        for (int i = 0; i < n; ++i) {
            const std::span<const Real> p(probs.data() + std::size_t(i) * spec.bins,
                                          std::size_t(spec.bins));
            const PitchEstimate est = decode_pitch(p, engine.config());
            const auto [prob, voiced] = predict_voicing(clf, spec.frame(start + i));
            F0Entry e;
            e.frame = start + i;
            e.voiced = voiced ? 1 : 0;
            e.f0_hz = voiced ? est.f0_hz : 0.0;
            track.entries.push_back(e);
        }
    }
    return track;
}

int cmd_infer(const CommonOpts& common, const std::string& model_path,
              const std::string& voicing_path, const std::string& in_path,
              const std::string& out_path) {
    const RunConfig cfg = effective_config(common);
    const AudioClip clip = read_wav(in_path);
    const F0Track track = cfg.precision == "float64"
                              ? infer_track<double>(cfg, model_path, voicing_path, clip)
                              : infer_track<float>(cfg, model_path, voicing_path, clip);
    write_annotation(out_path, track);
    std::cout << "infer: " << track.entries.size() << " frames -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& est_path, const std::string& ref_path,
             const std::string& json_path) {
    const RunConfig cfg = effective_config(common);
    const F0Track est = read_annotation(est_path);
    const F0Track ref = read_annotation(ref_path);
    const PitchMetrics m = rpa_rca(est, ref, cfg.threshold_cents);
    std::printf("rpa=%.2f rca=%.2f\n", m.rpa, m.rca);
    if (!json_path.empty()) {
        nlohmann::json j;
        j["rpa"] = m.rpa;
        j["rca"] = m.rca;
        j["frames"] = m.voiced_frames;
        j["threshold_cents"] = m.threshold_cents;
        std::ofstream out(json_path);
        if (!out) throw IoError("cannot open for writing: " + json_path);
        out << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_resynth(const CommonOpts& common, const std::string& in_path, const std::string& track_path,
                const std::string& out_path, const std::string& curve_path) {
    const RunConfig cfg = effective_config(common);
    const AudioClip target = read_wav(in_path);
    const F0Track track = read_annotation(track_path);

    FitConfig fc;
    fc.harmonics = cfg.harmonics;
    fc.epochs = cfg.fit_epochs;
    fc.lr = cfg.fit_lr;
    fc.lambda_smooth = cfg.lambda_smooth;

    const int frames = int(target.samples.size()) / track.hop + 1;
    SynthParams<double> params(cfg.harmonics, frames);
    std::vector<double> y(target.samples.begin(), target.samples.end());
    const FitResult result = fit_synth<double>(params, y, track, fc);
    if (result.aborted_nan) std::cerr << "warning: fit aborted on NaN; best parameters kept\n";

    auto [f0, v] = upsample_contours(track, target.sample_rate, track.hop, int(y.size()));
    const std::vector<double> s = synthesize(params, f0, v, target.sample_rate, track.hop);
    AudioClip out;
    out.samples.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        out.samples[i] = float(std::clamp(s[i], -1.0, 1.0));
    write_wav(out_path, out);

    if (!curve_path.empty()) {
        std::ofstream curve(curve_path);
        if (!curve) throw IoError("cannot open for writing: " + curve_path);
        curve << "epoch,total,mrstft,tv\n";
        char buf[128];
        for (const FitCurvePoint& pt : result.curve) {
            std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g\n", pt.epoch, pt.total, pt.mrstft,
                          pt.tv);
            curve << buf;
        }
    }
    const double first = result.curve.empty() ? 0.0 : result.curve.front().mrstft;
    const double last = result.curve.empty() ? 0.0 : result.curve.back().mrstft;
    std::cout << "resynth: mrstft " << first << " -> " << last << "; audio -> " << out_path << "\n";
    return 0;
}

int cmd_export(const CommonOpts& common, const std::string& weights_path,
               const std::string& hist_path, const std::string& cqts_path,
               const std::string& track_path, const std::string& clip_name,
               const std::string& pgm_path, const std::string& csv_path) {
    effective_config(common);
    bool did_anything = false;
    if (!weights_path.empty() && !hist_path.empty()) {
        // histogram straight from the weight-table CSV
        std::ifstream in(weights_path);
        if (!in) throw IoError("cannot open for reading: " + weights_path);
        std::string line;
        if (!std::getline(in, line) || line != "clip,frame,weight,sce_norm")
            throw FormatError("weight table header: expected 'clip,frame,weight,sce_norm'");
        std::vector<double> weights;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::size_t c1 = line.find(',');
            const std::size_t c2 = line.find(',', c1 + 1);
            const std::size_t c3 = line.find(',', c2 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
                throw FormatError("weight table: cannot parse line '" + line + "'");
            weights.push_back(std::stod(line.substr(c2 + 1, c3 - c2 - 1)));
        }
        const WeightHistogram hist = weight_histogram(weights);
        save_weight_histogram_csv(hist_path, hist);
        std::cout << "export: histogram (bimodality " << hist.bimodality << ") -> " << hist_path
                  << "\n";
        did_anything = true;
    }
    if (!cqts_path.empty()) {
        if (pgm_path.empty() || csv_path.empty() || track_path.empty())
            throw ConfigError("export overlay needs --track, --pgm-out and --csv-out");
        const CqtSpectrogram spec = load_cqts(cqts_path);
        const F0Track track = read_annotation(track_path);
        std::vector<double> frame_weights;
        if (!weights_path.empty() && !clip_name.empty()) {
            std::ifstream in(weights_path);
            if (!in) throw IoError("cannot open for reading: " + weights_path);
            std::string line;
            std::getline(in, line);
            frame_weights.assign(std::size_t(spec.frames), 0.0);
            while (std::getline(in, line)) {
                if (line.rfind(clip_name + ",", 0) != 0) continue;
                const std::size_t c1 = line.find(',');
                const std::size_t c2 = line.find(',', c1 + 1);
                const std::size_t c3 = line.find(',', c2 + 1);
                const int frame = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
                if (frame >= 0 && frame < spec.frames)
                    frame_weights[std::size_t(frame)] = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
            }
        }
        export_overlay(spec, track, frame_weights, pgm_path, csv_path);
        std::cout << "export: overlay -> " << pgm_path << ", " << csv_path << "\n";
        did_anything = true;
    }
    if (!did_anything)
        throw ConfigError("export: nothing to do (pass --weights/--hist-out or --cqts/...)");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised F0 and voicing pipeline"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string out_dir, in_path, out_path, model_path, voicing_path, weights_path, log_path;
    std::string est_path, ref_path, json_path, track_path, curve_path;
    std::string hist_path, cqts_path, clip_name, pgm_path, csv_path;
    double theta_flag = -1.0;
    std::uint64_t seed_flag = 0;
    bool have_seed = false;
    std::string preset_flag;

    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus with ground truth");
    add_common(gen, common);
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--preset", preset_flag, "corpus preset (demo, mini)");
    gen->add_option("--seed", seed_flag, "corpus seed")->each([&](const std::string&) {
        have_seed = true;
    });

    auto* cqt_cmd = app.add_subcommand("cqt", "compute a CQT spectrogram dump");
    add_common(cqt_cmd, common);
    cqt_cmd->add_option("--in", in_path, "input WAV")->required();
    cqt_cmd->add_option("--out", out_path, "output .cqts dump")->required();

    auto* train_cmd = app.add_subcommand("train", "self-supervised EM training");
    add_common(train_cmd, common);
    train_cmd->add_option("--data", out_dir, "directory of training WAVs")->required();
    train_cmd->add_option("--out-model", model_path, "model checkpoint path")->required();
    train_cmd->add_option("--out-weights", weights_path, "weight table CSV path")->required();
    train_cmd->add_option("--log", log_path, "training log (JSON lines)");
    train_cmd->add_option("--seed", seed_flag, "training seed")->each([&](const std::string&) {
        have_seed = true;
    });

    auto* tv_cmd = app.add_subcommand("train-voicing", "train the linear voicing classifier");
    add_common(tv_cmd, common);
    tv_cmd->add_option("--data", out_dir, "directory of training WAVs")->required();
    tv_cmd->add_option("--weights", weights_path, "weight table CSV from train")->required();
    tv_cmd->add_option("--out", out_path, "voicing checkpoint path")->required();
    tv_cmd->add_option("--theta", theta_flag, "pseudo-label threshold in (0,1)");

    auto* infer_cmd = app.add_subcommand("infer", "estimate an F0 track for a WAV");
    add_common(infer_cmd, common);
    infer_cmd->add_option("--model", model_path, "pitch model checkpoint")->required();
    infer_cmd->add_option("--voicing", voicing_path, "voicing checkpoint")->required();
    infer_cmd->add_option("--in", in_path, "input WAV")->required();
    infer_cmd->add_option("--out", out_path, "output annotation CSV")->required();

    auto* eval_cmd = app.add_subcommand("eval", "RPA/RCA of an estimate against a reference");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--est", est_path, "estimated track CSV")->required();
    eval_cmd->add_option("--ref", ref_path, "reference track CSV")->required();
    eval_cmd->add_option("--json", json_path, "also write metrics JSON here");

    auto* resynth_cmd = app.add_subcommand("resynth", "analysis-by-synthesis reconstruction");
    add_common(resynth_cmd, common);
    resynth_cmd->add_option("--in", in_path, "target WAV")->required();
    resynth_cmd->add_option("--track", track_path, "F0 track CSV driving the synthesizer")->required();
    resynth_cmd->add_option("--out", out_path, "fitted audio WAV")->required();
    resynth_cmd->add_option("--curve", curve_path, "loss curve CSV (epoch,total,mrstft,tv)");

    auto* export_cmd = app.add_subcommand("export", "figure-grade exports");
    add_common(export_cmd, common);
    export_cmd->add_option("--weights", weights_path, "weight table CSV");
    export_cmd->add_option("--hist-out", hist_path, "weight histogram CSV");
    export_cmd->add_option("--cqts", cqts_path, "spectrogram dump for the overlay");
    export_cmd->add_option("--track", track_path, "track CSV for the overlay");
    export_cmd->add_option("--clip", clip_name, "clip name for per-frame weights");
    export_cmd->add_option("--pgm-out", pgm_path, "overlay image (PGM)");
    export_cmd->add_option("--csv-out", csv_path, "overlay companion CSV");

    CLI11_PARSE(app, argc, argv);

    // convenience flags become overrides so precedence stays uniform
    if (gen->parsed()) {
        if (!preset_flag.empty()) common.overrides.push_back("corpus.preset=" + preset_flag);
        if (have_seed) common.overrides.push_back("corpus.seed=" + std::to_string(seed_flag));
    }
    if (train_cmd->parsed() && have_seed)
        common.overrides.push_back("trainer.seed=" + std::to_string(seed_flag));
    if (tv_cmd->parsed() && theta_flag >= 0.0)
        common.overrides.push_back("voicing.theta=" + std::to_string(theta_flag));

    try {
        if (gen->parsed()) return cmd_gen_corpus(common, out_dir);
        if (cqt_cmd->parsed()) return cmd_cqt(common, in_path, out_path);
        if (train_cmd->parsed())
            return cmd_train(common, out_dir, model_path, weights_path, log_path);
        if (tv_cmd->parsed()) return cmd_train_voicing(common, out_dir, weights_path, out_path);
        if (infer_cmd->parsed())
            return cmd_infer(common, model_path, voicing_path, in_path, out_path);
        if (eval_cmd->parsed()) return cmd_eval(common, est_path, ref_path, json_path);
        if (resynth_cmd->parsed())
            return cmd_resynth(common, in_path, track_path, out_path, curve_path);
        if (export_cmd->parsed())
            return cmd_export(common, weights_path, hist_path, cqts_path, track_path, clip_name,
                              pgm_path, csv_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
