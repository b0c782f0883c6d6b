// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "selfpitch/adam.hpp"
#include "selfpitch/parallel.hpp"

namespace selfpitch {

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

TrainDataset dataset_from_clips(const std::vector<std::pair<std::string, AudioClip>>& clips,
                                const CqtEngine& engine, int threads) {
    TrainDataset data;
    data.bins = engine.config().n_bins;
    for (std::size_t c = 0; c < clips.size(); ++c) {
        data.clip_names.push_back(clips[c].first);
        const CqtSpectrogram spec = engine.compute(clips[c].second, threads);
        for (int t = 0; t < spec.frames; ++t) {
            data.keys.push_back(FrameKey{int(c), t});
            const auto row = spec.frame(t);
            data.frames.insert(data.frames.end(), row.begin(), row.end());
        }
    }
    return data;
}

TrainDataset load_dataset(const std::string& dir, const CqtEngine& engine, int threads) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".wav")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError("no .wav files in " + dir);
    std::vector<std::pair<std::string, AudioClip>> clips;
    for (const std::string& p : paths)
        clips.emplace_back(fs::path(p).stem().string(), read_wav(p));
    return dataset_from_clips(clips, engine, threads);
}

void save_weight_table(const std::string& path, const SampleWeightTable& table,
                       const TrainDataset& data) {
    if (int(table.weights.size()) != data.n())
        throw ShapeError("weight table size " + std::to_string(table.weights.size()) +
                         " != dataset size " + std::to_string(data.n()));
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "clip,frame,weight,sce_norm\n";
    char buf[160];
    for (int i = 0; i < data.n(); ++i) {
        const FrameKey& k = data.keys[std::size_t(i)];
        std::snprintf(buf, sizeof buf, "%s,%d,%.9f,%.9f\n",
                      data.clip_names[std::size_t(k.clip)].c_str(), k.frame,
                      table.weights[std::size_t(i)], table.sce_norm[std::size_t(i)]);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

SampleWeightTable load_weight_table(const std::string& path, const TrainDataset& data) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "clip,frame,weight,sce_norm")
        throw FormatError("weight table header: expected 'clip,frame,weight,sce_norm'");
    std::map<std::pair<std::string, int>, std::pair<double, double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string clip, frame_s, w_s, sce_s;
        if (!std::getline(ss, clip, ',') || !std::getline(ss, frame_s, ',') ||
            !std::getline(ss, w_s, ',') || !std::getline(ss, sce_s))
            throw FormatError("weight table: cannot parse line '" + line + "'");
        rows[{clip, std::stoi(frame_s)}] = {std::stod(w_s), std::stod(sce_s)};
    }
    SampleWeightTable table;
    table.init(data.n());
    for (int i = 0; i < data.n(); ++i) {
        const FrameKey& k = data.keys[std::size_t(i)];
        const auto it = rows.find({data.clip_names[std::size_t(k.clip)], k.frame});
        if (it == rows.end())
            throw FormatError("weight table: missing row for clip '" +
                              data.clip_names[std::size_t(k.clip)] + "' frame " +
                              std::to_string(k.frame));
        table.weights[std::size_t(i)] = it->second.first;
        table.sce_norm[std::size_t(i)] = it->second.second;
    }
    return table;
}

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (k_epochs < 1) throw ConfigError("trainer.k_epochs: must be >= 1");
    if (epochs < 0 || epochs % k_epochs != 0)
        throw ConfigError("trainer.epochs: must be a non-negative multiple of k_epochs");
    if (batch < 1) throw ConfigError("trainer.batch: must be >= 1");
    if (!(lr > 0)) throw ConfigError("trainer.lr: must be positive");
    if (delta_max < 1) throw ConfigError("trainer.delta_max: must be >= 1");
    if (threads < 1) throw ConfigError("trainer.threads: must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("trainer.checkpoint_every: must be >= 0");
}

double lambda_anneal(int epoch) {
    if (epoch < 0) throw RangeError("lambda_anneal: epoch must be >= 0");
    return std::expm1(std::pow(double(epoch), 1.25) / 1000.0);
}

std::vector<double> normalize_sce(std::span<const double> losses, double eps) {
    if (losses.empty()) throw RangeError("normalize_sce: need at least one frame");
    double lo = losses[0], hi = losses[0];
    for (const double v : losses) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> out(losses.size());
    const double den = hi - lo + eps;
    for (std::size_t i = 0; i < losses.size(); ++i) out[i] = (losses[i] - lo) / den;
    return out;
}

namespace {

constexpr std::uint64_t kEStepTag = 0x65737465ull;    // E-step delta stream
constexpr std::uint64_t kShuffleTag = 0x73687566ull;  // per-epoch batch order

int draw_delta(Rng& rng, int delta_max) {
    const int idx = int(rng.uniform_int(0, 2 * delta_max - 1));
    return idx < delta_max ? idx - delta_max : idx - delta_max + 1;
}

/// per-frame SCE of shift-only view pairs under a frozen model, batched
template <typename Real>
std::vector<double> sce_pass(const PitchModel<Real>& model, const TrainDataset& data, int epoch,
                             const TrainConfig& cfg) {
    const int n = data.n();
    const int B = data.bins;
    std::vector<double> sce(std::size_t(n), 0.0);
    const int batch = 256;
    const int n_batches = (n + batch - 1) / batch;
    parallel_chunks(n_batches, cfg.threads, [&](int bi) {
        // workers own a clone; forward only, no gradient reduction
        auto worker = model.clone();
        const int lo = bi * batch;
        const int hi = std::min(n, lo + batch);
        const int m = hi - lo;
        std::vector<float> va(std::size_t(m) * B), vb(std::size_t(m) * B);
        std::vector<int> deltas(static_cast<std::size_t>(m), 0);
        for (int i = 0; i < m; ++i) {
            Rng rng(key_hash(cfg.seed ^ kEStepTag, std::uint64_t(epoch), data.frame_uid(lo + i)));
            const int delta = draw_delta(rng, cfg.delta_max);
            deltas[std::size_t(i)] = delta;
            const auto row = data.frame(lo + i);
            std::copy(row.begin(), row.end(), va.begin() + std::size_t(i) * B);
            const std::vector<float> shifted = shift_frame(row, delta);
            std::copy(shifted.begin(), shifted.end(), vb.begin() + std::size_t(i) * B);
        }
        ad::Graph<Real> g;
        const auto y = worker->forward(g, va, m);
        const auto y2 = worker->forward(g, vb, m);
        const auto losses = pair_losses(g, y, y2, deltas, cfg.loss);
        const std::vector<Real>& vals = g.val(losses.sce);
        for (int i = 0; i < m; ++i) sce[std::size_t(lo + i)] = double(vals[std::size_t(i)]);
    });
    return sce;
}

}  // namespace

template <typename Real>
void e_step(PitchModel<Real>& model, const TrainDataset& data, SampleWeightTable& table, int epoch,
            const TrainConfig& cfg) {
    if (data.n() == 0) throw RangeError("e_step: empty dataset");
    if (epoch % cfg.k_epochs != 0)
        throw RangeError("e_step: epoch " + std::to_string(epoch) + " not a multiple of k_epochs");
    const double lambda = lambda_anneal(epoch);
    const std::vector<double> raw = sce_pass(model, data, epoch, cfg);
    const std::vector<double> norm = normalize_sce(raw, cfg.loss.eps);
    for (int i = 0; i < data.n(); ++i) {
        table.sce_norm[std::size_t(i)] = norm[std::size_t(i)];
        table.weights[std::size_t(i)] =
            std::max(0.0, table.weights[std::size_t(i)] - lambda * norm[std::size_t(i)]);
    }
}

template <typename Real>
double silent_frame_grad_norm(const PitchModel<Real>& model, const TrainDataset& data, int epoch,
                              const TrainConfig& cfg, int max_frames) {
    std::vector<int> silent;
    for (int i = 0; i < data.n() && int(silent.size()) < max_frames; ++i) {
        const auto row = data.frame(i);
        float lo = row[0], hi = row[0];
        for (const float v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo == 0.0f) silent.push_back(i);
    }
    if (silent.empty()) return -1.0;

    auto worker = model.clone();
    double max_norm = 0.0;
    for (const int i : silent) {
        Rng rng(key_hash(cfg.seed ^ kEStepTag, std::uint64_t(epoch), data.frame_uid(i)));
        const int delta = draw_delta(rng, cfg.delta_max);
        const auto row = data.frame(i);
        const std::vector<float> shifted = shift_frame(row, delta);
        ad::Graph<Real> g;
        const auto y = worker->forward(g, row, 1);
        const auto y2 = worker->forward(g, shifted, 1);
        const std::array<int, 1> deltas{delta};
        const auto losses = pair_losses(g, y, y2, deltas, cfg.loss);
        g.backward(g.sum(losses.sce), /*free_buffers=*/false);
        double sq = 0.0;
        for (const Real v : g.grad(y)) sq += double(v) * double(v);
        for (const Real v : g.grad(y2)) sq += double(v) * double(v);
        max_norm = std::max(max_norm, std::sqrt(sq));
    }
    return max_norm;
}

// ---------------------------------------------------------------------------
// the training loop
// ---------------------------------------------------------------------------

namespace {

std::vector<double> weight_deciles(const std::vector<double>& weights) {
    std::vector<double> sorted = weights;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out(11);
    for (int q = 0; q <= 10; ++q)
        out[std::size_t(q)] = sorted[std::size_t((sorted.size() - 1) * std::size_t(q) / 10)];
    return out;
}

void write_jsonl(std::ostream& os, const EpochLog& el) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "{\"epoch\":%d,\"e_step\":%s,\"lambda\":%.12g,\"mean_equiv\":%.8g,"
                  "\"mean_invar\":%.8g,\"mean_sce\":%.8g,\"mean_total\":%.8g,"
                  "\"silent_grad_norm\":%.6g,\"weight_deciles\":[",
                  el.epoch, el.e_step_ran ? "true" : "false", el.lambda, el.mean_equiv,
                  el.mean_invar, el.mean_sce, el.mean_total, el.silent_grad_norm);
    os << buf;
    for (std::size_t i = 0; i < el.weight_deciles.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6f", i ? "," : "", el.weight_deciles[i]);
        os << buf;
    }
    os << "]}\n";
}

}  // namespace

template <typename Real>
TrainResult train(PitchModel<Real>& model, const TrainDataset& data, const TrainConfig& cfg,
                  const CqtEngine& engine, std::ostream* jsonl, bool calibrate) {
    cfg.validate();
    if (data.n() == 0) throw RangeError("train: empty dataset");
    if (data.bins != engine.config().n_bins)
        throw ShapeError("train: dataset bins " + std::to_string(data.bins) + " != CQT bins");

    TrainResult result;
    result.table.init(data.n());

    auto params = model.parameters();
    ad::AdamState<Real> adam(Real(cfg.lr));

    // fixed chunking: results do not depend on how many threads execute
    const int n_chunks = 4;
    std::vector<std::unique_ptr<PitchModel<Real>>> workers;
    for (int c = 0; c < n_chunks; ++c) workers.push_back(model.clone());

    const AugmentOptions aug{cfg.delta_max, true, true};
    const CqtConfig& cqt = engine.config();

    std::vector<int> order(std::size_t(data.n()));
    for (int i = 0; i < data.n(); ++i) order[std::size_t(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog el;
        el.epoch = epoch;
        el.lambda = lambda_anneal(epoch);
        // E-step: first update happens after the k_epochs warm-up (at epoch 0
        // the annealing factor is exactly 0, so running it would be a no-op)
        if (epoch % cfg.k_epochs == 0 && epoch > 0) {
            e_step(model, data, result.table, epoch, cfg);
            el.e_step_ran = true;
        }

        // M-step epoch: deterministic shuffle, fixed-chunk data parallelism
        {
            Rng shuffle_rng(key_hash(cfg.seed ^ kShuffleTag, std::uint64_t(epoch), 0));
            for (int i = data.n() - 1; i > 0; --i) {
                const int j = int(shuffle_rng.uniform_int(0, i));
                std::swap(order[std::size_t(i)], order[std::size_t(j)]);
            }
        }
        double sum_equiv = 0, sum_invar = 0, sum_sce = 0, sum_total = 0;
        long counted = 0;
        for (int start = 0; start < data.n(); start += cfg.batch) {
            const int bsz = std::min(cfg.batch, data.n() - start);
            // pairs are keyed by (seed, epoch, frame uid): identical no matter
            // which batch or chunk a frame lands in
            std::vector<ShiftPair> pairs(static_cast<std::size_t>(bsz));
            std::vector<double> wts(static_cast<std::size_t>(bsz), 0.0);
            for (int i = 0; i < bsz; ++i) {
                const int idx = order[std::size_t(start + i)];
                pairs[std::size_t(i)] =
                    augment_pair(data.frame(idx), cfg.seed, epoch, data.frame_uid(idx), cqt, aug);
                wts[std::size_t(i)] = result.table.weights[std::size_t(idx)];
            }

            // refresh worker parameter copies, run chunks, reduce in order
            const int per_chunk = (bsz + n_chunks - 1) / n_chunks;
            std::vector<std::array<double, 4>> chunk_sums(std::size_t(n_chunks), {0, 0, 0, 0});
            for (int c = 0; c < n_chunks; ++c) {
                auto wp = workers[std::size_t(c)]->parameters();
                for (std::size_t p = 0; p < params.size(); ++p) {
                    wp[p]->v = params[p]->v;
                    wp[p]->zero_grad();
                }
            }
            parallel_chunks(n_chunks, cfg.threads, [&](int c) {
                const int lo = c * per_chunk;
                const int hi = std::min(bsz, lo + per_chunk);
                if (lo >= hi) return;
                const int m = hi - lo;
                const int B = data.bins;
                std::vector<float> va(std::size_t(m) * B), vb(std::size_t(m) * B);
                std::vector<int> deltas(static_cast<std::size_t>(m), 0);
                std::vector<Real> w(static_cast<std::size_t>(m), Real(0));
                for (int i = 0; i < m; ++i) {
                    const ShiftPair& pr = pairs[std::size_t(lo + i)];
                    std::copy(pr.view_a.begin(), pr.view_a.end(), va.begin() + std::size_t(i) * B);
                    std::copy(pr.view_b.begin(), pr.view_b.end(), vb.begin() + std::size_t(i) * B);
                    deltas[std::size_t(i)] = pr.delta;
                    w[std::size_t(i)] = Real(wts[std::size_t(lo + i)]);
                }
                PitchModel<Real>& wm = *workers[std::size_t(c)];
                ad::Graph<Real> g;
                const auto y = wm.forward(g, va, m);
                const auto y2 = wm.forward(g, vb, m);
                const auto losses = pair_losses(g, y, y2, deltas, cfg.loss);
                const auto total = total_loss<Real>(g, losses, w, bsz);
                // per-sample means are logged from pre-backward values
                const std::vector<Real>& ve = g.val(losses.equiv);
                const std::vector<Real>& vi = g.val(losses.invar);
                const std::vector<Real>& vs = g.val(losses.sce);
                for (int i = 0; i < m; ++i) {
                    chunk_sums[std::size_t(c)][0] += double(ve[std::size_t(i)]);
                    chunk_sums[std::size_t(c)][1] += double(vi[std::size_t(i)]);
                    chunk_sums[std::size_t(c)][2] += double(vs[std::size_t(i)]);
                }
                chunk_sums[std::size_t(c)][3] = double(g.val(total)[0]);
                g.backward(total);
            });
            double batch_total = 0;
            for (int c = 0; c < n_chunks; ++c) {
                sum_equiv += chunk_sums[std::size_t(c)][0];
                sum_invar += chunk_sums[std::size_t(c)][1];
                sum_sce += chunk_sums[std::size_t(c)][2];
                batch_total += chunk_sums[std::size_t(c)][3];
            }
            sum_total += batch_total;
            counted += bsz;
            if (!std::isfinite(batch_total))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " (last checkpoint retained)");
            // ordered gradient reduction, then one Adam step
            for (int c = 0; c < n_chunks; ++c) {
                auto wp = workers[std::size_t(c)]->parameters();
                for (std::size_t p = 0; p < params.size(); ++p) {
                    const auto& src = wp[p]->g;
                    auto& dst = params[p]->g;
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                }
            }
            adam.step(params);
        }

        el.mean_equiv = sum_equiv / double(counted);
        el.mean_invar = sum_invar / double(counted);
        el.mean_sce = sum_sce / double(counted);
        el.mean_total = sum_total / double((data.n() + cfg.batch - 1) / cfg.batch);
        el.weight_deciles = weight_deciles(result.table.weights);
        el.silent_grad_norm = silent_frame_grad_norm(model, data, epoch, cfg);
        if (jsonl) write_jsonl(*jsonl, el);
        result.log.push_back(el);

        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
            (epoch + 1) % cfg.checkpoint_every == 0) {
            Checkpoint ckpt;
            model.save(ckpt);
            save_checkpoint(cfg.checkpoint_path, ckpt);
        }
    }

    if (calibrate) result.applied_calibration = self_calibrate(model, engine);
    if (!cfg.checkpoint_path.empty()) {
        Checkpoint ckpt;
        model.save(ckpt);
        save_checkpoint(cfg.checkpoint_path, ckpt);
    }
    return result;
}

template void e_step<float>(PitchModel<float>&, const TrainDataset&, SampleWeightTable&, int,
                            const TrainConfig&);
template void e_step<double>(PitchModel<double>&, const TrainDataset&, SampleWeightTable&, int,
                             const TrainConfig&);
template double silent_frame_grad_norm<float>(const PitchModel<float>&, const TrainDataset&, int,
                                              const TrainConfig&, int);
template double silent_frame_grad_norm<double>(const PitchModel<double>&, const TrainDataset&, int,
                                               const TrainConfig&, int);
template TrainResult train<float>(PitchModel<float>&, const TrainDataset&, const TrainConfig&,
                                  const CqtEngine&, std::ostream*, bool);
template TrainResult train<double>(PitchModel<double>&, const TrainDataset&, const TrainConfig&,
                                   const CqtEngine&, std::ostream*, bool);

}  // namespace selfpitch
