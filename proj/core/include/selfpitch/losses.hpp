// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "selfpitch/autodiff.hpp"

namespace selfpitch {

struct LossConfig {
    double alpha = std::pow(2.0, 1.0 / 36.0);  // one CQT bin as a frequency ratio
    double huber_delta = 1.0;
    double eps = 1e-8;
};

/// Per-sample loss nodes for a batch of view pairs; each id is a length-N
/// vector in the graph.
template <typename Real>
struct PairLossNodes {
    typename ad::Graph<Real>::Id equiv = -1;
    typename ad::Graph<Real>::Id invar = -1;
    typename ad::Graph<Real>::Id sce = -1;
};

/// z = sum_k alpha^k p_k, one value per row of `probs`.
template <typename Real>
typename ad::Graph<Real>::Id scalar_pitch(ad::Graph<Real>& g, typename ad::Graph<Real>::Id probs,
                                          double alpha);

/// Builds all three per-sample losses for paired logits y, y2 (rows = N)
/// under per-sample bin shifts `deltas`. Cross-entropy targets are detached;
/// equivariance flows gradients through both z and z'.
template <typename Real>
PairLossNodes<Real> pair_losses(ad::Graph<Real>& g, typename ad::Graph<Real>::Id y,
                                typename ad::Graph<Real>::Id y2, std::span<const int> deltas,
                                const LossConfig& cfg);

/// (1/normalizer) * sum_i w_i (equiv_i + invar_i + sce_i). normalizer < 0
/// means the batch size; passing it explicitly keeps gradients bitwise
/// comparable when a zero-weight sample is dropped from the batch.
template <typename Real>
typename ad::Graph<Real>::Id total_loss(ad::Graph<Real>& g, const PairLossNodes<Real>& losses,
                                        std::span<const Real> weights, int normalizer = -1);

// ---------------------------------------------------------------------------
// plain-value forms (single sample); used for oracles and spot checks
// ---------------------------------------------------------------------------

double scalar_pitch_value(std::span<const double> p, double alpha);
double loss_equiv_value(std::span<const double> p, std::span<const double> p2, int delta,
                        const LossConfig& cfg = {});
double loss_invar_value(std::span<const double> y, std::span<const double> y2);
double loss_sce_value(std::span<const double> y, std::span<const double> y2, int delta);

std::vector<double> softmax_values(std::span<const double> y);

}  // namespace selfpitch
