// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "selfpitch/autodiff.hpp"

namespace selfpitch::ad {

/// Standard bias-corrected Adam. Moments live per parameter tensor, matched
/// by position in the parameter list handed to each step.
template <typename Real>
class AdamState {
  public:
    AdamState(Real lr, Real beta1 = Real(0.9), Real beta2 = Real(0.999), Real eps = Real(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update from the gradients accumulated in each tensor's .g slot.
    /// Gradients are consumed (zeroed). NaN/inf gradients abort.
    void step(std::vector<Tensor<Real>*>& params);

    long step_count() const { return t_; }
    Real lr() const { return lr_; }
    void set_lr(Real lr) { lr_ = lr; }

  private:
    Real lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<Real>> m_, v_;
};

using AdamF = AdamState<float>;
using AdamD = AdamState<double>;

}  // namespace selfpitch::ad
