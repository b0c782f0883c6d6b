// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "selfpitch/autodiff.hpp"
#include "selfpitch/common.hpp"

namespace selfpitch::ad {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;  // coordinates near non-differentiable points
};

/// Central-difference check of a scalar-valued graph builder against the
/// analytic backward pass. `build` must construct the same graph each call
/// from the current contents of `inputs` and return the scalar root.
///
/// Coordinates where the numeric estimate is unstable (h vs h/2 estimates
/// disagree, e.g. at a relu kink) are skipped and counted. Relative error is
/// |analytic - numeric| / max(1, |numeric|). Run in double precision.
GradCheckResult grad_check(
    const std::function<Graph<double>::Id(Graph<double>&, std::vector<Tensor<double>*>&)>& build,
    std::vector<Tensor<double>*> inputs, double h = 1e-5, int samples_per_input = 20,
    std::uint64_t seed = 0);

}  // namespace selfpitch::ad
