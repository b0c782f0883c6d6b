// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/gradcheck.hpp"

#include <cmath>

namespace selfpitch::ad {

namespace {

double eval(const std::function<Graph<double>::Id(Graph<double>&, std::vector<Tensor<double>*>&)>& build,
            std::vector<Tensor<double>*>& inputs) {
    Graph<double> g;
    const auto root = build(g, inputs);
    if (g.shape(root).numel() != 1) throw ShapeError("grad_check: builder must return a scalar");
    return g.val(root)[0];
}

}  // namespace

GradCheckResult grad_check(
    const std::function<Graph<double>::Id(Graph<double>&, std::vector<Tensor<double>*>&)>& build,
    std::vector<Tensor<double>*> inputs, double h, int samples_per_input, std::uint64_t seed) {
    // analytic pass
    for (auto* t : inputs) t->zero_grad();
    {
        Graph<double> g;
        const auto root = build(g, inputs);
        g.backward(root);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto* t : inputs) analytic.push_back(t->g);

    GradCheckResult res;
    Rng rng(key_hash(seed, 0x67726164));
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor<double>& t = *inputs[ti];
        const int n = t.numel();
        const int want = std::min(samples_per_input, n);
        // sample distinct coordinates
        std::vector<int> coords;
        if (want == n) {
            coords.resize(std::size_t(n));
            for (int i = 0; i < n; ++i) coords[std::size_t(i)] = i;
        } else {
            for (int k = 0; k < want; ++k) coords.push_back(int(rng.uniform_int(0, n - 1)));
        }
        for (const int ci : coords) {
            const double orig = t.v[std::size_t(ci)];
            const double f0 = eval(build, inputs);
            auto at = [&](double step) {
                t.v[std::size_t(ci)] = orig + step;
                const double f = eval(build, inputs);
                t.v[std::size_t(ci)] = orig;
                return f;
            };
            const double fp = at(h), fm = at(-h);
            const double fp2 = at(h / 2.0), fm2 = at(-h / 2.0);
            const double num_h = (fp - fm) / (2.0 * h);
            const double num_h2 = (fp2 - fm2) / h;
            const double scale = std::max({1.0, std::abs(num_h), std::abs(num_h2)});
            // Two ways a coordinate is non-differentiable here: the two step
            // sizes disagree, or the symmetric second difference is far too
            // large for a smooth function (a slope jump contributes |jump|*h
            // where smooth curvature contributes only O(h^2)).
            const double second = std::abs(fp + fm - 2.0 * f0) / h;
            if (std::abs(num_h - num_h2) / scale > 1e-3 || second > 0.05 * scale) {
                ++res.skipped;
                continue;
            }
            const double ana = analytic[ti][std::size_t(ci)];
            const double rel = std::abs(ana - num_h2) / std::max(1.0, std::abs(num_h2));
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace selfpitch::ad
