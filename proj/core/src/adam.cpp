// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/adam.hpp"

#include <cmath>

namespace selfpitch::ad {

template <typename Real>
void AdamState<Real>::step(std::vector<Tensor<Real>*>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) {
            m_[p].assign(params[p]->v.size(), Real(0));
            v_[p].assign(params[p]->v.size(), Real(0));
        }
    }
    if (m_.size() != params.size())
        throw ShapeError("adam: parameter list changed size (" + std::to_string(params.size()) +
                         " vs " + std::to_string(m_.size()) + ")");

    ++t_;
    const Real bc1 = Real(1) - Real(std::pow(double(beta1_), double(t_)));
    const Real bc2 = Real(1) - Real(std::pow(double(beta2_), double(t_)));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<Real>& t = *params[p];
        if (m_[p].size() != t.v.size())
            throw ShapeError("adam: moment shape mismatch for parameter " + std::to_string(p));
        for (std::size_t i = 0; i < t.v.size(); ++i) {
            const Real g = t.g[i];
            if (!std::isfinite(double(g)))
                throw NumericError("adam: non-finite gradient in parameter " + std::to_string(p) +
                                   " at index " + std::to_string(i));
            m_[p][i] = beta1_ * m_[p][i] + (Real(1) - beta1_) * g;
            v_[p][i] = beta2_ * v_[p][i] + (Real(1) - beta2_) * g * g;
            const Real mhat = m_[p][i] / bc1;
            const Real vhat = v_[p][i] / bc2;
            t.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            t.g[i] = Real(0);
        }
    }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace selfpitch::ad
