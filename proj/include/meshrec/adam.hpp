#pragma once

// Bias-corrected Adam (Kingma & Ba form: eps outside the root).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "meshrec/tape.hpp"

namespace meshrec {

template <class Real>
struct AdamState {
    int64_t step = 0;
    std::vector<Tensor<Real>> m, v;

    static AdamState init(const std::vector<Parameter<Real>*>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto* p : params) {
            s.m.emplace_back(p->value.shape());
            s.v.emplace_back(p->value.shape());
        }
        return s;
    }
};

template <class Real>
void adam_step(const std::vector<Parameter<Real>*>& params, AdamState<Real>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != state.m.size())
        throw std::invalid_argument("adam_step: state does not match parameter list");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<Real>& p = *params[pi];
        if (!p.grad.same_shape(p.value))
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + p.name);
        Tensor<Real>& m = state.m[pi];
        Tensor<Real>& v = state.v[pi];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
            const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.value[i] = static_cast<Real>(static_cast<double>(p.value[i]) -
                                           lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

}  // namespace meshrec
