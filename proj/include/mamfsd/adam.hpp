#pragma once

#include <cmath>
#include <vector>

#include "mamfsd/error.hpp"
#include "mamfsd/tensor.hpp"

namespace mamfsd {

// Adam with bias correction and decoupled weight decay. The decay is applied
// as p -= lr*wd*p before the moment update; moment math runs in 64-bit and
// the moments are stored back in S.
template <class S>
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    int64_t t = 0;
    std::vector<Tensor<S>> m;
    std::vector<Tensor<S>> v;

    void init(const std::vector<Tensor<S>*>& params) {
        m.clear();
        v.clear();
        for (const Tensor<S>* p : params) {
            m.push_back(Tensor<S>::zeros(p->dims));
            v.push_back(Tensor<S>::zeros(p->dims));
        }
    }
};

template <class S>
void adam_step(const std::vector<Tensor<S>*>& params, const std::vector<const Tensor<S>*>& grads,
               AdamState<S>& state) {
    check(state.lr > 0.0, "adam_step: lr must be positive");
    check(params.size() == grads.size(), "adam_step: params/grads length mismatch");
    if (state.m.empty()) state.init(params);
    check(state.m.size() == params.size(), "adam_step: state size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<S>& p = *params[pi];
        const Tensor<S>& g = *grads[pi];
        check(p.same_dims(g), "adam_step: grad dims mismatch");
        check(p.same_dims(state.m[pi]), "adam_step: moment dims mismatch");
        if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient");
        Tensor<S>& m = state.m[pi];
        Tensor<S>& v = state.v[pi];
        for (size_t i = 0; i < p.data.size(); ++i) {
            double gi = static_cast<double>(g.data[i]);
            double pv = static_cast<double>(p.data[i]);
            if (state.weight_decay != 0.0) pv -= state.lr * state.weight_decay * pv;
            double mi = state.beta1 * static_cast<double>(m.data[i]) + (1.0 - state.beta1) * gi;
            double vi = state.beta2 * static_cast<double>(v.data[i]) + (1.0 - state.beta2) * gi * gi;
            m.data[i] = static_cast<S>(mi);
            v.data[i] = static_cast<S>(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            p.data[i] = static_cast<S>(pv - state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace mamfsd
