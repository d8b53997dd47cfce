#pragma once

// MFCK checkpoint: magic "MFCK", u32 LE tensor count, then per tensor a u16 LE
// name length, the name bytes, and an MFT1-layout payload. An optional
// trailing optimizer-state block repeats the structure with its own count.

#include <string>
#include <utility>
#include <vector>

#include "mamfsd/adam.hpp"
#include "mamfsd/model.hpp"
#include "mamfsd/tensor.hpp"

namespace mamfsd {

using NamedTensors = std::vector<std::pair<std::string, TensorF>>;

struct Checkpoint {
    NamedTensors tensors;
    NamedTensors opt;  // empty when the file carries no optimizer block
    bool has_opt = false;

    const TensorF* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const NamedTensors& tensors,
                     const NamedTensors* opt = nullptr);
Checkpoint load_checkpoint(const std::string& path);

// --- model/optimizer bridging ----------------------------------------------

template <class S>
NamedTensors params_to_tensors(const ParamSet<S>& params) {
    NamedTensors out;
    out.reserve(params.items.size());
    for (const auto& [name, t] : params.items) out.emplace_back(name, t.template cast<float>());
    return out;
}

template <class S>
void load_params(ParamSet<S>& params, const Checkpoint& ckpt) {
    check(ckpt.tensors.size() == params.items.size(),
          "checkpoint: parameter count mismatch (incompatible model config)");
    for (const auto& [name, t] : ckpt.tensors) {
        check(params.has(name), "checkpoint: unknown tensor " + name);
        Tensor<S>& dst = params.get(name);
        check(dst.dims == t.dims, "checkpoint: dims mismatch for " + name + " (vocab or config mismatch)");
        dst = t.template cast<S>();
        dst.requires_grad = true;
    }
}

template <class S>
NamedTensors adam_to_tensors(const AdamState<S>& st, const ParamSet<S>& params) {
    NamedTensors out;
    TensorF meta = TensorF::zeros({6});
    meta.data[0] = static_cast<float>(st.t);
    meta.data[1] = static_cast<float>(st.lr);
    meta.data[2] = static_cast<float>(st.beta1);
    meta.data[3] = static_cast<float>(st.beta2);
    meta.data[4] = static_cast<float>(st.eps);
    meta.data[5] = static_cast<float>(st.weight_decay);
    out.emplace_back("adam.meta", std::move(meta));
    for (size_t i = 0; i < params.items.size(); ++i) {
        out.emplace_back("adam.m." + params.items[i].first, st.m[i].template cast<float>());
        out.emplace_back("adam.v." + params.items[i].first, st.v[i].template cast<float>());
    }
    return out;
}

template <class S>
AdamState<S> adam_from_tensors(const NamedTensors& opt, const ParamSet<S>& params) {
    AdamState<S> st;
    check(opt.size() == 1 + 2 * params.items.size(), "checkpoint: optimizer block size mismatch");
    check(opt[0].first == "adam.meta" && opt[0].second.numel() == 6, "checkpoint: bad optimizer meta");
    st.t = static_cast<int64_t>(opt[0].second.data[0]);
    st.lr = opt[0].second.data[1];
    st.beta1 = opt[0].second.data[2];
    st.beta2 = opt[0].second.data[3];
    st.eps = opt[0].second.data[4];
    st.weight_decay = opt[0].second.data[5];
    for (size_t i = 0; i < params.items.size(); ++i) {
        const auto& m = opt[1 + 2 * i];
        const auto& v = opt[2 + 2 * i];
        check(m.first == "adam.m." + params.items[i].first, "checkpoint: optimizer tensor order mismatch");
        check(v.first == "adam.v." + params.items[i].first, "checkpoint: optimizer tensor order mismatch");
        st.m.push_back(m.second.cast<S>());
        st.v.push_back(v.second.cast<S>());
    }
    return st;
}

}  // namespace mamfsd
