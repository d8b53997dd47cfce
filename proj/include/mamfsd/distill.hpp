#pragma once

// Frame-level self-distillation: stage i+1 features (gradient-detached) teach
// the D-block projection of stage i, for i = 1..3, with MSE losses combined
// as alpha*L1 + beta*L2 + lambda*L3.

#include <array>

#include "mamfsd/model.hpp"
#include "mamfsd/ops.hpp"

namespace mamfsd {

struct DistillWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double lambda = 1.0;

    void validate() const {
        check(alpha >= 0 && beta >= 0 && lambda >= 0, "distill: weights must be nonnegative");
    }

    bool all_zero() const { return alpha == 0 && beta == 0 && lambda == 0; }
};

template <class S>
struct DistillResult {
    VarId total = -1;                        // alpha*L1 + beta*L2 + lambda*L3
    std::array<VarId, 3> terms{-1, -1, -1};  // raw L1..L3
    std::array<VarId, 3> weighted{-1, -1, -1};  // alpha*L1, beta*L2, lambda*L3
};

template <class S>
DistillResult<S> self_distill_loss(Tape<S>& t, const Model<S>& model, const ModelForward<S>& fwd,
                                   const DistillWeights& w) {
    w.validate();
    DistillResult<S> out;
    const double coef[3] = {w.alpha, w.beta, w.lambda};
    VarId total = -1;
    for (int i = 1; i <= 3; ++i) {
        VarId student = dblock_project(t, model, fwd, i);
        VarId teacher = ops::detach(t, fwd.stage[static_cast<size_t>(i)]);
        check(t.val(teacher).same_dims(t.val(student)), "distill: shape mismatch after projection");
        VarId li = ops::mse(t, teacher, student);
        out.terms[static_cast<size_t>(i - 1)] = li;
        VarId scaled = ops::scale(t, li, static_cast<S>(coef[i - 1]));
        out.weighted[static_cast<size_t>(i - 1)] = scaled;
        total = total < 0 ? scaled : ops::add(t, total, scaled);
    }
    out.total = total;
    return out;
}

// Exact sum; both inputs must be finite scalars.
template <class S>
VarId total_loss(Tape<S>& t, VarId task_loss, VarId distill) {
    check(t.val(task_loss).numel() == 1 && t.val(distill).numel() == 1,
          "total_loss: scalars required");
    if (!std::isfinite(static_cast<double>(t.val(task_loss).data[0])) ||
        !std::isfinite(static_cast<double>(t.val(distill).data[0])))
        throw NumericError("total_loss: non-finite input");
    return ops::add(t, task_loss, distill);
}

// Per-batch loss terms as stored values, for the training log.
struct LossReport {
    double loss_total = 0;
    double loss_task = 0;
    double loss_mse[3] = {0, 0, 0};
    double alpha = 1.0, beta = 1.0, lambda = 1.0;
};

}  // namespace mamfsd
