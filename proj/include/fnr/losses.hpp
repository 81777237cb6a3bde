#pragma once

#include "fnr/profile.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

template <typename T>
struct LossReport {
    T normal_loss = T(0);
    T adv_loss = T(0);
    T total = T(0);
    T lambda_dcp = T(1e-4);
};

// Mean over valid pixels of (1 - n_gt . n_pred). Both fields are expected to
// carry unit normals on valid pixels; the result lies in [0, 2]. `mask` is an
// optional constant [B,1,H,W] tensor of 0/1 weights; without it the mean runs
// over all H*W pixels.
template <typename T>
Tensor<T> normal_reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError("normal loss: prediction shape " + shape_to_string(pred.shape()) +
                         " does not match ground truth " + shape_to_string(gt.shape()));
    }
    if (pred.ndim() != 4 || pred.dim(1) != 3) {
        throw ShapeError("normal loss: expected [B,3,H,W] fields, got " + shape_to_string(pred.shape()));
    }
    auto one_minus_dot = add_scalar(neg(sum_axis(mul(pred, gt), 1)), T(1)); // [B,1,H,W]
    if (!mask.defined()) {
        return mean_all(one_minus_dot);
    }
    if (mask.shape() != one_minus_dot.shape()) {
        throw ShapeError("normal loss: mask shape " + shape_to_string(mask.shape()) +
                         " must be [B,1,H,W]");
    }
    T count = T(0);
    for (T v : mask.values()) {
        count += v;
    }
    if (count <= T(0)) {
        throw Error("normal loss: empty validity mask");
    }
    return mul_scalar(sum_all(mul(one_minus_dot, mask)), T(1) / count);
}

template <typename T>
Tensor<T> normal_reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    return normal_reconstruction_loss(pred, gt, Tensor<T>{});
}

// Discriminator objective on raw realness scores [B,1].
template <typename T>
Tensor<T> discriminator_adv_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores,
                                 AdvLossKind kind = AdvLossKind::Hinge) {
    if (kind == AdvLossKind::Hinge) {
        auto real_term = mean_all(relu(add_scalar(neg(real_scores), T(1))));
        auto fake_term = mean_all(relu(add_scalar(fake_scores, T(1))));
        return add(real_term, fake_term);
    }
    auto real_term = mean_all(softplus(neg(real_scores)));
    auto fake_term = mean_all(softplus(fake_scores));
    return add(real_term, fake_term);
}

// Generator objective on fake scores [B,1].
template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& fake_scores, AdvLossKind kind = AdvLossKind::Hinge) {
    if (kind == AdvLossKind::Hinge) {
        return neg(mean_all(fake_scores));
    }
    return mean_all(softplus(neg(fake_scores)));
}

// Stage-1 objective: normal reconstruction plus lambda-weighted adversarial
// term.
template <typename T>
Tensor<T> stage1_total(const Tensor<T>& normal_loss, const Tensor<T>& gen_adv_loss, T lambda_dcp) {
    return add(normal_loss, mul_scalar(gen_adv_loss, lambda_dcp));
}

} // namespace fnr
