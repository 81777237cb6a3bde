#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fnr/tensor.hpp"

namespace fnr {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Adam with bias correction. Defaults follow the common convention
// (beta1=0.9, beta2=0.999, eps=1e-8).
template <typename T>
class Adam {
public:
    Adam() = default;

    explicit Adam(ParamList<T> params, T lr = T(1e-4), T beta1 = T(0.9), T beta2 = T(0.999),
                  T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        slots_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto n = static_cast<std::size_t>(params_[i].tensor.numel());
            slots_[i].m.assign(n, T(0));
            slots_[i].v.assign(n, T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.tensor.zero_grad();
        }
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].tensor;
            if (!p.has_grad()) {
                continue;
            }
            auto values = p.values_mut();
            const auto grad = p.grad();
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (std::size_t k = 0; k < values.size(); ++k) {
                const T g = grad[k];
                m[k] = beta1_ * m[k] + (T(1) - beta1_) * g;
                v[k] = beta2_ * v[k] + (T(1) - beta2_) * g * g;
                const T m_hat = m[k] / bc1;
                const T v_hat = v[k] / bc2;
                values[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
            }
        }
    }

    const ParamList<T>& params() const { return params_; }
    std::int64_t iteration_count() const { return t_; }
    T learning_rate() const { return lr_; }

    // Checkpoint access: first/second moment buffers by parameter index.
    std::vector<T>& moment1(std::size_t i) { return slots_[i].m; }
    std::vector<T>& moment2(std::size_t i) { return slots_[i].v; }
    const std::vector<T>& moment1(std::size_t i) const { return slots_[i].m; }
    const std::vector<T>& moment2(std::size_t i) const { return slots_[i].v; }
    void set_iteration_count(std::int64_t t) { t_ = t; }

private:
    struct Slot {
        std::vector<T> m;
        std::vector<T> v;
    };

    ParamList<T> params_;
    std::vector<Slot> slots_;
    std::int64_t t_ = 0;
    T lr_ = T(1e-4);
    T beta1_ = T(0.9);
    T beta2_ = T(0.999);
    T eps_ = T(1e-8);
};

} // namespace fnr
