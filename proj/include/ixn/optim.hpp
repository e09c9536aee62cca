#pragma once

#include <cmath>
#include <vector>

#include "ixn/autodiff.hpp"

namespace ixn {

/// SGD with optional momentum. Parameters without an accumulated gradient
/// are skipped.
template <typename T>
class SGD {
public:
    explicit SGD(std::vector<Parameter<T>*> params, T lr, T momentum = T(0))
        : params_(std::move(params)), lr_(lr), momentum_(momentum) {
        if (momentum_ != T(0))
            for (auto* p : params_) velocity_.emplace_back(p->tensor().shape());
    }

    T lr() const { return lr_; }
    void set_lr(T lr) { lr_ = lr; }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto* p = params_[i];
            if (!p->var.has_grad()) continue;
            const auto& g = p->var.grad();
            auto& w = p->tensor();
            if (momentum_ != T(0)) {
                auto& v = velocity_[i];
                for (std::int64_t j = 0; j < w.numel(); ++j) {
                    v[j] = momentum_ * v[j] + g[j];
                    w[j] -= lr_ * v[j];
                }
            } else {
                for (std::int64_t j = 0; j < w.numel(); ++j) w[j] -= lr_ * g[j];
            }
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->var.zero_grad();
    }

private:
    std::vector<Parameter<T>*> params_;
    T lr_, momentum_;
    std::vector<Tensor<T>> velocity_;
};

/// Adam with bias correction, defaults beta1=0.9 beta2=0.999 eps=1e-8.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Parameter<T>*> params, T lr, T beta1 = T(0.9),
                  T beta2 = T(0.999), T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.emplace_back(p->tensor().shape());
            v_.emplace_back(p->tensor().shape());
        }
    }

    T lr() const { return lr_; }
    void set_lr(T lr) { lr_ = lr; }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto* p = params_[i];
            if (!p->var.has_grad()) continue;
            const auto& g = p->var.grad();
            auto& w = p->tensor();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::int64_t j = 0; j < w.numel(); ++j) {
                m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
                w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
            }
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->var.zero_grad();
    }

private:
    std::vector<Parameter<T>*> params_;
    T lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

}  // namespace ixn
