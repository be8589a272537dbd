#pragma once

#include <cmath>
#include <vector>

#include "fairlink/tensor.hpp"

namespace fairlink {

// Adaptive-moment first-order optimizer over a fixed list of tensors.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->rows(), p->cols());
                v_.emplace_back(p->rows(), p->cols());
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            const Tensor& g = grads[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
                p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace fairlink
