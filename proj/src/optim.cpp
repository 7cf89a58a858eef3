#include "vamae/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vamae {

void AdamConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("adam betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
}

Adam::Adam(std::vector<NamedParameter> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        if (!p.tensor.has_grad()) continue;
        auto w = p.tensor.mutable_value();
        auto g = p.tensor.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        const double decay = p.decay ? lr * cfg_.weight_decay : 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= decay * w[i];
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace vamae
