#pragma once

#include <cstdint>
#include <vector>

#include "vamae/params.hpp"

namespace vamae {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled decay, applied only to parameters flagged `decay`.
    double weight_decay = 0.0;

    static AdamConfig adamw_default() { return {0.9, 0.95, 1e-8, 0.05}; }
    void validate() const;
};

/// Adam / AdamW over a fixed list of parameters. Parameters without a
/// gradient on a given step are left untouched and their moments do not advance.
class Adam {
public:
    Adam(std::vector<NamedParameter> params, AdamConfig cfg);

    void step(double lr);
    void zero_grad();

    std::int64_t steps() const { return t_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }

private:
    std::vector<NamedParameter> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace vamae
