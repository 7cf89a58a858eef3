#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vamae/tensor.hpp"

namespace vamae {

struct NamedParameter {
    std::string name;
    ad::Tensor tensor;
    /// Subject to decoupled weight decay (matrices and kernels, not biases or norms).
    bool decay = true;
};

struct TensorRecord {
    ad::Shape shape;
    std::vector<double> values;
};
using StateDict = std::map<std::string, TensorRecord>;

/// Registry of trainable tensors with unique names.
class ParameterSet {
public:
    ad::Tensor create(const std::string& name, ad::Shape shape, std::vector<double> init, bool decay);

    const std::vector<NamedParameter>& all() const { return params_; }
    const NamedParameter* find(const std::string& name) const;
    std::vector<NamedParameter> with_prefix(const std::string& prefix) const;

    void zero_grad();
    void set_requires_grad(const std::string& prefix, bool on);
    std::size_t scalar_count() const;
    std::size_t scalar_count(const std::string& prefix) const;

    StateDict state(const std::string& prefix = "") const;
    /// Copies values for every parameter under `prefix`; throws when a tensor
    /// is missing or its shape differs.
    void load(const StateDict& state, const std::string& prefix = "");

private:
    std::vector<NamedParameter> params_;
    std::map<std::string, std::size_t> index_;
};

std::vector<double> trunc_normal(std::size_t n, double std, std::mt19937_64& rng);
std::vector<double> he_normal(std::size_t n, int fan_in, std::mt19937_64& rng);

/// Single-file archive: magic, JSON manifest, then per tensor
/// name / rank / dims / little-endian float32 payload.
struct Checkpoint {
    std::string manifest_json;
    StateDict tensors;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vamae
