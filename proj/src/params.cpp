#include "vamae/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vamae {

ad::Tensor ParameterSet::create(const std::string& name, ad::Shape shape, std::vector<double> init, bool decay) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    auto t = ad::Tensor::leaf(std::move(shape), std::move(init), true);
    index_[name] = params_.size();
    params_.push_back({name, t, decay});
    return t;
}

const NamedParameter* ParameterSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<NamedParameter> ParameterSet::with_prefix(const std::string& prefix) const {
    std::vector<NamedParameter> out;
    for (const auto& p : params_)
        if (p.name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void ParameterSet::set_requires_grad(const std::string& prefix, bool on) {
    for (auto& p : params_)
        if (p.name.rfind(prefix, 0) == 0) p.tensor.set_requires_grad(on);
}

std::size_t ParameterSet::scalar_count() const { return scalar_count(""); }

std::size_t ParameterSet::scalar_count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.name.rfind(prefix, 0) == 0) n += p.tensor.size();
    return n;
}

StateDict ParameterSet::state(const std::string& prefix) const {
    StateDict out;
    for (const auto& p : params_) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        out[p.name] = {p.tensor.shape(), std::vector<double>(p.tensor.value().begin(), p.tensor.value().end())};
    }
    return out;
}

void ParameterSet::load(const StateDict& state, const std::string& prefix) {
    for (auto& p : params_) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        auto it = state.find(p.name);
        if (it == state.end()) throw std::runtime_error("checkpoint is missing parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape()) {
            throw std::runtime_error("parameter '" + p.name + "' has shape " + ad::shape_str(p.tensor.shape()) +
                                     " but checkpoint stores " + ad::shape_str(it->second.shape));
        }
        auto dst = p.tensor.mutable_value();
        std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
    }
}

std::vector<double> trunc_normal(std::size_t n, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) z = normal(rng);
        v = z * std;
    }
    return out;
}

std::vector<double> he_normal(std::size_t n, int fan_in, std::mt19937_64& rng) {
    return trunc_normal(n, std::sqrt(2.0 / fan_in), rng);
}

namespace {

constexpr char kMagic[8] = {'V', 'A', 'M', 'A', 'E', 'C', 'K', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::is_integral_v<T> || std::is_same_v<T, float>);
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        os.write(reinterpret_cast<const char*>(b), sizeof(T));
    } else {
        os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

template <typename T>
T get(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(os, ckpt.manifest_json.size());
    os.write(ckpt.manifest_json.data(), static_cast<std::streamsize>(ckpt.manifest_json.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, rec] : ckpt.tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.shape.size()));
        for (int d : rec.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        for (double v : rec.values) put<float>(os, static_cast<float>(v));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error(path.string() + " is not a checkpoint archive");
    }
    Checkpoint ckpt;
    const auto manifest_len = get<std::uint64_t>(is);
    ckpt.manifest_json.resize(manifest_len);
    if (!is.read(ckpt.manifest_json.data(), static_cast<std::streamsize>(manifest_len))) {
        throw std::runtime_error("truncated checkpoint manifest");
    }
    const auto count = get<std::uint32_t>(is);
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name(get<std::uint32_t>(is), '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw std::runtime_error("truncated checkpoint");
        TensorRecord rec;
        const auto rank = get<std::uint32_t>(is);
        for (std::uint32_t r = 0; r < rank; ++r) rec.shape.push_back(static_cast<int>(get<std::uint64_t>(is)));
        rec.values.resize(ad::numel(rec.shape));
        for (auto& v : rec.values) v = get<float>(is);
        ckpt.tensors.emplace(std::move(name), std::move(rec));
    }
    return ckpt;
}

}  // namespace vamae
