#include "vamae/model.hpp"

#include <cmath>
#include <stdexcept>

namespace vamae {

namespace {

constexpr double kInitStd = 0.02;

void check(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
}

}  // namespace

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.encoder_depth = 12;
    c.encoder_dim = 768;
    c.encoder_heads = 12;
    c.decoder_depth = 12;
    c.decoder_dim = 512;
    c.decoder_heads = 8;
    c.head_hidden_dims = {256, 128};
    return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

void ModelConfig::validate() const {
    check(patch_size > 0 && image_size > 0, "sizes must be positive");
    check(image_size % patch_size == 0, "image_size must be divisible by patch_size");
    check(grid_side() >= 2, "need at least a 2x2 patch grid");
    check(encoder_depth >= 1 && decoder_depth >= 0, "encoder needs at least one block");
    check(encoder_heads > 0 && encoder_dim % encoder_heads == 0, "encoder_dim must be divisible by encoder_heads");
    check(decoder_heads > 0 && decoder_dim % decoder_heads == 0, "decoder_dim must be divisible by decoder_heads");
    check(encoder_dim % 4 == 0 && decoder_dim % 4 == 0, "embedding dims must be divisible by 4");
    check(mlp_ratio >= 1, "mlp_ratio must be >= 1");
    for (int h : head_hidden_dims) check(h > 0, "head hidden dims must be positive");
    check((patch_size & (patch_size - 1)) == 0, "patch_size must be a power of two");
}

std::vector<double> sincos_position_table(int rows, int cols, int dim) {
    if (dim % 4 != 0) throw std::invalid_argument("position table dim must be divisible by 4");
    const int quarter = dim / 4;
    std::vector<double> table(static_cast<std::size_t>(rows) * cols * dim);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double* row = table.data() + static_cast<std::size_t>(r * cols + c) * dim;
            for (int i = 0; i < quarter; ++i) {
                const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / quarter);
                row[i] = std::sin(r * omega);
                row[quarter + i] = std::cos(r * omega);
                row[2 * quarter + i] = std::sin(c * omega);
                row[3 * quarter + i] = std::cos(c * omega);
            }
        }
    }
    return table;
}

LinearLayer::LinearLayer(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng) {
    weight = params.create(name + ".weight", {in, out}, trunc_normal(static_cast<std::size_t>(in) * out, kInitStd, rng),
                           true);
    bias = params.create(name + ".bias", {out}, std::vector<double>(out, 0.0), false);
}

LayerNormLayer::LayerNormLayer(ParameterSet& params, const std::string& name, int dim) {
    gamma = params.create(name + ".gamma", {dim}, std::vector<double>(dim, 1.0), false);
    beta = params.create(name + ".beta", {dim}, std::vector<double>(dim, 0.0), false);
}

ad::Tensor multi_head_attention(const ad::Tensor& qkv, int heads) {
    const int dim = qkv.cols() / 3;
    const int hd = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<ad::Tensor> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        auto q = ad::slice_cols(qkv, h * hd, hd);
        auto k = ad::slice_cols(qkv, dim + h * hd, hd);
        auto v = ad::slice_cols(qkv, 2 * dim + h * hd, hd);
        auto attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
        outs.push_back(ad::matmul(attn, v));
    }
    return heads == 1 ? outs.front() : ad::concat_cols(outs);
}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& name, int dim, int heads_,
                                   int mlp_ratio, std::mt19937_64& rng)
    : norm1(params, name + ".norm1", dim),
      qkv(params, name + ".attn.qkv", dim, 3 * dim, rng),
      proj(params, name + ".attn.proj", dim, dim, rng),
      norm2(params, name + ".norm2", dim),
      fc1(params, name + ".mlp.fc1", dim, mlp_ratio * dim, rng),
      fc2(params, name + ".mlp.fc2", mlp_ratio * dim, dim, rng),
      heads(heads_) {}

ad::Tensor TransformerBlock::operator()(const ad::Tensor& x) const {
    auto h = ad::add(x, proj(multi_head_attention(qkv(norm1(x)), heads)));
    return ad::add(h, fc2(ad::gelu(fc1(norm2(h)))));
}

MlpHead::MlpHead(ParameterSet& params, const std::string& name, int in, const std::vector<int>& hidden, int out,
                 std::mt19937_64& rng) {
    int prev = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        linears.emplace_back(params, name + "." + std::to_string(i), prev, hidden[i], rng);
        norms.emplace_back(params, name + ".norm" + std::to_string(i), hidden[i]);
        prev = hidden[i];
    }
    linears.emplace_back(params, name + "." + std::to_string(hidden.size()), prev, out, rng);
}

ad::Tensor MlpHead::operator()(const ad::Tensor& x) const {
    ad::Tensor h = x;
    for (std::size_t i = 0; i < norms.size(); ++i) h = ad::gelu(norms[i](linears[i](h)));
    return linears.back()(h);
}

Encoder::Encoder(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), patch_embed_(params, "encoder.patch_embed", cfg.patch_area(), cfg.encoder_dim, rng) {
    cfg_.validate();
    pos_ = ad::Tensor::constant({cfg.patch_count(), cfg.encoder_dim},
                                sincos_position_table(cfg.grid_side(), cfg.grid_side(), cfg.encoder_dim));
    for (int i = 0; i < cfg.encoder_depth; ++i) {
        blocks_.emplace_back(params, "encoder.blocks." + std::to_string(i), cfg.encoder_dim, cfg.encoder_heads,
                             cfg.mlp_ratio, rng);
    }
}

ad::Tensor Encoder::embed_visible(const ad::Tensor& patches, const MaskSelection& mask) const {
    const int n = cfg_.patch_count();
    if (patches.shape() != ad::Shape{n, cfg_.patch_area()}) {
        throw ad::ShapeError("embed_visible: patches must be " + ad::shape_str({n, cfg_.patch_area()}) + ", got " +
                             ad::shape_str(patches.shape()));
    }
    if (mask.patch_count != n) throw std::out_of_range("embed_visible: mask built for a different patch count");
    for (int i : mask.masked_indices)
        if (i < 0 || i >= n) throw std::out_of_range("embed_visible: mask index " + std::to_string(i) + " out of range");
    const auto visible = mask.visible_indices();
    if (visible.empty()) throw std::invalid_argument("embed_visible: every patch is masked");
    if (static_cast<int>(visible.size()) == n) return ad::add(patch_embed_(patches), pos_);
    return ad::add(patch_embed_(ad::gather_rows(patches, visible)), ad::gather_rows(pos_, visible));
}

ad::Tensor Encoder::encode(const ad::Tensor& tokens) const {
    if (tokens.rows() < 1) throw std::invalid_argument("encode: no tokens");
    ad::Tensor x = tokens;
    for (const auto& b : blocks_) x = b(x);
    return x;
}

VamaeModel::VamaeModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      encoder_(params_, cfg, rng_),
      decoder_embed_(params_, "decoder.embed", cfg.encoder_dim, cfg.decoder_dim, rng_) {
    mask_token_ = params_.create("decoder.mask_token", {1, cfg.decoder_dim},
                                 trunc_normal(cfg.decoder_dim, kInitStd, rng_), false);
    dec_pos_ = ad::Tensor::constant({cfg.patch_count(), cfg.decoder_dim},
                                    sincos_position_table(cfg.grid_side(), cfg.grid_side(), cfg.decoder_dim));
    for (int i = 0; i < cfg.decoder_depth; ++i) {
        decoder_blocks_.emplace_back(params_, "decoder.blocks." + std::to_string(i), cfg.decoder_dim,
                                     cfg.decoder_heads, cfg.mlp_ratio, rng_);
    }
    head_intensity_ = MlpHead(params_, "heads.intensity", cfg.decoder_dim, cfg.head_hidden_dims, cfg.patch_area(), rng_);
    head_vesselness_ = MlpHead(params_, "heads.vesselness", cfg.decoder_dim, cfg.head_hidden_dims, cfg.patch_area(), rng_);
    head_skeleton_ = MlpHead(params_, "heads.skeleton", cfg.decoder_dim, cfg.head_hidden_dims, cfg.patch_area(), rng_);
}

ad::Tensor VamaeModel::decode(const ad::Tensor& latents, const MaskSelection& mask) const {
    const int n = cfg_.patch_count();
    const auto visible = mask.visible_indices();
    if (mask.patch_count != n || latents.rows() != static_cast<int>(visible.size())) {
        throw std::invalid_argument("decode: " + std::to_string(latents.rows()) + " latent rows for " +
                                    std::to_string(visible.size()) + " visible patches");
    }
    // Row v of `pool` is the v-th visible token; the final row is the shared mask token.
    auto pool = ad::concat_rows({decoder_embed_(latents), mask_token_});
    const int mask_row = static_cast<int>(visible.size());
    std::vector<int> index(n, mask_row);
    for (int v = 0; v < mask_row; ++v) index[visible[v]] = v;
    ad::Tensor x = ad::add(ad::gather_rows(pool, index), dec_pos_);
    for (const auto& b : decoder_blocks_) x = b(x);
    return x;
}

PretrainOutput VamaeModel::reconstruction_heads(const ad::Tensor& decoded) const {
    PretrainOutput out;
    out.pred_intensity = head_intensity_(decoded);
    out.pred_vesselness = head_vesselness_(decoded);
    out.pred_skeleton = head_skeleton_(decoded);
    return out;
}

PretrainOutput VamaeModel::forward(const ad::Tensor& patches, const MaskSelection& mask) const {
    auto z = encoder_(patches, mask);
    auto out = reconstruction_heads(decode(z, mask));
    out.latents = z;
    return out;
}

MaskSelection no_mask(int patch_count) {
    MaskSelection m;
    m.patch_count = patch_count;
    m.ratio = 0.0;
    return m;
}

}  // namespace vamae
