#pragma once

#include <random>
#include <string>
#include <vector>

#include "vamae/masking.hpp"
#include "vamae/params.hpp"
#include "vamae/tensor.hpp"

namespace vamae {

struct ModelConfig {
    int image_size = 64;
    int patch_size = 8;
    int encoder_depth = 4;
    int encoder_dim = 64;
    int encoder_heads = 4;
    int decoder_depth = 2;
    int decoder_dim = 32;
    int decoder_heads = 4;
    std::vector<int> head_hidden_dims{32};
    int mlp_ratio = 4;

    /// ViT-Base encoder, 12x512 decoder, heads 512->256->128->256 at 224x224 / P=16.
    static ModelConfig full();
    static ModelConfig desk();

    int grid_side() const { return image_size / patch_size; }
    int patch_count() const { return grid_side() * grid_side(); }
    int patch_area() const { return patch_size * patch_size; }
    PatchGrid grid() const { return PatchGrid{patch_size, grid_side(), grid_side()}; }

    void validate() const;
};

/// Fixed 2-D sine-cosine table [rows*cols, dim]; first half encodes the row,
/// second half the column.
std::vector<double> sincos_position_table(int rows, int cols, int dim);

struct LinearLayer {
    ad::Tensor weight;  // [in, out]
    ad::Tensor bias;    // [out]

    LinearLayer() = default;
    LinearLayer(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng);
    ad::Tensor operator()(const ad::Tensor& x) const { return ad::linear(x, weight, bias); }
};

struct LayerNormLayer {
    ad::Tensor gamma;
    ad::Tensor beta;

    LayerNormLayer() = default;
    LayerNormLayer(ParameterSet& params, const std::string& name, int dim);
    ad::Tensor operator()(const ad::Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
};

ad::Tensor multi_head_attention(const ad::Tensor& qkv, int heads);

/// Pre-norm transformer block.
struct TransformerBlock {
    LayerNormLayer norm1;
    LinearLayer qkv;
    LinearLayer proj;
    LayerNormLayer norm2;
    LinearLayer fc1;
    LinearLayer fc2;
    int heads = 1;

    TransformerBlock() = default;
    TransformerBlock(ParameterSet& params, const std::string& name, int dim, int heads, int mlp_ratio,
                     std::mt19937_64& rng);
    ad::Tensor operator()(const ad::Tensor& x) const;
};

/// Linear -> LayerNorm -> GELU per hidden layer, then a final Linear.
struct MlpHead {
    std::vector<LinearLayer> linears;
    std::vector<LayerNormLayer> norms;

    MlpHead() = default;
    MlpHead(ParameterSet& params, const std::string& name, int in, const std::vector<int>& hidden, int out,
            std::mt19937_64& rng);
    ad::Tensor operator()(const ad::Tensor& x) const;
};

/// Patch embedding + transformer stack over visible tokens. Parameter names
/// are prefixed "encoder.".
class Encoder {
public:
    Encoder(ParameterSet& params, const ModelConfig& cfg, std::mt19937_64& rng);

    /// patches: [N, P^2]. Returns [visible, encoder_dim] in ascending patch order.
    ad::Tensor embed_visible(const ad::Tensor& patches, const MaskSelection& mask) const;
    ad::Tensor encode(const ad::Tensor& tokens) const;
    ad::Tensor operator()(const ad::Tensor& patches, const MaskSelection& mask) const {
        return encode(embed_visible(patches, mask));
    }

    const ad::Tensor& position_table() const { return pos_; }

private:
    ModelConfig cfg_;
    LinearLayer patch_embed_;
    ad::Tensor pos_;
    std::vector<TransformerBlock> blocks_;
};

struct PretrainOutput {
    ad::Tensor pred_intensity;   // [N, P^2]
    ad::Tensor pred_vesselness;  // [N, P^2] logits
    ad::Tensor pred_skeleton;    // [N, P^2] logits
    ad::Tensor latents;          // [visible, encoder_dim]
};

/// Asymmetric masked autoencoder with three reconstruction heads.
class VamaeModel {
public:
    VamaeModel(const ModelConfig& cfg, std::uint64_t seed);
    VamaeModel(const VamaeModel&) = delete;
    VamaeModel& operator=(const VamaeModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    const Encoder& encoder() const { return encoder_; }

    ad::Tensor embed_visible(const ad::Tensor& patches, const MaskSelection& mask) const {
        return encoder_.embed_visible(patches, mask);
    }
    ad::Tensor encode(const ad::Tensor& tokens) const { return encoder_.encode(tokens); }
    /// Z: [visible, encoder_dim] -> [N, decoder_dim].
    ad::Tensor decode(const ad::Tensor& latents, const MaskSelection& mask) const;
    PretrainOutput reconstruction_heads(const ad::Tensor& decoded) const;

    PretrainOutput forward(const ad::Tensor& patches, const MaskSelection& mask) const;

    const ad::Tensor& mask_token() const { return mask_token_; }
    const ad::Tensor& decoder_position_table() const { return dec_pos_; }

private:
    ModelConfig cfg_;
    ParameterSet params_;
    std::mt19937_64 rng_;
    Encoder encoder_;
    LinearLayer decoder_embed_;
    ad::Tensor mask_token_;
    ad::Tensor dec_pos_;
    std::vector<TransformerBlock> decoder_blocks_;
    MlpHead head_intensity_;
    MlpHead head_vesselness_;
    MlpHead head_skeleton_;
};

/// Mask with no hidden patches.
MaskSelection no_mask(int patch_count);

}  // namespace vamae
