#include "vamae/manifest.hpp"

#include <stdexcept>

namespace vamae {

nlohmann::json to_json(const ModelConfig& c) {
    return {{"image_size", c.image_size},       {"patch_size", c.patch_size},
            {"encoder_depth", c.encoder_depth}, {"encoder_dim", c.encoder_dim},
            {"encoder_heads", c.encoder_heads}, {"decoder_depth", c.decoder_depth},
            {"decoder_dim", c.decoder_dim},     {"decoder_heads", c.decoder_heads},
            {"head_hidden_dims", c.head_hidden_dims}, {"mlp_ratio", c.mlp_ratio}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto get = [&](const char* key, auto& field) {
        if (!j.contains(key)) throw std::invalid_argument(std::string("model manifest lacks '") + key + "'");
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument(std::string("model manifest field '") + key + "' has the wrong type");
        }
    };
    get("image_size", c.image_size);
    get("patch_size", c.patch_size);
    get("encoder_depth", c.encoder_depth);
    get("encoder_dim", c.encoder_dim);
    get("encoder_heads", c.encoder_heads);
    get("decoder_depth", c.decoder_depth);
    get("decoder_dim", c.decoder_dim);
    get("decoder_heads", c.decoder_heads);
    get("head_hidden_dims", c.head_hidden_dims);
    get("mlp_ratio", c.mlp_ratio);
    c.validate();
    return c;
}

}  // namespace vamae
