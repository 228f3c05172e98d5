#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"
#include "tensor.hpp"

namespace pairvit {

enum class Modality { WL, NBI };

inline const char* modality_name(Modality m) { return m == Modality::WL ? "wl" : "nbi"; }

struct ModelConfig {
    int image_size = 64;
    int patch_size = 8;
    int embed_dim = 96;
    int heads = 6;
    int layers = 2;
    int num_classes = 2;
    // Width of the spatial-attention projections; 0 means embed_dim.
    int sam_dim = 0;
    // Presets pin embed_dim to 3*P^2/2 (half the naive patch dimension).
    bool halved_dim = false;

    int grid() const { return image_size / patch_size; }
    int num_patches() const { return grid() * grid(); }
    int head_dim() const { return embed_dim / heads; }
    int patch_dim() const { return 3 * patch_size * patch_size; }
    int resolved_sam_dim() const { return sam_dim > 0 ? sam_dim : embed_dim; }

    void validate() const;

    static ModelConfig desk();   // 64x64, P=8, d=96, h=6, 2 layers
    static ModelConfig paper();  // 224x224, P=16, d=384, h=6, 12 layers
};

struct BlockParams {
    std::vector<Tensor> q_w, q_b, k_w, k_b, v_w, v_b;  // per head, d x d'
    Tensor attn_out_w, attn_out_b;                     // d x d
    Tensor ffn1_w, ffn1_b;                             // d x 4d
    Tensor ffn2_w, ffn2_b;                             // 4d x d
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

// Every learnable weight of the backbone plus the classification head.
// There is exactly one copy; both modality forwards read the same storage.
struct ModelParams {
    ModelConfig config;
    Tensor patch_w;    // 3P^2 x d
    Tensor patch_b;    // d
    Tensor cls_token;  // 1 x d, shared by both modalities
    Tensor pos_embed;  // (N+1) x d
    std::vector<BlockParams> blocks;
    Tensor ln_f_g, ln_f_b;  // external LN
    Tensor head_w, head_b;  // d x C

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);
    // Structure only, all weights zero; checkpoint loading fills it in.
    static ModelParams zeros(const ModelConfig& config);

    struct Named {
        std::string name;
        Tensor tensor;
    };
    // Fixed enumeration order; the checkpoint layout follows it.
    std::vector<Named> named_params() const;
    std::vector<Tensor> all_params() const;
    std::size_t param_count() const;
};

struct BackboneOutput {
    Modality modality = Modality::WL;
    Tensor class_feature;   // 1 x d, post external LN
    Tensor patch_features;  // N x d, post external LN
    // Per layer when captured: tensor of shape {heads, N+1, N+1}, detached.
    std::vector<Tensor> attn;
};

// Row i holds patch i (raster order) flattened row-major with channels
// innermost. The returned tensor does not require gradients.
Tensor patchify(const Image& image, int patch_size);

// Class token at index 0, positional embedding added to every token.
Tensor embed(const ModelParams& params, const Image& image);

Tensor block_forward(const BlockParams& block, const ModelConfig& config, const Tensor& tokens,
                     std::vector<Tensor>* attn_out = nullptr);

BackboneOutput forward(const ModelParams& params, const Image& image, Modality modality,
                       bool capture_attn = false);

Tensor classify(const ModelParams& params, const Tensor& class_feature);

// Convenience: forward + head in one call.
Tensor forward_logits(const ModelParams& params, const Image& image, Modality modality);

}  // namespace pairvit
