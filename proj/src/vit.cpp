#include "vit.hpp"

#include <cmath>
#include <random>

namespace pairvit {

void ModelConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || embed_dim <= 0 || heads <= 0 || layers <= 0)
        throw UsageError("model config: all dimensions must be positive");
    if (image_size % patch_size != 0)
        throw UsageError("model config: image_size " + std::to_string(image_size) +
                         " not divisible by patch_size " + std::to_string(patch_size));
    if (embed_dim % heads != 0)
        throw UsageError("model config: embed_dim " + std::to_string(embed_dim) +
                         " not divisible by heads " + std::to_string(heads));
    if (num_classes < 2) throw UsageError("model config: need at least 2 classes");
    if (halved_dim && 2 * embed_dim != 3 * patch_size * patch_size)
        throw UsageError("model config: embed_dim " + std::to_string(embed_dim) +
                         " != 3P^2/2 for patch_size " + std::to_string(patch_size));
}

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.image_size = 64;
    c.patch_size = 8;
    c.embed_dim = 96;
    c.heads = 6;
    c.layers = 2;
    c.halved_dim = true;
    return c;
}

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.embed_dim = 384;
    c.heads = 6;
    c.layers = 12;
    c.halved_dim = true;
    return c;
}

namespace {

// Truncated normal, std 0.02, resampled beyond two sigmas.
void fill_trunc_normal(Tensor& t, std::mt19937_64& rng, real stddev) {
    std::normal_distribution<real> dist(real(0), stddev);
    for (real& v : t.data()) {
        real x = dist(rng);
        while (std::fabs(x) > 2 * stddev) x = dist(rng);
        v = x;
    }
}

}  // namespace

namespace {

ModelParams build_params(const ModelConfig& config, std::mt19937_64* rng) {
    config.validate();
    const int d = config.embed_dim;
    const int dh = config.head_dim();
    const int n_tok = config.num_patches() + 1;

    ModelParams p;
    p.config = config;

    auto weight = [&](std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        if (rng) fill_trunc_normal(t, *rng, real(0.02));
        return t;
    };
    auto zeros = [&](std::vector<int> shape) { return Tensor::zeros(std::move(shape), true); };
    auto ones = [&](std::vector<int> shape) {
        return Tensor::full(std::move(shape), real(1), true);
    };

    p.patch_w = weight({config.patch_dim(), d});
    p.patch_b = zeros({d});
    p.cls_token = zeros({1, d});
    p.pos_embed = weight({n_tok, d});
    p.blocks.resize(std::size_t(config.layers));
    for (auto& b : p.blocks) {
        for (int h = 0; h < config.heads; ++h) {
            b.q_w.push_back(weight({d, dh}));
            b.q_b.push_back(zeros({dh}));
            b.k_w.push_back(weight({d, dh}));
            b.k_b.push_back(zeros({dh}));
            b.v_w.push_back(weight({d, dh}));
            b.v_b.push_back(zeros({dh}));
        }
        b.attn_out_w = weight({d, d});
        b.attn_out_b = zeros({d});
        b.ffn1_w = weight({d, 4 * d});
        b.ffn1_b = zeros({4 * d});
        b.ffn2_w = weight({4 * d, d});
        b.ffn2_b = zeros({d});
        b.ln1_g = ones({d});
        b.ln1_b = zeros({d});
        b.ln2_g = ones({d});
        b.ln2_b = zeros({d});
    }
    p.ln_f_g = ones({d});
    p.ln_f_b = zeros({d});
    p.head_w = weight({d, config.num_classes});
    p.head_b = zeros({config.num_classes});
    return p;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x11u));
    return build_params(config, &rng);
}

ModelParams ModelParams::zeros(const ModelConfig& config) { return build_params(config, nullptr); }

std::vector<ModelParams::Named> ModelParams::named_params() const {
    std::vector<Named> out;
    out.push_back({"patch_w", patch_w});
    out.push_back({"patch_b", patch_b});
    out.push_back({"cls_token", cls_token});
    out.push_back({"pos_embed", pos_embed});
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const auto& b = blocks[l];
        const std::string prefix = "blocks." + std::to_string(l) + ".";
        for (std::size_t h = 0; h < b.q_w.size(); ++h) {
            const std::string hp = prefix + "head." + std::to_string(h) + ".";
            out.push_back({hp + "q_w", b.q_w[h]});
            out.push_back({hp + "q_b", b.q_b[h]});
            out.push_back({hp + "k_w", b.k_w[h]});
            out.push_back({hp + "k_b", b.k_b[h]});
            out.push_back({hp + "v_w", b.v_w[h]});
            out.push_back({hp + "v_b", b.v_b[h]});
        }
        out.push_back({prefix + "attn_out_w", b.attn_out_w});
        out.push_back({prefix + "attn_out_b", b.attn_out_b});
        out.push_back({prefix + "ffn1_w", b.ffn1_w});
        out.push_back({prefix + "ffn1_b", b.ffn1_b});
        out.push_back({prefix + "ffn2_w", b.ffn2_w});
        out.push_back({prefix + "ffn2_b", b.ffn2_b});
        out.push_back({prefix + "ln1_g", b.ln1_g});
        out.push_back({prefix + "ln1_b", b.ln1_b});
        out.push_back({prefix + "ln2_g", b.ln2_g});
        out.push_back({prefix + "ln2_b", b.ln2_b});
    }
    out.push_back({"ln_f_g", ln_f_g});
    out.push_back({"ln_f_b", ln_f_b});
    out.push_back({"head_w", head_w});
    out.push_back({"head_b", head_b});
    return out;
}

std::vector<Tensor> ModelParams::all_params() const {
    std::vector<Tensor> out;
    for (auto& n : named_params()) out.push_back(n.tensor);
    return out;
}

std::size_t ModelParams::param_count() const {
    std::size_t n = 0;
    for (const auto& named : named_params()) n += named.tensor.numel();
    return n;
}

Tensor patchify(const Image& image, int patch_size) {
    if (image.height % patch_size != 0 || image.width % patch_size != 0)
        throw UsageError("patchify: image " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " not divisible by patch size " +
                         std::to_string(patch_size));
    const int gy = image.height / patch_size;
    const int gx = image.width / patch_size;
    const int row_len = 3 * patch_size * patch_size;
    Tensor out = Tensor::zeros({gy * gx, row_len});
    auto& data = out.data();
    std::size_t at = 0;
    for (int py = 0; py < gy; ++py)
        for (int px = 0; px < gx; ++px)
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    for (int c = 0; c < 3; ++c)
                        data[at++] = image.at(py * patch_size + y, px * patch_size + x, c);
    return out;
}

Tensor embed(const ModelParams& params, const Image& image) {
    const auto& cfg = params.config;
    if (image.height != cfg.image_size || image.width != cfg.image_size)
        throw ShapeError("embed: image " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + " does not match configured size " +
                         std::to_string(cfg.image_size));
    Tensor patches = patchify(image, cfg.patch_size);
    Tensor projected = add_row(matmul(patches, params.patch_w), params.patch_b);
    Tensor tokens = concat_rows({params.cls_token, projected});
    return add(tokens, params.pos_embed);
}

namespace {

Tensor multi_head_attention(const BlockParams& block, const ModelConfig& cfg, const Tensor& x,
                            std::vector<Tensor>* attn_out) {
    const real inv_sqrt_dh = real(1) / std::sqrt(real(cfg.head_dim()));
    std::vector<Tensor> heads;
    std::vector<Tensor> captured;
    heads.reserve(std::size_t(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        const auto hs = std::size_t(h);
        Tensor q = add_row(matmul(x, block.q_w[hs]), block.q_b[hs]);
        Tensor k = add_row(matmul(x, block.k_w[hs]), block.k_b[hs]);
        Tensor v = add_row(matmul(x, block.v_w[hs]), block.v_b[hs]);
        Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dh);
        Tensor attn = softmax(scores);
        if (attn_out) captured.push_back(attn.detach());
        heads.push_back(matmul(attn, v));
    }
    if (attn_out) {
        const int n_tok = x.dim(0);
        std::vector<real> stacked;
        stacked.reserve(std::size_t(cfg.heads) * n_tok * n_tok);
        for (const auto& a : captured)
            stacked.insert(stacked.end(), a.data().begin(), a.data().end());
        attn_out->push_back(
            Tensor::from_data({cfg.heads, n_tok, n_tok}, std::move(stacked)));
    }
    return add_row(matmul(concat_cols(heads), block.attn_out_w), block.attn_out_b);
}

Tensor ffn_forward(const BlockParams& block, const Tensor& x) {
    Tensor hidden = gelu(add_row(matmul(x, block.ffn1_w), block.ffn1_b));
    return add_row(matmul(hidden, block.ffn2_w), block.ffn2_b);
}

}  // namespace

// Pre-LN: X' = X + MSA(LN(X)); out = X' + FFN(LN(X')).
Tensor block_forward(const BlockParams& block, const ModelConfig& config, const Tensor& tokens,
                     std::vector<Tensor>* attn_out) {
    Tensor attended = add(
        tokens, multi_head_attention(block, config, layernorm(tokens, block.ln1_g, block.ln1_b),
                                     attn_out));
    return add(attended, ffn_forward(block, layernorm(attended, block.ln2_g, block.ln2_b)));
}

BackboneOutput forward(const ModelParams& params, const Image& image, Modality modality,
                       bool capture_attn) {
    const auto& cfg = params.config;
    Tensor x = embed(params, image);
    BackboneOutput out;
    out.modality = modality;
    for (const auto& block : params.blocks)
        x = block_forward(block, cfg, x, capture_attn ? &out.attn : nullptr);
    x = layernorm(x, params.ln_f_g, params.ln_f_b);
    out.class_feature = slice_rows(x, 0, 1);
    out.patch_features = slice_rows(x, 1, cfg.num_patches() + 1);
    return out;
}

Tensor classify(const ModelParams& params, const Tensor& class_feature) {
    return add_row(matmul(class_feature, params.head_w), params.head_b);
}

Tensor forward_logits(const ModelParams& params, const Image& image, Modality modality) {
    return classify(params, forward(params, image, modality).class_feature);
}

}  // namespace pairvit
