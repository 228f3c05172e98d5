#include "alignment.hpp"

#include <cmath>
#include <ostream>
#include <random>

namespace pairvit {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::WlOnly: return "wl_only";
        case Mode::Cga: return "cga";
        case Mode::CgaSam: return "cga_sam";
    }
    return "?";
}

Mode mode_from_name(const std::string& name) {
    if (name == "wl_only") return Mode::WlOnly;
    if (name == "cga") return Mode::Cga;
    if (name == "cga_sam") return Mode::CgaSam;
    throw UsageError("unknown mode '" + name + "' (wl_only|cga|cga_sam)");
}

SamParams SamParams::init(const ModelConfig& config, std::uint64_t seed) {
    const int d = config.embed_dim;
    const int dq = config.resolved_sam_dim();
    std::mt19937_64 rng(derive_seed(seed, 0x5a17u));
    std::normal_distribution<real> dist(real(0), real(0.02));
    auto weight = [&]() {
        Tensor t = Tensor::zeros({d, dq}, true);
        for (real& v : t.data()) {
            real x = dist(rng);
            while (std::fabs(x) > real(0.04)) x = dist(rng);
            v = x;
        }
        return t;
    };
    SamParams sam;
    sam.q_w = weight();
    sam.k_w = weight();
    return sam;
}

std::vector<ModelParams::Named> SamParams::named_params() const {
    return {{"sam.q_w", q_w}, {"sam.k_w", k_w}};
}

bool ResponseMap::is_valid_distribution(real tol) const {
    real sum = 0;
    for (real v : values.data()) {
        if (v < 0 || !std::isfinite(double(v))) return false;
        sum += v;
    }
    return std::fabs(sum - real(1)) <= tol;
}

Tensor cga_loss(const Tensor& c_w, const Tensor& c_n) {
    return add(Tensor::scalar(real(1)), scale(cosine_similarity(c_w, c_n), real(-1)));
}

ResponseMap spatial_attention(const Tensor& patch_features, const Tensor& class_feature,
                              const SamParams& sam, Modality modality) {
    Tensor query = matmul(class_feature, sam.q_w);       // 1 x d_q
    Tensor keys = matmul(patch_features, sam.k_w);       // N x d_q
    Tensor logits = matmul(query, transpose(keys));      // 1 x N
    ResponseMap map;
    map.modality = modality;
    map.values = softmax(logits);
    return map;
}

Tensor local_loss(const ResponseMap& r_w, const ResponseMap& r_n, real lambda) {
    if (r_w.values.numel() != r_n.values.numel())
        throw ShapeError("local_loss: response maps disagree, " + shape_str(r_w.values.shape()) +
                         " vs " + shape_str(r_n.values.shape()));
    return scale(add(Tensor::scalar(real(1)),
                     scale(cosine_similarity(r_w.values, r_n.values), real(-1))),
                 lambda);
}

TotalLoss total_loss(const Tensor& logits_w, const Tensor& logits_n, int label, const Tensor& c_w,
                     const Tensor& c_n, const ResponseMap* r_w, const ResponseMap* r_n,
                     real lambda, Mode mode) {
    TotalLoss out;
    Tensor cls_wl = cross_entropy_logits(logits_w, {label});
    out.parts.cls_wl = cls_wl.item();
    Tensor total = cls_wl;

    if (mode != Mode::WlOnly) {
        Tensor cls_nbi = cross_entropy_logits(logits_n, {label});
        Tensor global_align = cga_loss(c_w, c_n);
        out.parts.cls_nbi = cls_nbi.item();
        out.parts.global_align = global_align.item();
        total = add(add(total, cls_nbi), global_align);
    }
    if (mode == Mode::CgaSam) {
        if (!r_w || !r_n) throw UsageError("total_loss: cga_sam mode needs both response maps");
        Tensor local_align = local_loss(*r_w, *r_n, lambda);
        out.parts.local_align = local_align.item();
        total = add(total, local_align);
    }
    out.value = total;
    out.parts.total = total.item();
    return out;
}

void write_response_map(std::ostream& os, const ResponseMap& map) {
    const auto& v = map.values.data();
    for (std::size_t i = 0; i < v.size(); ++i) os << i << " " << double(v[i]) << "\n";
}

}  // namespace pairvit
