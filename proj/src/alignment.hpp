#pragma once

#include <iosfwd>

#include "vit.hpp"

namespace pairvit {

// Ablation wiring. Live loss terms grow strictly:
//   WlOnly: cls_wl | Cga: + cls_nbi, global_align | CgaSam: + local_align.
enum class Mode { WlOnly, Cga, CgaSam };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

// Spatial-attention projections. Training-only: a pruned checkpoint carries
// none of these, and inference never touches them.
struct SamParams {
    Tensor q_w;  // d x d_q
    Tensor k_w;  // d x d_q

    static SamParams init(const ModelConfig& config, std::uint64_t seed);
    std::vector<ModelParams::Named> named_params() const;
};

// Global-to-local affinity of one modality: softmax over the N patch logits
// (c W_Q)(F W_K)^T. Entries are nonnegative and sum to 1.
struct ResponseMap {
    Modality modality = Modality::WL;
    Tensor values;  // 1 x N

    bool is_valid_distribution(real tol = 1e-6) const;
};

// 1 - cos(c_w, c_n) on the post-external-LN class tokens. Range [0, 2].
Tensor cga_loss(const Tensor& c_w, const Tensor& c_n);

// Eq-literal form: no scaling inside the softmax.
ResponseMap spatial_attention(const Tensor& patch_features, const Tensor& class_feature,
                              const SamParams& sam, Modality modality);

// lambda * (1 - cos(R_w, R_n)). Range [0, lambda] for valid maps.
Tensor local_loss(const ResponseMap& r_w, const ResponseMap& r_n, real lambda);

struct LossBreakdown {
    real cls_wl = 0;
    real cls_nbi = 0;
    real global_align = 0;
    real local_align = 0;
    real total = 0;
};

struct TotalLoss {
    Tensor value;  // graph scalar, backward target
    LossBreakdown parts;
};

// Four-part training objective. Terms a mode excludes are identically zero
// in the breakdown and absent from the graph. NBI-side inputs may be left
// undefined in WlOnly mode, and the response maps in non-SAM modes.
TotalLoss total_loss(const Tensor& logits_w, const Tensor& logits_n, int label,
                     const Tensor& c_w, const Tensor& c_n, const ResponseMap* r_w,
                     const ResponseMap* r_n, real lambda, Mode mode);

// Plain-text rows "index probability", one per patch.
void write_response_map(std::ostream& os, const ResponseMap& map);

}  // namespace pairvit
