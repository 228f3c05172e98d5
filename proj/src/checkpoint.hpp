#pragma once

#include <optional>
#include <string>

#include "alignment.hpp"
#include "vit.hpp"

namespace pairvit {

// Checkpoint file, little-endian throughout:
//   bytes 0..7   magic "PVITCKP1"
//   int32 x 9    format version (1), image_size, patch_size, embed_dim,
//                heads, layers, num_classes, sam_dim (0 = embed_dim),
//                has_sam (0/1)
//   payload      every tensor in named_params() order as raw IEEE-754
//                float64 arrays; when has_sam, sam.q_w and sam.k_w follow.
// A plain-text sidecar <path>.manifest.txt lists name, shape, byte offset
// and element count per tensor.
struct LoadedModel {
    ModelParams params;
    std::optional<SamParams> sam;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const SamParams* sam = nullptr);

LoadedModel load_checkpoint(const std::string& path);

// Rewrites a checkpoint with the alignment projections removed.
void strip_checkpoint(const std::string& in_path, const std::string& out_path);

}  // namespace pairvit
