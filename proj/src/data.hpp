#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "image.hpp"

namespace pairvit {

struct BBox {
    int x = 0, y = 0, w = 0, h = 0;
};

// One training record: white-light and narrow-band renderings of the same
// scene, sharing one label. Label 1 = adenomatous, 0 = hyperplastic.
struct PairedSample {
    Image wl;
    Image nbi;
    int label = 0;
    std::string subject_id;
    std::optional<BBox> bbox_wl;
    std::optional<BBox> bbox_nbi;
};

// CSV manifest with header wl_path,nbi_path,label,subject_id,bbox_wl,bbox_nbi
// (bbox fields x:y:w:h, empty allowed). Image paths are relative to the
// manifest's directory. Strict mode aborts on the first bad row; lenient
// mode warns and skips it. Returned order is manifest order.
std::vector<PairedSample> load_manifest(const std::string& path, bool strict = true);

// Writes <dir>/manifest.csv plus wl_NNNN.ppm / nbi_NNNN.ppm, the same layout
// load_manifest ingests.
void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples);

struct FoldSplit {
    int k = 0;
    std::vector<std::vector<std::string>> val_subjects;  // one set per fold

    bool is_val(int fold, const std::string& subject) const;
};

// Subjects shuffled by seed, dealt round-robin into k folds. Fold i's
// subjects form its validation set; everything else trains.
FoldSplit subject_kfold(const std::vector<PairedSample>& samples, int k, std::uint64_t seed);

std::vector<int> val_indices(const FoldSplit& split, int fold,
                             const std::vector<PairedSample>& samples);
std::vector<int> train_indices(const FoldSplit& split, int fold,
                               const std::vector<PairedSample>& samples);

// Per-modality bbox crop, then bilinear resize to out_size. Missing bbox
// passes through (resize only) with a warning.
PairedSample crop_bbox(const PairedSample& sample, int out_size);

// Random resized crop (area scale [0.7,1], log-uniform aspect [3/4,4/3])
// plus horizontal flip at p=0.5. One draw is applied identically to both
// modalities so spatial correspondence between them survives; the local
// alignment loss depends on that. Every call verifies the pair stayed in
// sync and bumps augment_sync_checks().
PairedSample augment(const PairedSample& sample, std::mt19937_64& rng);

std::atomic<std::uint64_t>& augment_sync_checks();

struct SyntheticGenConfig {
    int image_size = 64;
    int pairs_per_class = 200;
    int subjects = 40;
    std::uint64_t seed = 7;
    // Lesion texture amplitude in the NBI rendering; the WL rendering scales
    // it by wl_attenuation and adds Gaussian pixel noise, which is what makes
    // the label easy to read from NBI and hard from WL.
    real nbi_contrast = 0.45;
    real wl_attenuation = 0.18;
    real wl_noise = 0.06;
};

// Procedural stand-in for a paired two-modality dataset: same scene per
// pair (background field + elliptical lesion + class-dependent texture,
// stripes vs spots), modalities differing only in texture contrast and
// noise. Pure function of the config.
std::vector<PairedSample> generate_synthetic(const SyntheticGenConfig& config);

}  // namespace pairvit
