#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "alignment.hpp"
#include "data.hpp"
#include "vit.hpp"

namespace pairvit {

struct TrainConfig {
    real lr0 = 1e-3;
    real momentum = 0.9;
    real weight_decay = 5e-5;
    int batch_size = 16;
    int max_epochs = 500;
    real lambda = 0.3;
    Mode mode = Mode::CgaSam;
    std::uint64_t seed = 42;
    int folds = 5;
    int jobs = 0;  // parallel fold workers in run_experiment, 0 = auto
    ModelConfig model = ModelConfig::desk();
};

// eta(t) = lr0 * (1 + cos(pi t / T)) / 2, stepped per epoch, no warmup.
real cosine_lr(int epoch, int total_epochs, real lr0);

// Classic SGD: g += wd * p; v = momentum * v + g; p -= lr * v.
class Sgd {
  public:
    Sgd(std::vector<Tensor> params, real momentum, real weight_decay);
    void zero_grad();
    void step(real lr);
    const std::vector<Tensor>& params() const { return params_; }

  private:
    std::vector<Tensor> params_;
    real momentum_;
    real weight_decay_;
    std::vector<std::vector<real>> velocity_;
};

struct EpochReport {
    int epoch = 0;
    real lr = 0;
    LossBreakdown mean_loss;
    real val_accuracy = 0;
};

std::string epoch_csv_header();
std::string to_csv(const EpochReport& report);

// One model + optimizer, stepping on paired batches with the mode's live
// loss terms. Checks per step that the breakdown is finite, sums to the
// total, and that the alignment terms stay in range.
class Trainer {
  public:
    Trainer(const TrainConfig& config, std::uint64_t init_seed);

    LossBreakdown train_step(const std::vector<const PairedSample*>& batch, real lr);

    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }
    const std::optional<SamParams>& sam() const { return sam_; }
    const TrainConfig& config() const { return config_; }
    std::int64_t steps_done() const { return steps_; }

  private:
    TrainConfig config_;
    ModelParams params_;
    std::optional<SamParams> sam_;
    Sgd opt_;
    std::int64_t steps_ = 0;
};

// Fraction of correct argmax predictions on WL images only, no
// augmentation. Samples must already be at model resolution.
real evaluate(const ModelParams& params, const std::vector<PairedSample>& samples,
              const std::vector<int>& indices);
real evaluate(const ModelParams& params, const std::vector<PairedSample>& samples);

struct FoldResult {
    std::vector<EpochReport> epochs;
    real best_val_accuracy = 0;
    int best_epoch = -1;
    // Deep value snapshots at the best validation epoch, named_params order.
    std::vector<std::vector<real>> best_params;
    std::vector<std::vector<real>> best_sam;
};

void restore_snapshot(ModelParams& params, SamParams* sam,
                      const std::vector<std::vector<real>>& param_data,
                      const std::vector<std::vector<real>>& sam_data);

// Fresh init, bbox-crop preprocessing, per-epoch pair-synchronized
// augmentation, cosine schedule, best-epoch selection by val accuracy.
FoldResult train_fold(const TrainConfig& config, const std::vector<PairedSample>& dataset,
                      const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                      std::uint64_t run_seed, std::ostream* epoch_log = nullptr);

struct ExperimentResult {
    std::vector<Mode> modes;
    std::vector<std::uint64_t> seeds;
    int folds = 0;
    // acc[mode][seed][fold] = best-epoch val accuracy of that run
    std::vector<std::vector<std::vector<real>>> acc;

    real fold_mean(std::size_t mode_idx, int fold) const;  // over seeds
    real mode_mean(std::size_t mode_idx) const;            // over seeds and folds
    std::string report_csv() const;  // method,fold1..foldK,mean
};

// Trains every (mode, seed, fold) run independently. Each seed draws its
// own subject split. Runs execute in parallel worker threads when jobs > 1
// (kernel-level parallelism is switched off for the duration so workers do
// not oversubscribe); results are deterministic either way.
ExperimentResult run_experiment(const TrainConfig& config,
                                const std::vector<PairedSample>& dataset,
                                const std::vector<Mode>& modes,
                                const std::vector<std::uint64_t>& seeds,
                                const std::string& log_dir = "");

}  // namespace pairvit
