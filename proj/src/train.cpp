#include "train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "kernels.hpp"

namespace pairvit {

real cosine_lr(int epoch, int total_epochs, real lr0) {
    if (total_epochs < 1) throw UsageError("cosine_lr: total_epochs must be >= 1");
    if (epoch < 0) throw UsageError("cosine_lr: negative epoch");
    if (epoch > total_epochs) {
        warnf("cosine_lr: epoch %d past schedule end %d, clamping", epoch, total_epochs);
        epoch = total_epochs;
    }
    return lr0 * (1 + std::cos(real(std::numbers::pi) * real(epoch) / real(total_epochs))) / 2;
}

Sgd::Sgd(std::vector<Tensor> params, real momentum, real weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.numel(), real(0));
}

void Sgd::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Sgd::step(real lr) {
    for (std::size_t t = 0; t < params_.size(); ++t) {
        auto& p = params_[t];
        auto& values = p.data();
        const auto& grads = p.grad_data();
        auto& vel = velocity_[t];
        if (grads.size() != values.size() || vel.size() != values.size())
            throw ShapeError("sgd_step: buffer sizes disagree for parameter " + std::to_string(t));
        for (std::size_t i = 0; i < values.size(); ++i) {
            const real g = grads[i] + weight_decay_ * values[i];
            vel[i] = momentum_ * vel[i] + g;
            values[i] -= lr * vel[i];
        }
    }
}

std::string epoch_csv_header() {
    return "epoch,lr,cls_wl,cls_nbi,global_align,local_align,total,val_acc";
}

std::string to_csv(const EpochReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << r.epoch << "," << double(r.lr) << "," << double(r.mean_loss.cls_wl) << ","
       << double(r.mean_loss.cls_nbi) << "," << double(r.mean_loss.global_align) << ","
       << double(r.mean_loss.local_align) << "," << double(r.mean_loss.total) << ","
       << double(r.val_accuracy);
    return os.str();
}

namespace {

std::vector<Tensor> trainable_params(const ModelParams& params, const std::optional<SamParams>& sam) {
    std::vector<Tensor> all = params.all_params();
    if (sam) {
        all.push_back(sam->q_w);
        all.push_back(sam->k_w);
    }
    return all;
}

void check_breakdown(const LossBreakdown& parts, real lambda, std::int64_t step) {
    if (!std::isfinite(double(parts.total)))
        throw NumericError("non-finite loss at step " + std::to_string(step));
    const real sum = parts.cls_wl + parts.cls_nbi + parts.global_align + parts.local_align;
    if (std::fabs(sum - parts.total) > real(1e-9))
        throw NumericError("loss breakdown does not sum to total at step " + std::to_string(step));
    const real tol = real(1e-9);
    if (parts.global_align < -tol || parts.global_align > 2 + tol)
        throw NumericError("global alignment term out of [0,2] at step " + std::to_string(step));
    if (parts.local_align < -tol || parts.local_align > lambda + tol)
        throw NumericError("local alignment term out of [0,lambda] at step " +
                           std::to_string(step));
}

int argmax2(const std::vector<real>& logits) {
    int best = 0;
    for (int j = 1; j < int(logits.size()); ++j)
        if (logits[std::size_t(j)] > logits[std::size_t(best)]) best = j;
    return best;
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, std::uint64_t init_seed)
    : config_(config),
      params_(ModelParams::init(config.model, init_seed)),
      sam_(config.mode == Mode::CgaSam
               ? std::optional<SamParams>(SamParams::init(config.model, init_seed))
               : std::nullopt),
      opt_(trainable_params(params_, sam_), config.momentum, config.weight_decay) {}

LossBreakdown Trainer::train_step(const std::vector<const PairedSample*>& batch, real lr) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    opt_.zero_grad();
    const real inv_batch = real(1) / real(batch.size());
    LossBreakdown mean;
    for (const PairedSample* pair : batch) {
        BackboneOutput out_w = forward(params_, pair->wl, Modality::WL);
        Tensor logits_w = classify(params_, out_w.class_feature);

        TotalLoss loss;
        if (config_.mode == Mode::WlOnly) {
            loss = total_loss(logits_w, Tensor(), pair->label, out_w.class_feature, Tensor(),
                              nullptr, nullptr, config_.lambda, config_.mode);
        } else {
            BackboneOutput out_n = forward(params_, pair->nbi, Modality::NBI);
            Tensor logits_n = classify(params_, out_n.class_feature);
            if (config_.mode == Mode::Cga) {
                loss = total_loss(logits_w, logits_n, pair->label, out_w.class_feature,
                                  out_n.class_feature, nullptr, nullptr, config_.lambda,
                                  config_.mode);
            } else {
                ResponseMap r_w = spatial_attention(out_w.patch_features, out_w.class_feature,
                                                    *sam_, Modality::WL);
                ResponseMap r_n = spatial_attention(out_n.patch_features, out_n.class_feature,
                                                    *sam_, Modality::NBI);
                loss = total_loss(logits_w, logits_n, pair->label, out_w.class_feature,
                                  out_n.class_feature, &r_w, &r_n, config_.lambda, config_.mode);
            }
        }
        check_breakdown(loss.parts, config_.lambda, steps_);
        backward(scale(loss.value, inv_batch));
        mean.cls_wl += loss.parts.cls_wl * inv_batch;
        mean.cls_nbi += loss.parts.cls_nbi * inv_batch;
        mean.global_align += loss.parts.global_align * inv_batch;
        mean.local_align += loss.parts.local_align * inv_batch;
        mean.total += loss.parts.total * inv_batch;
    }
    opt_.step(lr);
    ++steps_;
    return mean;
}

real evaluate(const ModelParams& params, const std::vector<PairedSample>& samples,
              const std::vector<int>& indices) {
    if (indices.empty()) throw UsageError("evaluate: empty validation set");
    NoGradGuard no_grad;
    int correct = 0;
    for (int i : indices) {
        const auto& s = samples[std::size_t(i)];
        Tensor logits = forward_logits(params, s.wl, Modality::WL);
        if (argmax2(logits.data()) == s.label) ++correct;
    }
    return real(correct) / real(indices.size());
}

real evaluate(const ModelParams& params, const std::vector<PairedSample>& samples) {
    std::vector<int> all(samples.size());
    for (int i = 0; i < int(samples.size()); ++i) all[std::size_t(i)] = i;
    return evaluate(params, samples, all);
}

namespace {

std::vector<std::vector<real>> snapshot_values(const std::vector<Tensor>& tensors) {
    std::vector<std::vector<real>> out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) out.push_back(t.data());
    return out;
}

}  // namespace

void restore_snapshot(ModelParams& params, SamParams* sam,
                      const std::vector<std::vector<real>>& param_data,
                      const std::vector<std::vector<real>>& sam_data) {
    auto tensors = params.all_params();
    if (tensors.size() != param_data.size())
        throw ShapeError("restore_snapshot: parameter count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i].data() = param_data[i];
    if (sam) {
        if (sam_data.size() != 2) throw ShapeError("restore_snapshot: missing sam snapshot");
        sam->q_w.data() = sam_data[0];
        sam->k_w.data() = sam_data[1];
    }
}

FoldResult train_fold(const TrainConfig& config, const std::vector<PairedSample>& dataset,
                      const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                      std::uint64_t run_seed, std::ostream* epoch_log) {
    if (train_idx.empty() || val_idx.empty())
        throw UsageError("train_fold: empty train or val split");

    // Deterministic center preprocessing, shared by train and val.
    std::vector<PairedSample> prepared(dataset.size());
    auto prep = [&](int i) {
        prepared[std::size_t(i)] = crop_bbox(dataset[std::size_t(i)], config.model.image_size);
    };
    for (int i : train_idx) prep(i);
    for (int i : val_idx) prep(i);

    Trainer trainer(config, derive_seed(run_seed, 0x1417u));
    FoldResult result;
    if (epoch_log) (*epoch_log) << epoch_csv_header() << "\n";

    std::vector<int> order(train_idx);
    const int batch = std::max(1, config.batch_size);
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const real lr = cosine_lr(epoch, config.max_epochs, config.lr0);
        std::mt19937_64 shuffle_rng(derive_seed(run_seed, 0xE0u, std::uint64_t(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        LossBreakdown epoch_mean;
        int batches = 0;
        // Short final batch dropped in training.
        for (std::size_t at = 0; at + std::size_t(batch) <= order.size(); at += std::size_t(batch)) {
            std::vector<PairedSample> augmented;
            std::vector<const PairedSample*> views;
            augmented.reserve(std::size_t(batch));
            for (int b = 0; b < batch; ++b) {
                const int idx = order[at + std::size_t(b)];
                std::mt19937_64 aug_rng(
                    derive_seed(run_seed, 0xA6u, std::uint64_t(epoch), std::uint64_t(idx)));
                augmented.push_back(augment(prepared[std::size_t(idx)], aug_rng));
            }
            for (const auto& s : augmented) views.push_back(&s);
            const LossBreakdown step = trainer.train_step(views, lr);
            epoch_mean.cls_wl += step.cls_wl;
            epoch_mean.cls_nbi += step.cls_nbi;
            epoch_mean.global_align += step.global_align;
            epoch_mean.local_align += step.local_align;
            epoch_mean.total += step.total;
            ++batches;
        }
        if (batches == 0)
            throw UsageError("train_fold: train split smaller than one batch");
        const real inv = real(1) / real(batches);
        epoch_mean.cls_wl *= inv;
        epoch_mean.cls_nbi *= inv;
        epoch_mean.global_align *= inv;
        epoch_mean.local_align *= inv;
        epoch_mean.total *= inv;

        // Spot-check once per epoch: the response maps must still be valid
        // probability vectors.
        if (config.mode == Mode::CgaSam) {
            NoGradGuard no_grad;
            const auto& probe = prepared[std::size_t(train_idx.front())];
            BackboneOutput ow = forward(trainer.params(), probe.wl, Modality::WL);
            BackboneOutput on = forward(trainer.params(), probe.nbi, Modality::NBI);
            ResponseMap rw = spatial_attention(ow.patch_features, ow.class_feature,
                                               *trainer.sam(), Modality::WL);
            ResponseMap rn = spatial_attention(on.patch_features, on.class_feature,
                                               *trainer.sam(), Modality::NBI);
            if (!rw.is_valid_distribution() || !rn.is_valid_distribution())
                throw NumericError("response map is not a distribution after epoch " +
                                   std::to_string(epoch));
        }

        EpochReport report;
        report.epoch = epoch;
        report.lr = lr;
        report.mean_loss = epoch_mean;
        report.val_accuracy = evaluate(trainer.params(), prepared, val_idx);
        if (epoch_log) (*epoch_log) << to_csv(report) << "\n";
        result.epochs.push_back(report);

        if (report.val_accuracy > result.best_val_accuracy || result.best_epoch < 0) {
            result.best_val_accuracy = report.val_accuracy;
            result.best_epoch = epoch;
            result.best_params = snapshot_values(trainer.params().all_params());
            result.best_sam.clear();
            if (trainer.sam()) {
                result.best_sam.push_back(trainer.sam()->q_w.data());
                result.best_sam.push_back(trainer.sam()->k_w.data());
            }
        }
    }
    return result;
}

real ExperimentResult::fold_mean(std::size_t mode_idx, int fold) const {
    real s = 0;
    for (std::size_t si = 0; si < seeds.size(); ++si)
        s += acc[mode_idx][si][std::size_t(fold)];
    return s / real(seeds.size());
}

real ExperimentResult::mode_mean(std::size_t mode_idx) const {
    real s = 0;
    for (int f = 0; f < folds; ++f) s += fold_mean(mode_idx, f);
    return s / real(folds);
}

std::string ExperimentResult::report_csv() const {
    std::ostringstream os;
    os.precision(6);
    os << "method";
    for (int f = 1; f <= folds; ++f) os << ",fold" << f;
    os << ",mean\n";
    for (std::size_t m = 0; m < modes.size(); ++m) {
        os << mode_name(modes[m]);
        for (int f = 0; f < folds; ++f) os << "," << double(fold_mean(m, f));
        os << "," << double(mode_mean(m)) << "\n";
    }
    return os.str();
}

ExperimentResult run_experiment(const TrainConfig& config,
                                const std::vector<PairedSample>& dataset,
                                const std::vector<Mode>& modes,
                                const std::vector<std::uint64_t>& seeds,
                                const std::string& log_dir) {
    if (modes.empty() || seeds.empty()) throw UsageError("run_experiment: nothing to run");
    ExperimentResult result;
    result.modes = modes;
    result.seeds = seeds;
    result.folds = config.folds;
    result.acc.assign(modes.size(),
                      std::vector<std::vector<real>>(
                          seeds.size(), std::vector<real>(std::size_t(config.folds), real(0))));

    // One subject split per seed, shared across modes and folds.
    std::vector<FoldSplit> splits;
    for (std::uint64_t seed : seeds)
        splits.push_back(subject_kfold(dataset, config.folds, derive_seed(seed, 0xF01Du)));

    struct Run {
        std::size_t mode_idx, seed_idx;
        int fold;
    };
    std::vector<Run> runs;
    for (std::size_t m = 0; m < modes.size(); ++m)
        for (std::size_t s = 0; s < seeds.size(); ++s)
            for (int f = 0; f < config.folds; ++f) runs.push_back({m, s, f});

    if (!log_dir.empty()) std::filesystem::create_directories(log_dir);

    auto execute = [&](const Run& run) {
        TrainConfig run_cfg = config;
        run_cfg.mode = modes[run.mode_idx];
        run_cfg.seed = seeds[run.seed_idx];
        const auto& split = splits[run.seed_idx];
        const auto tr = train_indices(split, run.fold, dataset);
        const auto va = val_indices(split, run.fold, dataset);
        const std::uint64_t run_seed =
            derive_seed(run_cfg.seed, 0x2bu, std::uint64_t(run.mode_idx), std::uint64_t(run.fold));
        std::ofstream log;
        if (!log_dir.empty()) {
            std::ostringstream name;
            name << mode_name(run_cfg.mode) << "_seed" << run_cfg.seed << "_fold" << run.fold
                 << ".csv";
            log.open(std::filesystem::path(log_dir) / name.str());
        }
        FoldResult fr = train_fold(run_cfg, dataset, tr, va, run_seed,
                                   log.is_open() ? &log : nullptr);
        result.acc[run.mode_idx][run.seed_idx][std::size_t(run.fold)] = fr.best_val_accuracy;
    };

    int jobs = config.jobs;
    if (jobs <= 0) jobs = std::min<int>(kernels::max_threads(), int(runs.size()));
    jobs = std::max(1, jobs);

    if (jobs == 1) {
        for (const auto& run : runs) execute(run);
    } else {
        // Workers own whole runs; kernel-level threading is paused so the
        // two levels do not fight over cores.
        const bool kernels_were_parallel = kernels::parallel_enabled();
        kernels::set_parallel(false);
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= runs.size()) return;
                    try {
                        execute(runs[i]);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mu);
                        if (!failure) failure = std::current_exception();
                        next.store(runs.size());
                        return;
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        kernels::set_parallel(kernels_were_parallel);
        if (failure) std::rethrow_exception(failure);
    }
    return result;
}

}  // namespace pairvit
