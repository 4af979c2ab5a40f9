#pragma once

#include <functional>

#include "acla/dataset.hpp"
#include "acla/model.hpp"

namespace acla {

// Independent seeded streams used by training; serialized into checkpoints so
// a resumed run continues the exact trajectory.
struct TrainStreams {
    Rng data;   // crops, shuffles, augmentation draws
    Rng noise;  // degradation noise
    Rng mask;   // key-mask Gumbel noise
};
TrainStreams make_train_streams(std::uint64_t seed);

struct PatchPair {
    Tensor input;
    Tensor target;
};
// One random training example: target-space crop, dihedral augmentation, then
// the task degradation (fresh noise for denoising).
PatchPair sample_patch(const ImagePair& img, const ExperimentConfig& cfg, Rng& data_rng,
                       Rng& noise_rng);

// Validation inputs are degraded once with a seed-derived stream so every
// epoch (and every resumed run) scores against identical inputs.
struct ValSet {
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    std::vector<Tensor> targets;
};
ValSet prepare_val(const std::vector<ImagePair>& images, const ExperimentConfig& cfg,
                   std::uint64_t seed);

struct EpochRow {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
};

// Restoration pass in inference mode (no gate noise), clamped to [0,1].
Tensor predict(RestorationModel& model, const Tensor& input, const ExperimentConfig& cfg);

// Mean per-query hard-mask occupancy over all modules of an acla model, in
// inference mode on the given input.
double mask_occupancy(RestorationModel& model, const Tensor& input,
                      const ExperimentConfig& cfg);

// MSE training with Adam and the train-phase learning-rate schedule.
// Epochs [start_epoch, cfg.train_epochs); the schedule always spans the full
// cfg.train_epochs budget.  Deterministic given the stream states.  Throws on
// non-finite loss.
std::vector<EpochRow> train_model(RestorationModel& model, Adam& opt,
                                  const std::vector<ImagePair>& train_images,
                                  const ValSet& val, const ExperimentConfig& cfg,
                                  TrainStreams& streams, int start_epoch = 0,
                                  const std::function<void(const EpochRow&)>& on_epoch = {});

// As train_model but stopping (checkpointably) after `end_epoch` epochs.
std::vector<EpochRow> train_model_until(RestorationModel& model, Adam& opt,
                                        const std::vector<ImagePair>& train_images,
                                        const ValSet& val, const ExperimentConfig& cfg,
                                        TrainStreams& streams, int start_epoch, int end_epoch,
                                        const std::function<void(const EpochRow&)>& on_epoch = {});

struct EvalRow {
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
};
struct EvalSummary {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};
EvalSummary evaluate(RestorationModel& model, const ValSet& val, const ExperimentConfig& cfg);

}  // namespace acla
