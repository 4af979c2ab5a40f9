#pragma once

#include "acla/checkpoint.hpp"
#include "acla/search.hpp"
#include "acla/visualize.hpp"

namespace acla {

// Resolved module insert positions of a configuration (all blocks for a
// position search, none for the plain backbone).
std::vector<int> resolved_positions(const ExperimentConfig& cfg);

// Rebuilds the model a checkpoint describes and restores its parameters.
struct LoadedModel {
    ExperimentConfig config;
    std::unique_ptr<RestorationModel> model;
    Checkpoint checkpoint;
};
LoadedModel load_model(const std::string& checkpoint_path);

// search: optional lambda cross-validation, the two-stage search, then the
// derived-positions file (derived.txt), the per-step search log
// (search_log.csv) and the supernet checkpoint (supernet.ckpt).
struct SearchArtifacts {
    std::vector<int> derived;
    double lambda = 0.0;
    std::string checkpoint_file;
    std::string log_file;
    std::string derived_file;
};
SearchArtifacts cmd_search(const ExperimentConfig& cfg, const std::string& out_dir);

// train: restoration training with per-epoch metrics (metrics.csv) and the
// final checkpoint (model.ckpt).  `resume_path` continues a previous run;
// `stop_after` checkpoints early at the given epoch while keeping the full
// schedule, so a later resume reproduces the uninterrupted trajectory.
struct TrainArtifacts {
    std::string checkpoint_file;
    std::string metrics_file;
    std::vector<EpochRow> trace;
};
TrainArtifacts cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path = "", int stop_after = -1);

// eval: mean and per-image luminance PSNR/SSIM over a directory (eval.csv).
struct EvalArtifacts {
    EvalSummary summary;
    std::string csv_file;
    int skipped = 0;
};
EvalArtifacts cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                       const std::string& out_dir, std::uint64_t seed_override = 0,
                       bool has_seed_override = false);

// visualize-keys: annotated images + CSV for one query position.
VisualizeResult cmd_visualize_keys(const std::string& checkpoint_path,
                                   const std::string& image_path, int query_row,
                                   int query_col, const std::string& out_dir,
                                   bool force_masks_on = false);

}  // namespace acla
