#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acla/cost_model.hpp"
#include "acla/error.hpp"

namespace acla {

enum class Task { Sr2, Sr3, Sr4, Denoise, Demosaic, CarPrecompressed };
enum class AttentionVariant { None, Nl, Clnl, Cla, Acla };

// Upsampling factor of the task (1 for same-size restoration).
int task_scale(Task t);

std::string to_string(Task t);
std::string to_string(AttentionVariant v);

// Line-oriented "section.key = value" experiment configuration.
struct ExperimentConfig {
    Task task = Task::Denoise;

    int blocks = 4;
    int channels = 16;

    AttentionVariant variant = AttentionVariant::None;
    int key_count = 4;
    bool search_positions = false;
    std::vector<int> positions;  // 1-based block indices, strictly increasing

    bool lambda_cv = false;
    double lambda = 0.35;
    std::vector<double> lambda_candidates = {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
    int stage1_epochs = 20;
    int stage2_epochs = 20;
    double tau_start = 1.0;
    double tau_end = 0.1;
    bool arch_noise = true;  // Gumbel noise on the architecture gates in stage 2
    CostFormula cost_formula = CostFormula::Literal;

    int train_epochs = 120;
    int batch = 8;
    int patch = 32;
    int patches_per_image = 1;  // training crops drawn per image per epoch
    double lr = 1e-4;

    std::uint64_t seed = 1;
    double sigma255 = 30.0;  // AWGN level on the 0..255 scale

    std::string train_dir;
    std::string val_dir;
    std::string degraded_train_dir;  // pre-degraded inputs (car-precompressed)
    std::string degraded_val_dir;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Cross-field checks; throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

}  // namespace acla
