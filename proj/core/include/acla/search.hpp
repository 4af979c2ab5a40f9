#pragma once

#include <memory>

#include "acla/train.hpp"

namespace acla {

// Over-complete network for insert-position search: one attention module
// densely after every backbone block, plus one architecture parameter alpha
// per candidate position (initialized to 0, an unbiased gate of 0.5).
struct Supernet {
    std::unique_ptr<RestorationModel> model;
    ParamStore arch;                 // "alpha1".."alphaL", scalar each
    std::vector<Tensor*> alpha;      // depth order

    int candidate_count() const { return static_cast<int>(alpha.size()); }
};
Supernet build_supernet(const ExperimentConfig& cfg, Rng& init_rng);

// Cost-regularized search loss: MSE + lambda * ln(max(cost, 1)).
Var search_loss_var(Tape& tape, Var prediction, Var target, Var total_cost, double lambda);

// Positions (1-based) kept by the derivation rule s_hat > 0.5, i.e. alpha > 0.
std::vector<int> derive_arch(std::span<const double> alpha);

struct SearchStepLog {
    int epoch = 0;
    double tau = 0.0;
    std::vector<double> s_hat;  // noise-free monitor values sigma(alpha)
    double cost = 0.0;          // total cost of the weight-step forward
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct SearchResult {
    std::vector<SearchStepLog> trace;  // one row per stage-2 step
    std::vector<double> final_alpha;
    std::vector<int> derived;  // 1-based insert positions
};

struct SearchStreams {
    Rng data;
    Rng noise;
    Rng mask;
    Rng arch;  // architecture-gate Gumbel noise
};
SearchStreams make_search_streams(std::uint64_t seed);

// Two-stage alternating optimization.  Stage 1 trains only the network
// weights on MSE; stage 2 alternates one weight step on the train split with
// one alpha step on the validation split, both on the full regularized loss,
// while the temperature decays.  The 80/20 train/val split is a seeded
// shuffle of `images`.
//
// `on_substep` fires after every optimizer sub-step (arch_step tells which
// parameter set was stepped); the isolation tests checksum both stores there.
SearchResult run_search(Supernet& net, Adam& weight_opt, Adam& arch_opt,
                        const std::vector<ImagePair>& images, const ExperimentConfig& cfg,
                        SearchStreams& streams,
                        const std::function<void(const SearchStepLog&)>& on_step = {},
                        const std::function<void(bool arch_step)>& on_substep = {});

// Picks the PSNR-maximizing lambda: for each candidate, search on 20% of the
// images and score the derived-and-retrained model on a held-out 10% slice.
// Ties break toward the larger (cheaper) lambda.  A single candidate returns
// immediately without evaluation.
double cross_validate_lambda(std::span<const double> candidates,
                             const std::vector<ImagePair>& images,
                             const ExperimentConfig& cfg, std::uint64_t seed);

// Resolved-architecture model construction after search (warm start).
std::unique_ptr<RestorationModel> derive_model(const Supernet& net,
                                               const std::vector<int>& positions,
                                               const ExperimentConfig& cfg, Rng& init_rng);

}  // namespace acla
