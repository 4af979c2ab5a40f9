#pragma once

#include <memory>

#include "acla/attention.hpp"
#include "acla/config.hpp"
#include "acla/optim.hpp"

namespace acla {

struct ForwardOptions {
    GateMode mask_mode = GateMode::Infer;
    double tau = 0.1;
    Rng* mask_rng = nullptr;
    // One gate per attention module's bank entry (i.e. per insert position),
    // in depth order.  Empty means every gate is 1.
    std::span<const Var> layer_gates{};
    bool soft_masks = false;
    bool force_masks_on = false;
    std::vector<KeyTrace>* traces = nullptr;  // one per inserted module
};

struct ForwardResult {
    Var prediction;
    std::vector<Var> occupancies;  // one per module (acla variant only)
    LayerBank bank;
};

// EDSR-style trunk: head conv3x3 (3 -> C), B residual blocks
// (conv3x3 - ReLU - conv3x3 + skip, second conv zero-initialized), attention
// blocks after the configured positions, and a task tail (sub-pixel shuffle
// for SR, reconstruction conv otherwise).  With all second convs and output
// transforms at zero the network is tail(head(x)).
class RestorationModel {
public:
    // `positions` are resolved 1-based block indices (empty = plain backbone).
    RestorationModel(const ExperimentConfig& cfg, std::vector<int> positions, Rng& init_rng);

    ForwardResult forward(Tape& tape, Var input, const ForwardOptions& opt);

    ParamStore& weights() { return params_; }
    const ParamStore& weights() const { return params_; }
    const std::vector<int>& positions() const { return positions_; }
    int scale() const { return scale_; }
    int channels() const { return channels_; }
    int key_count() const { return key_count_; }
    AttentionVariant variant() const { return variant_; }

    // Copies attention parameters from a searched dense model into this one,
    // keeping only the referred-layer slices that survived derivation.
    void warm_start_from(const RestorationModel& searched);

private:
    struct BlockRefs {
        Tensor *w1, *b1, *w2, *b2;
    };
    struct AttnRefs {
        // CLA/ACLA
        Tensor *w_off, *b_off, *w_f, *b_f;
        // NL/CLNL
        Tensor *w_theta, *b_theta, *w_phi, *b_phi;
        // shared
        Tensor *w_g, *b_g, *w_m, *b_m, *w_h, *b_h;
        int referred_layers;
    };

    AttentionVariant variant_;
    Task task_;
    int blocks_, channels_, key_count_, scale_;
    std::vector<int> positions_;
    ParamStore params_;
    Tensor *head_w_, *head_b_, *tail_w_, *tail_b_;
    std::vector<BlockRefs> block_refs_;
    std::vector<AttnRefs> attn_refs_;
};

}  // namespace acla
