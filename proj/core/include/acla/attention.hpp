#pragma once

#include <span>
#include <vector>

#include "acla/gating.hpp"
#include "acla/tape.hpp"

namespace acla {

// Ordered retained feature maps x^1..x^L at the candidate insert positions,
// depth order.  Entry j-1 is the backbone output at candidate position j; the
// query layer of a module is always the last entry of the span it receives.
struct LayerBank {
    std::vector<Var> entries;
    std::vector<bool> active;  // driven by search gates; unused entries stay retained

    void push(Var v, bool is_active = true) {
        entries.push_back(v);
        active.push_back(is_active);
    }
    // Entries 1..j (inclusive) as the referred layers of the module at j.
    std::span<const Var> prefix(std::size_t j) const {
        return std::span<const Var>(entries.data(), j);
    }
};

// Pairwise attention parameters (NL / CLNL), bound on a tape.
struct NlVars {
    Var w_theta, b_theta;  // query embedding, C -> C
    Var w_phi, b_phi;      // key embedding, C -> C
    Var w_value, b_value;  // g, C -> C
};

// Deformable cross-layer attention parameters (CLA / ACLA), bound on a tape.
// Offset and weight projections are laid out layer-major: for referred layer
// l and key k, offset channels are (2*(l*K+k), 2*(l*K+k)+1) and the weight
// logit is l*K+k.  The value embedding g is shared across referred layers.
struct ClaVars {
    Var w_offset, b_offset;  // C -> 2*K*L
    Var w_weight, b_weight;  // C -> K*L
    Var w_value, b_value;    // C -> C
};

struct AclaVars {
    ClaVars cla;
    Var w_mask, b_mask;  // mask unit, C -> 1
};

// Per-(query, layer, key) record of one sampled key.
struct KeySample {
    int layer = 0;  // referred-layer index within the bank, 0-based
    int key = 0;
    double offset_row = 0.0, offset_col = 0.0;
    Position position{};             // after clamping
    std::vector<double> value;       // sampled feature
    double weight = 0.0;             // attention weight
    double beta = 0.0;               // soft mask logit (0 for CLA)
    int mask = 1;                    // hard mask
};

struct QueryTrace {
    int row = 0, col = 0;
    std::vector<KeySample> keys;
};
using KeyTrace = std::vector<QueryTrace>;  // row-major over queries

// --- operations ------------------------------------------------------------

// Fused softmax attention over concatenated key maps:
//   y_i = sum_n softmax_n(theta_i . phi_n) g_n
// phis/gs hold one entry per key map, all the same shape as theta.
Var pairwise_attention(Tape& tape, Var theta, std::span<const Var> phis,
                       std::span<const Var> gs);

// Non-local attention, embedded-Gaussian instantiation.
Var nl_forward(Tape& tape, Var x, const NlVars& p);

// Cross-layer non-local attention: the query at the last bank entry attends
// over every position of every bank entry; softmax spans the full key set.
Var clnl_forward(Tape& tape, std::span<const Var> bank, const NlVars& p);

struct ClaOptions {
    int key_count = 1;
    KeyTrace* trace = nullptr;
};
// Deformable cross-layer attention: K keys per referred layer at learned
// fractional offsets, attention weights from the query feature alone via a
// joint softmax across all referred layers' logits.
Var cla_forward(Tape& tape, std::span<const Var> bank, const ClaVars& p,
                const ClaOptions& opt);

struct AclaOptions {
    int key_count = 1;
    double tau = 1.0;
    GateMode mode = GateMode::Infer;
    Rng* mask_rng = nullptr;  // required in Train mode
    // Forward with the relaxed mask instead of the hard one.  The straight-
    // through backward is unchanged; this makes the whole op smooth so
    // finite-difference checks apply end to end.
    bool soft_forward = false;
    bool force_masks_on = false;
    std::span<const Var> layer_gates{};  // s_hat per bank entry; empty = all ones
    KeyTrace* trace = nullptr;
};
struct AclaResult {
    Var output;
    // Mean forward mask value per (layer, key), length L*K; feeds the cost
    // model during search.  Straight-through gradient to the mask unit.
    Var occupancy;
};
AclaResult acla_forward(Tape& tape, std::span<const Var> bank, const AclaVars& p,
                        const AclaOptions& opt);

// Residual non-local block: z = h(y) + x with h a 1x1 convolution.
Var block_wrap(Tape& tape, Var x, Var y, Var w_out, Var b_out);

}  // namespace acla
