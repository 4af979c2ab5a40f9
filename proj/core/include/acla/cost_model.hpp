#pragma once

#include <span>
#include <vector>

#include "acla/tape.hpp"

namespace acla {

// Which form of the per-module FLOPs sum to use.  Literal keeps the fixed
// projection terms inside the per-key sum; Corrected hoists them out.  The
// literal form is the default; Corrected is exposed for sensitivity analysis.
enum class CostFormula { Literal, Corrected };

// FLOPs attributable to the module inserted at candidate position j
// (0-based; referred layers are 0..j).  `gates` holds s_l (or its relaxation)
// per candidate position, `mask_occupancy` the per-(layer, key) mean mask,
// layer-major with K entries per layer covering layers 0..j.
//   cost_j = sum_{l<=j} s_l sum_k (2*m*N*C^2 + 2*N*C^2 + 6*K*N*C)
double module_cost(int j, std::span<const double> gates,
                   std::span<const double> mask_occupancy, std::int64_t n_positions,
                   int channels, int keys, CostFormula formula = CostFormula::Literal);

// Total inference cost of all inserted modules: sum_j s_j * cost_j.
double total_cost(std::span<const double> gates, std::span<const double> per_module_costs);

struct CostReport {
    std::vector<double> per_module;  // cost_j for each candidate position
    double total = 0.0;
    double backbone = 0.0;
    // breakdown of `total` by term
    double mask_conv = 0.0;        // 2*m*N*C^2 terms
    double weight_offset = 0.0;    // 2*N*C^2 + 6*K*N*C terms
};

// One plain convolution layer of the cost baseline: 2*N*C_in*C_out*k^2.
struct ConvSpec {
    std::int64_t n_positions;
    int c_in, c_out, kernel;
};
double backbone_flops(std::span<const ConvSpec> layers);

// Tape-level cost_j from a module's occupancy node, differentiable w.r.t.
// the gates and the occupancy (hence the mask unit during search).
Var module_cost_var(Tape& tape, int j, std::span<const Var> gates, Var occupancy,
                    std::int64_t n_positions, int channels, int keys,
                    CostFormula formula = CostFormula::Literal);

// Tape-level total: sum_j s_j * cost_j.
Var total_cost_var(Tape& tape, std::span<const Var> gates, std::span<const Var> per_module);

}  // namespace acla
