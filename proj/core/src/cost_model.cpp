#include "acla/cost_model.hpp"

namespace acla {

namespace {

void check_dims(std::int64_t n, int c, int k) {
    if (n < 1 || c < 1 || k < 1)
        throw DomainError("cost model requires positive N, C and K");
}

}  // namespace

double module_cost(int j, std::span<const double> gates,
                   std::span<const double> mask_occupancy, std::int64_t n_positions,
                   int channels, int keys, CostFormula formula) {
    check_dims(n_positions, channels, keys);
    if (j < 0 || static_cast<std::size_t>(j) >= gates.size())
        throw ContractError("module_cost: position outside the gate vector");
    if (mask_occupancy.size() < static_cast<std::size_t>(j + 1) * keys)
        throw DimensionError("module_cost: occupancy shorter than (j+1)*K");
    const double n = static_cast<double>(n_positions);
    const double c = static_cast<double>(channels);
    const double fixed = 2.0 * n * c * c + 6.0 * keys * n * c;
    double cost = 0.0;
    for (int l = 0; l <= j; ++l) {
        double layer = 0.0;
        for (int k = 0; k < keys; ++k) {
            const double m = mask_occupancy[static_cast<std::size_t>(l) * keys + k];
            layer += 2.0 * m * n * c * c;
            if (formula == CostFormula::Literal) layer += fixed;
        }
        if (formula == CostFormula::Corrected) layer += fixed;
        cost += gates[static_cast<std::size_t>(l)] * layer;
    }
    return cost;
}

double total_cost(std::span<const double> gates, std::span<const double> per_module_costs) {
    if (gates.size() != per_module_costs.size())
        throw DimensionError("total_cost: gate and cost vector lengths differ");
    double acc = 0.0;
    for (std::size_t j = 0; j < gates.size(); ++j) acc += gates[j] * per_module_costs[j];
    return acc;
}

double backbone_flops(std::span<const ConvSpec> layers) {
    double acc = 0.0;
    for (const ConvSpec& l : layers)
        acc += 2.0 * static_cast<double>(l.n_positions) * l.c_in * l.c_out *
               static_cast<double>(l.kernel) * l.kernel;
    return acc;
}

Var module_cost_var(Tape& tape, int j, std::span<const Var> gates, Var occupancy,
                    std::int64_t n_positions, int channels, int keys, CostFormula formula) {
    check_dims(n_positions, channels, keys);
    if (j < 0 || static_cast<std::size_t>(j) >= gates.size())
        throw ContractError("module_cost: position outside the gate vector");
    if (tape.value(occupancy).size() < static_cast<std::int64_t>(j + 1) * keys)
        throw DimensionError("module_cost: occupancy shorter than (j+1)*K");
    const double n = static_cast<double>(n_positions);
    const double c = static_cast<double>(channels);
    const double fixed = 2.0 * n * c * c + 6.0 * keys * n * c;

    // sum_k 2*m*N*C^2 over the keys of layers 0..j in one pass: scale the
    // occupancy, reduce, then add the gated fixed terms layer by layer.
    std::vector<Var> terms;
    terms.reserve(static_cast<std::size_t>(j) + 1);
    const Tensor& occ_v = tape.value(occupancy);
    for (int l = 0; l <= j; ++l) {
        // per-layer slice of the occupancy: build a mask constant and reduce.
        Tensor sel = Tensor::of_shape(occ_v.shape());
        for (int k = 0; k < keys; ++k) sel[static_cast<std::int64_t>(l) * keys + k] = 1.0;
        Var masked = tape.mul(occupancy, tape.constant(std::move(sel)));
        Var key_sum = tape.sum(masked);
        Var layer_cost = tape.scale(key_sum, 2.0 * n * c * c);
        const double fixed_total = formula == CostFormula::Literal ? fixed * keys : fixed;
        layer_cost = tape.add_const(layer_cost, fixed_total);
        terms.push_back(tape.mul(gates[static_cast<std::size_t>(l)], layer_cost));
    }
    return tape.add_n(terms);
}

Var total_cost_var(Tape& tape, std::span<const Var> gates, std::span<const Var> per_module) {
    if (gates.size() != per_module.size())
        throw DimensionError("total_cost: gate and cost vector lengths differ");
    if (gates.empty()) throw ContractError("total_cost of zero modules");
    std::vector<Var> terms;
    terms.reserve(gates.size());
    for (std::size_t j = 0; j < gates.size(); ++j)
        terms.push_back(tape.mul(gates[j], per_module[j]));
    return tape.add_n(terms);
}

}  // namespace acla
