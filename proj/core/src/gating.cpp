#include "acla/gating.hpp"

#include <cmath>
#include <limits>

namespace acla {

double soft_mask_with_noise(double beta, double delta, double tau) {
    if (!(tau > 0.0)) throw DomainError("soft_mask: temperature must be positive");
    double v = 1.0 / (1.0 + std::exp(-(beta + delta) / tau));
    // keep the gate strictly inside (0,1) even where sigma saturates
    if (v >= 1.0) v = std::nextafter(1.0, 0.0);
    if (v <= 0.0) v = std::numeric_limits<double>::denorm_min();
    return v;
}

double soft_mask(double beta, double tau, GateMode mode, Rng& rng) {
    const double delta = mode == GateMode::Train ? rng.gumbel() - rng.gumbel() : 0.0;
    return soft_mask_with_noise(beta, delta, tau);
}

double mask_unit(std::span<const double> value, std::span<const double> w, double b) {
    if (value.size() != w.size())
        throw DimensionError("mask_unit: weight length must equal channel count");
    double acc = b;
    for (std::size_t i = 0; i < value.size(); ++i) acc += w[i] * value[i];
    return acc;
}

double arch_gate(double alpha, double tau, GateMode mode, Rng& rng) {
    return soft_mask(alpha, tau, mode, rng);
}

double temperature(int epoch, const TemperatureSchedule& schedule) {
    if (epoch < schedule.stage1_epochs || schedule.stage2_epochs <= 1) {
        // During stage 1 (or a degenerate one-epoch stage 2) the gate stays at
        // its widest.
        if (epoch >= schedule.stage1_epochs && schedule.stage2_epochs == 1)
            return schedule.tau_end;
        return schedule.tau_start;
    }
    const int step = epoch - schedule.stage1_epochs;
    const int last = schedule.stage2_epochs - 1;
    const double t = static_cast<double>(step >= last ? last : step) / last;
    return schedule.tau_start * std::pow(schedule.tau_end / schedule.tau_start, t);
}

}  // namespace acla
