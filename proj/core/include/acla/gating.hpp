#pragma once

#include <span>

#include "acla/error.hpp"
#include "acla/rng.hpp"

namespace acla {

enum class GateMode { Train, Infer };

// Continuous relaxation of a binary gate: sigma((beta + e1 - e2) / tau) with
// e1, e2 i.i.d. standard Gumbel in Train mode and 0 in Infer mode.  Output is
// strictly inside (0,1).
double soft_mask(double beta, double tau, GateMode mode, Rng& rng);
// Noise already drawn (or zero); delta = e1 - e2.
double soft_mask_with_noise(double beta, double delta, double tau);

// Hard thresholding of the relaxed gate; the 0.5 boundary maps to 0.  The
// straight-through convention treats this as identity in the backward pass,
// so d(hard)/d(soft) == 1 wherever a gradient is propagated.
inline bool harden(double m_hat) { return m_hat > 0.5; }

// Mask unit: a 1x1 convolution with scalar output applied to a sampled key
// feature.  beta = w . value + b.
double mask_unit(std::span<const double> value, std::span<const double> w, double b);

// Architecture gate for insert-position search.  Same functional form as
// soft_mask; the result is used directly (never hardened) during search.
double arch_gate(double alpha, double tau, GateMode mode, Rng& rng);

// Temperature schedule: constant tau_start during stage 1, exponential decay
// from tau_start to tau_end across stage-2 epochs.  `epoch` counts from the
// start of the search; the decay endpoint is reached at the last stage-2
// epoch.
struct TemperatureSchedule {
    double tau_start = 1.0;
    double tau_end = 0.1;
    int stage1_epochs = 0;
    int stage2_epochs = 1;
};
double temperature(int epoch, const TemperatureSchedule& schedule);

}  // namespace acla
