#include "acla/optim.hpp"

#include <cmath>
#include <cstring>

namespace acla {

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_)
        for (double v : p.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    return h;
}

void Adam::step(ParamStore& params, double lr) {
    if (state_.m.size() != params.size()) {
        state_.m.assign(params.size(), {});
        state_.v.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            state_.m[i].assign(static_cast<std::size_t>(params[i].size()), 0.0);
            state_.v[i].assign(static_cast<std::size_t>(params[i].size()), 0.0);
        }
    }
    state_.t += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad()) continue;
        const auto& g = p.grad();
        auto& m = state_.m[i];
        auto& v = state_.v[i];
        auto vals = p.values();
        for (std::size_t k = 0; k < vals.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            vals[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

double lr_schedule(int epoch, LrPhase phase, int total_epochs, double base_lr) {
    if (phase == LrPhase::Search) {
        if (total_epochs <= 0) return base_lr;
        const double t = static_cast<double>(epoch) / total_epochs;
        return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
    }
    // full-scale: halve every 200 of 1000 epochs; scale the period with the
    // configured budget
    const double period = 200.0 * total_epochs / 1000.0;
    const int halvings = period > 0.0 ? static_cast<int>(std::floor(epoch / period)) : 0;
    return base_lr * std::pow(0.5, halvings);
}

}  // namespace acla
