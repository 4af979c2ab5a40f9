#pragma once

#include <deque>
#include <string>
#include <vector>

#include "acla/tensor.hpp"

namespace acla {

// Named, ordered collection of trainable tensors.  Registration order is the
// persistence and checksum order, so it must be deterministic.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor init) {
        names_.push_back(std::move(name));
        params_.push_back(std::move(init));
        params_.back().set_requires_grad(true);
        return params_.back();
    }
    std::size_t size() const { return params_.size(); }
    Tensor& operator[](std::size_t i) { return params_[i]; }
    const Tensor& operator[](std::size_t i) const { return params_[i]; }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor* find(std::string_view name) {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return &params_[i];
        return nullptr;
    }
    void zero_grads() {
        for (auto& p : params_) p.zero_grad();
    }
    // FNV-1a over the raw parameter bytes; used by the stage-isolation checks.
    std::uint64_t checksum() const;

private:
    std::vector<std::string> names_;
    // deque: models keep raw pointers to entries while registration continues
    std::deque<Tensor> params_;
};

// Adam with bias correction; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
public:
    struct Config {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };
    Adam() : cfg_() {}
    explicit Adam(const Config& cfg) : cfg_(cfg) {}

    void step(ParamStore& params, double lr);

    struct State {
        std::int64_t t = 0;
        std::vector<std::vector<double>> m, v;
    };
    State& state() { return state_; }
    const State& state() const { return state_; }
    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    State state_;
};

enum class LrPhase { Search, Train };

// Search: cosine from base_lr to 0 across total_epochs.
// Train: base_lr halved every 200 epochs at the full-scale budget of 1000,
// with the halving period scaled proportionally for reduced budgets.
double lr_schedule(int epoch, LrPhase phase, int total_epochs, double base_lr = 1e-4);

}  // namespace acla
