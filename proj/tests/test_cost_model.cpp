#include <doctest.h>

#include "acla/cost_model.hpp"
#include "fd_check.hpp"

using namespace acla;

TEST_CASE("worked example: N=4 C=2 K=2 single active layer") {
    const double gates[] = {1.0};
    // all masks on: sum_k (2*1*4*4 + 2*4*4 + 6*2*4*2) = 2*(32+32+96) = 320
    const double occ_on[] = {1.0, 1.0};
    CHECK(module_cost(0, gates, occ_on, 4, 2, 2) == 320.0);
    // all masks off: 2*(0+32+96) = 256
    const double occ_off[] = {0.0, 0.0};
    CHECK(module_cost(0, gates, occ_off, 4, 2, 2) == 256.0);
    // gated off entirely
    const double gates0[] = {0.0};
    CHECK(module_cost(0, gates0, occ_on, 4, 2, 2) == 0.0);
}

TEST_CASE("hand-computed randomized cases stay integer-exact") {
    Rng rng(61);
    for (int trial = 0; trial < 10; ++trial) {
        const int layers = 1 + static_cast<int>(rng.below(3));
        const int j = layers - 1;
        const int keys = 1 + static_cast<int>(rng.below(3));
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(16));
        const int c = 1 + static_cast<int>(rng.below(8));
        std::vector<double> gates(static_cast<std::size_t>(layers));
        for (auto& g : gates) g = static_cast<double>(rng.below(2));
        std::vector<double> occ(static_cast<std::size_t>(layers * keys));
        for (auto& m : occ) m = static_cast<double>(rng.below(2));

        // independent accumulation, literally per the formula
        double want = 0.0;
        for (int l = 0; l <= j; ++l)
            for (int k = 0; k < keys; ++k)
                want += gates[static_cast<std::size_t>(l)] *
                        (2.0 * occ[static_cast<std::size_t>(l * keys + k)] * n * c * c +
                         2.0 * n * c * c + 6.0 * keys * n * c);
        const double got = module_cost(j, gates, occ, n, c, keys);
        CHECK(got == want);  // exact, integer-valued arithmetic
        CHECK(got == static_cast<double>(static_cast<long long>(got)));
    }
}

TEST_CASE("monotone in every mask and gate by exhaustive small sweep") {
    const std::int64_t n = 4;
    const int c = 2, keys = 2, layers = 2;
    auto cost = [&](double g0, double g1, double m00, double m01, double m10, double m11) {
        const double gates[] = {g0, g1};
        const double occ[] = {m00, m01, m10, m11};
        return module_cost(1, gates, occ, n, c, keys);
    };
    const double levels[] = {0.0, 0.5, 1.0};
    for (double g0 : levels)
        for (double g1 : levels)
            for (double m : levels)
                for (double step : {0.25, 0.5}) {
                    // raising any single mask never lowers the cost
                    CHECK(cost(g0, g1, m + step, m, m, m) >= cost(g0, g1, m, m, m, m));
                    CHECK(cost(g0, g1, m, m, m + step, m) >= cost(g0, g1, m, m, m, m));
                    // raising any gate never lowers the cost
                    CHECK(cost(g0 + step, g1, m, m, m, m) >= cost(g0, g1, m, m, m, m));
                    CHECK(cost(g0, g1 + step, m, m, m, m) >= cost(g0, g1, m, m, m, m));
                }
}

TEST_CASE("doubling N doubles every term") {
    Rng rng(62);
    const double gates[] = {1.0, 0.5};
    const double occ[] = {0.25, 1.0, 0.0, 0.75};
    const double base = module_cost(1, gates, occ, 8, 3, 2);
    CHECK(module_cost(1, gates, occ, 16, 3, 2) == 2.0 * base);
}

TEST_CASE("total cost composes gate-weighted module costs") {
    const double gates0[] = {0.0, 0.0};
    const double costs[] = {100.0, 200.0};
    CHECK(total_cost(gates0, costs) == 0.0);
    const double gates1[] = {1.0, 0.0};
    const double costs1[] = {320.0, 10.0};
    CHECK(total_cost(gates1, costs1) == 320.0);
    const double gates2[] = {0.5, 0.25};
    CHECK(total_cost(gates2, costs) == 100.0);
    const double one[] = {1.0};
    CHECK_THROWS_AS(total_cost(std::span<const double>(one, 1), costs), DimensionError);
}

TEST_CASE("backbone flops: conv counting and additivity") {
    CHECK(backbone_flops({}) == 0.0);
    const ConvSpec one[] = {{4, 2, 2, 3}};
    CHECK(backbone_flops(one) == 288.0);  // 2*4*2*2*9
    const ConvSpec two[] = {{4, 2, 2, 3}, {4, 2, 2, 3}};
    CHECK(backbone_flops(two) == 576.0);
}

TEST_CASE("domain errors on nonpositive dimensions") {
    const double gates[] = {1.0};
    const double occ[] = {1.0};
    CHECK_THROWS_AS(module_cost(0, gates, occ, 0, 2, 1), DomainError);
    CHECK_THROWS_AS(module_cost(0, gates, occ, 4, 0, 1), DomainError);
    CHECK_THROWS_AS(module_cost(0, gates, occ, 4, 2, 0), DomainError);
}

TEST_CASE("corrected formula hoists the fixed terms out of the key sum") {
    const double gates[] = {1.0};
    const double occ[] = {1.0, 1.0};
    // literal: 2*(32 + 32 + 96); corrected: 2*32 + 32 + 96
    CHECK(module_cost(0, gates, occ, 4, 2, 2, CostFormula::Literal) == 320.0);
    CHECK(module_cost(0, gates, occ, 4, 2, 2, CostFormula::Corrected) == 192.0);
}

TEST_CASE("tape-level cost matches the plain function and differentiates") {
    Rng rng(63);
    const std::int64_t n = 9;
    const int c = 3, keys = 2, layers = 2;
    std::vector<Tensor> inputs;
    Tensor occ = Tensor::vec(layers * keys);
    for (auto& v : occ.values()) v = rng.uniform01();
    Tensor alphas = Tensor::vec(layers);
    alphas[0] = 0.4;
    alphas[1] = -0.2;
    inputs.push_back(occ);
    inputs.push_back(alphas);

    auto build = [&](Tape& t, std::vector<Var>& v) {
        Var gates_arr[2];
        Tensor sel0 = Tensor::vec(layers);
        sel0[0] = 1.0;
        Tensor sel1 = Tensor::vec(layers);
        sel1[1] = 1.0;
        gates_arr[0] = t.shifted_sigmoid(t.sum(t.mul(v[1], t.constant(sel0))), 0.0, 1.0);
        gates_arr[1] = t.shifted_sigmoid(t.sum(t.mul(v[1], t.constant(sel1))), 0.0, 1.0);
        std::span<const Var> gates(gates_arr, 2);
        Var costs[2];
        for (int j = 0; j < layers; ++j)
            costs[j] = module_cost_var(t, j, gates, v[0], n, c, keys);
        return t.log_floored(total_cost_var(t, gates, std::span<const Var>(costs, 2)), 1.0);
    };
    const double rel = fd::check(inputs, build, 1e-6);
    CHECK(rel < 1e-4);

    // value agreement with the plain function
    Tape t;
    std::vector<Var> vars{t.leaf(inputs[0]), t.leaf(inputs[1])};
    Var loss = build(t, vars);
    const double s0 = 1.0 / (1.0 + std::exp(-alphas[0]));
    const double s1 = 1.0 / (1.0 + std::exp(-alphas[1]));
    const double gates_p[] = {s0, s1};
    const double mc0 = module_cost(0, gates_p, occ.values(), n, c, keys);
    const double mc1 = module_cost(1, gates_p, occ.values(), n, c, keys);
    const double costs_p[] = {mc0, mc1};
    CHECK(t.value(loss)[0] ==
          doctest::Approx(std::log(total_cost(gates_p, costs_p))).epsilon(1e-12));
}
