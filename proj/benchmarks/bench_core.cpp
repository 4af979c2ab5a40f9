#include <benchmark/benchmark.h>

#include "acla/attention.hpp"
#include "acla/metrics.hpp"

namespace {

using namespace acla;

Tensor random_map(int h, int w, int c, Rng& rng) {
    Tensor t = Tensor::map(h, w, c);
    for (auto& v : t.values()) v = rng.uniform01();
    return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor x = random_map(32, 32, c, rng);
    Tensor k = Tensor::kernel3(c, c);
    for (auto& v : k.values()) v = rng.uniform01() - 0.5;
    for (auto _ : state) {
        Tape tape;
        benchmark::DoNotOptimize(tape.conv3x3(tape.leaf(x), tape.leaf(k)));
    }
}
BENCHMARK(BM_Conv3x3Forward)->Arg(16)->Arg(32);

void BM_ClaForwardBackward(benchmark::State& state) {
    const int layers = static_cast<int>(state.range(0));
    const int c = 16, keys = 4;
    Rng rng(2);
    std::vector<Tensor> bank_maps;
    for (int l = 0; l < layers; ++l) {
        bank_maps.push_back(random_map(32, 32, c, rng));
        bank_maps.back().set_requires_grad(true);
    }
    const int kl = keys * layers;
    Tensor w_off = Tensor::matrix(c, 2 * kl);
    Tensor b_off = Tensor::vec(2 * kl);
    Tensor w_f = Tensor::matrix(c, kl);
    Tensor b_f = Tensor::vec(kl);
    Tensor w_g = Tensor::matrix(c, c);
    Tensor b_g = Tensor::vec(c);
    for (Tensor* t : {&w_off, &w_f, &w_g})
        for (auto& v : t->values()) v = 0.1 * (rng.uniform01() - 0.5);
    for (Tensor* t : {&w_off, &b_off, &w_f, &b_f, &w_g, &b_g}) t->set_requires_grad(true);

    for (auto _ : state) {
        for (Tensor* t : {&w_off, &b_off, &w_f, &b_f, &w_g, &b_g}) t->zero_grad();
        for (auto& m : bank_maps) m.zero_grad();
        Tape tape;
        std::vector<Var> bank;
        for (auto& m : bank_maps) bank.push_back(tape.leaf(m));
        ClaVars vars{tape.leaf(w_off), tape.leaf(b_off), tape.leaf(w_f),
                     tape.leaf(b_f),   tape.leaf(w_g),   tape.leaf(b_g)};
        ClaOptions opt;
        opt.key_count = keys;
        Var y = cla_forward(tape, bank, vars, opt);
        Var loss = tape.mean(y);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_ClaForwardBackward)->Arg(1)->Arg(4);

void BM_Ssim(benchmark::State& state) {
    Rng rng(3);
    Tensor a = random_map(64, 64, 1, rng);
    Tensor b = random_map(64, 64, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
