#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "acla/attention.hpp"
#include "fd_check.hpp"

// Brute-force oracles for the attention variants, independent of the tape
// kernels: naive projections, naive softmax, hand-rolled bilinear lookup.
namespace oracle {

using namespace acla;


// Naive matrix forms used by every oracle below; independent of the tape.
std::vector<double> project(const Tensor& w, const Tensor& b,
                            std::span<const double> x) {
    const int rows = w.shape().d0, cols = w.shape().d1;
    std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
    for (int co = 0; co < cols; ++co) {
        double acc = b.size() ? b[co] : 0.0;
        for (int ci = 0; ci < rows; ++ci) acc += x[static_cast<std::size_t>(ci)] * w[ci * cols + co];
        out[static_cast<std::size_t>(co)] = acc;
    }
    return out;
}

std::vector<double> naive_softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) denom += std::exp(logits[i]);
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i]) / denom;
    return out;
}

// Hand-rolled bilinear lookup with border clamp (independent of the sampler).
std::vector<double> naive_bilinear(const Tensor& m, double r, double c) {
    r = std::min(std::max(r, 0.0), static_cast<double>(m.height() - 1));
    c = std::min(std::max(c, 0.0), static_cast<double>(m.width() - 1));
    int r0 = std::min(static_cast<int>(std::floor(r)), m.height() - 2);
    int c0 = std::min(static_cast<int>(std::floor(c)), m.width() - 2);
    if (r0 < 0) r0 = 0;
    if (c0 < 0) c0 = 0;
    const int r1 = std::min(r0 + 1, m.height() - 1), c1 = std::min(c0 + 1, m.width() - 1);
    const double fr = r - r0, fc = c - c0;
    std::vector<double> out(static_cast<std::size_t>(m.channels()));
    for (int ch = 0; ch < m.channels(); ++ch)
        out[static_cast<std::size_t>(ch)] = (1 - fr) * (1 - fc) * m.at(r0, c0, ch) +
                                            (1 - fr) * fc * m.at(r0, c1, ch) +
                                            fr * (1 - fc) * m.at(r1, c0, ch) +
                                            fr * fc * m.at(r1, c1, ch);
    return out;
}

struct NlTensors {
    Tensor w_theta, b_theta, w_phi, b_phi, w_g, b_g;
    NlTensors(int c, Rng& rng)
        : w_theta(fd::random_of({c, c, 1, 1}, rng, 0.6)),
          b_theta(fd::random_of({c, 1, 1, 1}, rng, 0.2)),
          w_phi(fd::random_of({c, c, 1, 1}, rng, 0.6)),
          b_phi(fd::random_of({c, 1, 1, 1}, rng, 0.2)),
          w_g(fd::random_of({c, c, 1, 1}, rng, 0.6)),
          b_g(fd::random_of({c, 1, 1, 1}, rng, 0.2)) {}
    NlVars bind(Tape& t) {
        return NlVars{t.leaf(w_theta), t.leaf(b_theta), t.leaf(w_phi),
                      t.leaf(b_phi),   t.leaf(w_g),     t.leaf(b_g)};
    }
};

// Brute-force CLNL over all (layer, position) pairs.
Tensor clnl_oracle(std::span<const Tensor> bank, NlTensors& p) {
    const Tensor& q = bank.back();
    const int h = q.height(), w = q.width(), c = q.channels();
    Tensor y = Tensor::map(h, w, c);
    for (int qr = 0; qr < h; ++qr)
        for (int qc = 0; qc < w; ++qc) {
            std::vector<double> qv(static_cast<std::size_t>(c));
            for (int ch = 0; ch < c; ++ch) qv[static_cast<std::size_t>(ch)] = q.at(qr, qc, ch);
            const auto theta = project(p.w_theta, p.b_theta, qv);
            std::vector<double> logits;
            for (const Tensor& layer : bank)
                for (int kr = 0; kr < h; ++kr)
                    for (int kc = 0; kc < w; ++kc) {
                        std::vector<double> kv(static_cast<std::size_t>(c));
                        for (int ch = 0; ch < c; ++ch)
                            kv[static_cast<std::size_t>(ch)] = layer.at(kr, kc, ch);
                        const auto phi = project(p.w_phi, p.b_phi, kv);
                        double dot = 0.0;
                        for (int ch = 0; ch < c; ++ch)
                            dot += theta[static_cast<std::size_t>(ch)] * phi[static_cast<std::size_t>(ch)];
                        logits.push_back(dot);
                    }
            const auto att = naive_softmax(logits);
            std::size_t n = 0;
            for (const Tensor& layer : bank)
                for (int kr = 0; kr < h; ++kr)
                    for (int kc = 0; kc < w; ++kc, ++n) {
                        std::vector<double> kv(static_cast<std::size_t>(c));
                        for (int ch = 0; ch < c; ++ch)
                            kv[static_cast<std::size_t>(ch)] = layer.at(kr, kc, ch);
                        const auto g = project(p.w_g, p.b_g, kv);
                        for (int ch = 0; ch < c; ++ch)
                            y.at(qr, qc, ch) += att[n] * g[static_cast<std::size_t>(ch)];
                    }
        }
    return y;
}

struct ClaTensors {
    Tensor w_off, b_off, w_f, b_f, w_g, b_g, w_m, b_m;
    ClaTensors(int c, int keys, int layers, Rng& rng, double off_scale = 1.0)
        : w_off(fd::random_of({c, 2 * keys * layers, 1, 1}, rng, 0.3)),
          b_off(fd::random_of({2 * keys * layers, 1, 1, 1}, rng, off_scale)),
          w_f(fd::random_of({c, keys * layers, 1, 1}, rng, 0.5)),
          b_f(fd::random_of({keys * layers, 1, 1, 1}, rng, 0.3)),
          w_g(fd::random_of({c, c, 1, 1}, rng, 0.6)),
          b_g(fd::random_of({c, 1, 1, 1}, rng, 0.2)),
          w_m(fd::random_of({c, 1, 1, 1}, rng, 1.0)),
          b_m(fd::random_of({1, 1, 1, 1}, rng, 0.5)) {}
    ClaVars bind_cla(Tape& t) {
        return ClaVars{t.leaf(w_off), t.leaf(b_off), t.leaf(w_f),
                       t.leaf(b_f),   t.leaf(w_g),   t.leaf(b_g)};
    }
    AclaVars bind_acla(Tape& t) {
        return AclaVars{bind_cla(t), t.leaf(w_m), t.leaf(b_m)};
    }
};

// Explicit weighted-sum oracle for CLA/ACLA (infer-mode masks).
Tensor cla_oracle(std::span<const Tensor> bank, ClaTensors& p, int keys, bool masked,
                  double tau, std::span<const double> gates,
                  std::vector<double>* occupancy = nullptr) {
    const Tensor& q = bank.back();
    const int h = q.height(), w = q.width(), c = q.channels();
    const int layers = static_cast<int>(bank.size());
    Tensor y = Tensor::map(h, w, c);
    if (occupancy) occupancy->assign(static_cast<std::size_t>(keys * layers), 0.0);
    for (int qr = 0; qr < h; ++qr)
        for (int qc = 0; qc < w; ++qc) {
            std::vector<double> qv(static_cast<std::size_t>(c));
            for (int ch = 0; ch < c; ++ch) qv[static_cast<std::size_t>(ch)] = q.at(qr, qc, ch);
            const auto off = project(p.w_off, p.b_off, qv);
            const auto wts = naive_softmax(project(p.w_f, p.b_f, qv));
            for (int l = 0; l < layers; ++l)
                for (int k = 0; k < keys; ++k) {
                    const int u = l * keys + k;
                    const auto v = naive_bilinear(bank[l], qr + off[2 * u], qc + off[2 * u + 1]);
                    double m_val = 1.0;
                    if (masked) {
                        double beta = p.b_m[0];
                        for (int ch = 0; ch < c; ++ch) beta += p.w_m[ch] * v[static_cast<std::size_t>(ch)];
                        const double m_hat = 1.0 / (1.0 + std::exp(-beta / tau));
                        m_val = m_hat > 0.5 ? 1.0 : 0.0;
                        if (occupancy)
                            (*occupancy)[static_cast<std::size_t>(u)] += m_val / (h * w);
                    }
                    const double s_l = gates.empty() ? 1.0 : gates[static_cast<std::size_t>(l)];
                    const auto g = project(p.w_g, p.b_g, v);
                    for (int ch = 0; ch < c; ++ch)
                        y.at(qr, qc, ch) += s_l * m_val * wts[u] * g[static_cast<std::size_t>(ch)];
                }
        }
    return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}


}  // namespace oracle
