#include "acla/attention.hpp"

#include <cmath>
#include <memory>

namespace acla {

namespace {

struct MapDims {
    int h, w, c;
    std::int64_t queries() const { return static_cast<std::int64_t>(h) * w; }
};

MapDims check_bank(std::span<const Var> bank, const Tape& tape) {
    if (bank.empty()) throw ContractError("attention requires a non-empty layer bank");
    const Tensor& first = tape.value(bank[0]);
    MapDims d{first.height(), first.width(), first.channels()};
    if (d.h < 1 || d.w < 1 || d.c < 1) throw DimensionError("attention input map is empty");
    for (const Var v : bank) {
        const Tensor& t = tape.value(v);
        if (t.height() != d.h || t.width() != d.w || t.channels() != d.c)
            throw DimensionError("all layer-bank entries must share one shape");
    }
    return d;
}

// Dense per-query context shared by the CLA and ACLA kernels.
struct ClaSaved {
    int h, w, c, keys, layers;
    std::vector<double> offsets;  // N * 2*K*L, layer-major (dr, dc)
    std::vector<double> weights;  // N * K*L, post-softmax
};

}  // namespace

// ---------------------------------------------------------------------------
// pairwise (NL / CLNL) attention

Var pairwise_attention(Tape& tape, Var theta, std::span<const Var> phis,
                       std::span<const Var> gs) {
    if (phis.size() != gs.size() || phis.empty())
        throw ContractError("pairwise attention needs matching phi/g key maps");
    const Tensor& q = tape.value(theta);
    const MapDims d{q.height(), q.width(), q.channels()};
    for (std::size_t l = 0; l < phis.size(); ++l) {
        const Tensor& p = tape.value(phis[l]);
        const Tensor& g = tape.value(gs[l]);
        if (p.height() != d.h || p.width() != d.w || p.channels() != d.c ||
            g.height() != d.h || g.width() != d.w || g.channels() != d.c)
            throw DimensionError("pairwise attention maps must share the query shape");
    }

    bool ng = tape.needs_grad(theta);
    for (std::size_t l = 0; l < phis.size(); ++l)
        ng = ng || tape.needs_grad(phis[l]) || tape.needs_grad(gs[l]);

    const std::int64_t n = d.queries();
    const std::int64_t layers = static_cast<std::int64_t>(phis.size());
    const std::int64_t m = n * layers;  // total key count
    Var out = tape.alloc_node({d.h, d.w, d.c, 1}, ng);

    std::vector<const double*> phi_ptr(phis.size()), g_ptr(gs.size());
    for (std::size_t l = 0; l < phis.size(); ++l) {
        phi_ptr[l] = tape.data(phis[l]).data();
        g_ptr[l] = tape.data(gs[l]).data();
    }
    {
        auto th = tape.data(theta);
        auto o = tape.data(out);
        std::vector<double> logits(static_cast<std::size_t>(m));
        std::vector<double> att(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < n; ++i) {
            const double* qi = th.data() + i * d.c;
            for (std::int64_t l = 0; l < layers; ++l)
                for (std::int64_t p = 0; p < n; ++p) {
                    const double* kp = phi_ptr[l] + p * d.c;
                    double dot = 0.0;
                    for (int ch = 0; ch < d.c; ++ch) dot += qi[ch] * kp[ch];
                    logits[l * n + p] = dot;
                }
            stable_softmax(logits, att);
            double* oi = o.data() + i * d.c;
            for (int ch = 0; ch < d.c; ++ch) oi[ch] = 0.0;
            for (std::int64_t l = 0; l < layers; ++l)
                for (std::int64_t p = 0; p < n; ++p) {
                    const double a = att[l * n + p];
                    const double* gp = g_ptr[l] + p * d.c;
                    for (int ch = 0; ch < d.c; ++ch) oi[ch] += a * gp[ch];
                }
        }
    }

    if (ng) {
        std::vector<Var> phiv(phis.begin(), phis.end());
        std::vector<Var> gv(gs.begin(), gs.end());
        tape.push_record([theta, phiv, gv, out, d, n, layers, m](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto th = t.data(theta);
            auto gth = t.grad_accum(theta);
            std::vector<const double*> phi_ptr(phiv.size()), g_ptr(gv.size());
            std::vector<std::span<double>> gphi(phiv.size()), gg(gv.size());
            for (std::size_t l = 0; l < phiv.size(); ++l) {
                phi_ptr[l] = t.data(phiv[l]).data();
                g_ptr[l] = t.data(gv[l]).data();
                gphi[l] = t.grad_accum(phiv[l]);
                gg[l] = t.grad_accum(gv[l]);
            }
            std::vector<double> logits(static_cast<std::size_t>(m));
            std::vector<double> att(static_cast<std::size_t>(m));
            for (std::int64_t i = 0; i < n; ++i) {
                const double* qi = th.data() + i * d.c;
                const double* dyi = go.data() + i * d.c;
                for (std::int64_t l = 0; l < layers; ++l)
                    for (std::int64_t p = 0; p < n; ++p) {
                        const double* kp = phi_ptr[l] + p * d.c;
                        double dot = 0.0;
                        for (int ch = 0; ch < d.c; ++ch) dot += qi[ch] * kp[ch];
                        logits[l * n + p] = dot;
                    }
                stable_softmax(logits, att);
                // s1 = sum_m a_m (g_m . dy)
                double s1 = 0.0;
                for (std::int64_t l = 0; l < layers; ++l)
                    for (std::int64_t p = 0; p < n; ++p) {
                        const double* gp = g_ptr[l] + p * d.c;
                        double dot = 0.0;
                        for (int ch = 0; ch < d.c; ++ch) dot += gp[ch] * dyi[ch];
                        s1 += att[l * n + p] * dot;
                    }
                for (std::int64_t l = 0; l < layers; ++l)
                    for (std::int64_t p = 0; p < n; ++p) {
                        const double a = att[l * n + p];
                        const double* gp = g_ptr[l] + p * d.c;
                        const double* kp = phi_ptr[l] + p * d.c;
                        double gdot = 0.0;
                        for (int ch = 0; ch < d.c; ++ch) gdot += gp[ch] * dyi[ch];
                        if (!gg[l].empty()) {
                            double* dst = gg[l].data() + p * d.c;
                            for (int ch = 0; ch < d.c; ++ch) dst[ch] += a * dyi[ch];
                        }
                        const double ddot = a * (gdot - s1);
                        if (!gth.empty()) {
                            double* dst = gth.data() + i * d.c;
                            for (int ch = 0; ch < d.c; ++ch) dst[ch] += ddot * kp[ch];
                        }
                        if (!gphi[l].empty()) {
                            double* dst = gphi[l].data() + p * d.c;
                            for (int ch = 0; ch < d.c; ++ch) dst[ch] += ddot * qi[ch];
                        }
                    }
            }
        });
    }
    return out;
}

Var nl_forward(Tape& tape, Var x, const NlVars& p) {
    const Var bank[] = {x};
    return clnl_forward(tape, bank, p);
}

Var clnl_forward(Tape& tape, std::span<const Var> bank, const NlVars& p) {
    check_bank(bank, tape);
    const Var query = bank.back();
    Var theta = tape.conv1x1(query, p.w_theta, p.b_theta);
    std::vector<Var> phis, gs;
    phis.reserve(bank.size());
    gs.reserve(bank.size());
    for (const Var layer : bank) {
        phis.push_back(tape.conv1x1(layer, p.w_phi, p.b_phi));
        gs.push_back(tape.conv1x1(layer, p.w_value, p.b_value));
    }
    return pairwise_attention(tape, theta, phis, gs);
}

// ---------------------------------------------------------------------------
// CLA

namespace {

void check_cla_params(const Tape& tape, const ClaVars& p, int c, int keys, int layers) {
    const Shape wo = tape.value(p.w_offset).shape();
    const Shape wf = tape.value(p.w_weight).shape();
    const Shape wg = tape.value(p.w_value).shape();
    if (wo.d0 != c || wo.d1 != 2 * keys * layers)
        throw DimensionError("offset projection must be C x 2*K*L");
    if (wf.d0 != c || wf.d1 != keys * layers)
        throw DimensionError("weight projection must be C x K*L");
    if (wg.d0 != c || wg.d1 != c) throw DimensionError("value embedding must be C x C");
    if (tape.value(p.b_offset).size() != 2 * keys * layers ||
        tape.value(p.b_weight).size() != keys * layers ||
        tape.value(p.b_value).size() != c)
        throw DimensionError("attention bias lengths are inconsistent");
}

}  // namespace

Var cla_forward(Tape& tape, std::span<const Var> bank, const ClaVars& p,
                const ClaOptions& opt) {
    if (opt.key_count < 1) throw ContractError("cla_forward requires K >= 1");
    const MapDims d = check_bank(bank, tape);
    const int K = opt.key_count;
    const int L = static_cast<int>(bank.size());
    const int kl = K * L;
    check_cla_params(tape, p, d.c, K, L);

    bool ng = tape.needs_grad(p.w_offset) || tape.needs_grad(p.b_offset) ||
              tape.needs_grad(p.w_weight) || tape.needs_grad(p.b_weight) ||
              tape.needs_grad(p.w_value) || tape.needs_grad(p.b_value);
    for (const Var v : bank) ng = ng || tape.needs_grad(v);

    const std::int64_t n = d.queries();
    Var out = tape.alloc_node({d.h, d.w, d.c, 1}, ng);

    auto saved = std::make_shared<ClaSaved>();
    saved->h = d.h;
    saved->w = d.w;
    saved->c = d.c;
    saved->keys = K;
    saved->layers = L;
    saved->offsets.resize(static_cast<std::size_t>(n) * 2 * kl);
    saved->weights.resize(static_cast<std::size_t>(n) * kl);

    if (opt.trace) opt.trace->assign(static_cast<std::size_t>(n), QueryTrace{});

    {
        const double* q_map = tape.data(bank.back()).data();
        const double* w_off = tape.data(p.w_offset).data();
        const double* b_off = tape.data(p.b_offset).data();
        const double* w_f = tape.data(p.w_weight).data();
        const double* b_f = tape.data(p.b_weight).data();
        const double* w_g = tape.data(p.w_value).data();
        const double* b_g = tape.data(p.b_value).data();
        auto o = tape.data(out);

        std::vector<double> logits(static_cast<std::size_t>(kl));
        std::vector<double> value(static_cast<std::size_t>(d.c));
        for (std::int64_t i = 0; i < n; ++i) {
            const int qr = static_cast<int>(i / d.w);
            const int qc = static_cast<int>(i % d.w);
            const double* qi = q_map + i * d.c;
            double* off = saved->offsets.data() + i * 2 * kl;
            double* wts = saved->weights.data() + i * kl;

            for (int t = 0; t < 2 * kl; ++t) off[t] = b_off[t];
            for (int ci = 0; ci < d.c; ++ci) {
                const double v = qi[ci];
                const double* row = w_off + static_cast<std::int64_t>(ci) * 2 * kl;
                for (int t = 0; t < 2 * kl; ++t) off[t] += v * row[t];
            }
            for (int u = 0; u < kl; ++u) logits[u] = b_f[u];
            for (int ci = 0; ci < d.c; ++ci) {
                const double v = qi[ci];
                const double* row = w_f + static_cast<std::int64_t>(ci) * kl;
                for (int u = 0; u < kl; ++u) logits[u] += v * row[u];
            }
            stable_softmax(logits, {wts, static_cast<std::size_t>(kl)});

            double* oi = o.data() + i * d.c;
            for (int ch = 0; ch < d.c; ++ch) oi[ch] = 0.0;
            QueryTrace* qt = nullptr;
            if (opt.trace) {
                qt = &(*opt.trace)[static_cast<std::size_t>(i)];
                qt->row = qr;
                qt->col = qc;
                qt->keys.reserve(static_cast<std::size_t>(kl));
            }
            for (int l = 0; l < L; ++l) {
                const Tensor& layer_map = tape.value(bank[l]);
                for (int k = 0; k < K; ++k) {
                    const int u = l * K + k;
                    const Position pos{qr + off[2 * u], qc + off[2 * u + 1]};
                    sample_bilinear(layer_map, pos, value);
                    const double wu = wts[u];
                    for (int co = 0; co < d.c; ++co) {
                        double acc = b_g[co];
                        for (int ci = 0; ci < d.c; ++ci)
                            acc += value[ci] * w_g[static_cast<std::int64_t>(ci) * d.c + co];
                        oi[co] += wu * acc;
                    }
                    if (qt) {
                        KeySample ks;
                        ks.layer = l;
                        ks.key = k;
                        ks.offset_row = off[2 * u];
                        ks.offset_col = off[2 * u + 1];
                        ks.position = Position{
                            std::min(std::max(pos.row, 0.0), static_cast<double>(d.h - 1)),
                            std::min(std::max(pos.col, 0.0), static_cast<double>(d.w - 1))};
                        ks.value = value;
                        ks.weight = wu;
                        qt->keys.push_back(std::move(ks));
                    }
                }
            }
        }
    }

    if (ng) {
        std::vector<Var> bankv(bank.begin(), bank.end());
        const ClaVars pc = p;
        tape.push_record([bankv, pc, out, saved](Tape& t) {
            if (!t.grad_live(out)) return;
            const int c = saved->c, K = saved->keys, L = saved->layers;
            const int kl = K * L;
            const std::int64_t n = static_cast<std::int64_t>(saved->h) * saved->w;
            auto go = t.grad_of(out);
            const double* q_map = t.data(bankv.back()).data();
            const double* w_off = t.data(pc.w_offset).data();
            const double* w_f = t.data(pc.w_weight).data();
            const double* w_g = t.data(pc.w_value).data();
            const double* b_g = t.data(pc.b_value).data();
            auto g_w_off = t.grad_accum(pc.w_offset);
            auto g_b_off = t.grad_accum(pc.b_offset);
            auto g_w_f = t.grad_accum(pc.w_weight);
            auto g_b_f = t.grad_accum(pc.b_weight);
            auto g_w_g = t.grad_accum(pc.w_value);
            auto g_b_g = t.grad_accum(pc.b_value);
            std::vector<std::span<double>> g_bank(bankv.size());
            for (std::size_t l = 0; l < bankv.size(); ++l) g_bank[l] = t.grad_accum(bankv[l]);
            std::span<double> g_query = g_bank.back();

            std::vector<double> value(static_cast<std::size_t>(c));
            std::vector<double> gvalue(static_cast<std::size_t>(c));
            std::vector<double> d_gv(static_cast<std::size_t>(c));
            std::vector<double> dv(static_cast<std::size_t>(c));
            std::vector<double> dw(static_cast<std::size_t>(kl));
            std::vector<double> dlg(static_cast<std::size_t>(kl));
            std::vector<double> doff(static_cast<std::size_t>(2 * kl));

            for (std::int64_t i = 0; i < n; ++i) {
                const int qr = static_cast<int>(i / saved->w);
                const int qc = static_cast<int>(i % saved->w);
                const double* qi = q_map + i * c;
                const double* off = saved->offsets.data() + i * 2 * kl;
                const double* wts = saved->weights.data() + i * kl;
                const double* dyi = go.data() + i * c;

                std::fill(dw.begin(), dw.end(), 0.0);
                std::fill(doff.begin(), doff.end(), 0.0);

                for (int l = 0; l < L; ++l) {
                    const Tensor& layer_map = t.value(bankv[l]);
                    for (int k = 0; k < K; ++k) {
                        const int u = l * K + k;
                        const Position pos{qr + off[2 * u], qc + off[2 * u + 1]};
                        const BilinearFootprint fp =
                            resolve_footprint(saved->h, saved->w, pos);
                        sample_bilinear(layer_map, pos, value);
                        // gv = g(value); dcoeff = gv . dy
                        double dcoeff = 0.0;
                        for (int co = 0; co < c; ++co) {
                            double acc = b_g[co];
                            for (int ci = 0; ci < c; ++ci)
                                acc += value[ci] * w_g[static_cast<std::int64_t>(ci) * c + co];
                            gvalue[co] = acc;
                            dcoeff += acc * dyi[co];
                        }
                        const double wu = wts[u];
                        dw[u] += dcoeff;
                        for (int co = 0; co < c; ++co) d_gv[co] = wu * dyi[co];
                        if (!g_b_g.empty())
                            for (int co = 0; co < c; ++co) g_b_g[co] += d_gv[co];
                        for (int ci = 0; ci < c; ++ci) {
                            const double* row = w_g + static_cast<std::int64_t>(ci) * c;
                            double acc = 0.0;
                            for (int co = 0; co < c; ++co) acc += row[co] * d_gv[co];
                            dv[ci] = acc;
                        }
                        if (!g_w_g.empty())
                            for (int ci = 0; ci < c; ++ci) {
                                double* row = g_w_g.data() + static_cast<std::int64_t>(ci) * c;
                                const double v = value[ci];
                                for (int co = 0; co < c; ++co) row[co] += v * d_gv[co];
                            }
                        const PositionGrad pg =
                            sample_bilinear_backward(layer_map, fp, dv, g_bank[l]);
                        doff[2 * u] += pg.d_row;
                        doff[2 * u + 1] += pg.d_col;
                    }
                }
                // softmax backward over the joint logits
                double dot = 0.0;
                for (int u = 0; u < kl; ++u) dot += dw[u] * wts[u];
                for (int u = 0; u < kl; ++u) dlg[u] = wts[u] * (dw[u] - dot);

                if (!g_b_f.empty())
                    for (int u = 0; u < kl; ++u) g_b_f[u] += dlg[u];
                if (!g_b_off.empty())
                    for (int v = 0; v < 2 * kl; ++v) g_b_off[v] += doff[v];
                for (int ci = 0; ci < c; ++ci) {
                    const double v = qi[ci];
                    double acc = 0.0;
                    const double* frow = w_f + static_cast<std::int64_t>(ci) * kl;
                    const double* orow = w_off + static_cast<std::int64_t>(ci) * 2 * kl;
                    for (int u = 0; u < kl; ++u) acc += frow[u] * dlg[u];
                    for (int tix = 0; tix < 2 * kl; ++tix) acc += orow[tix] * doff[tix];
                    if (!g_query.empty()) g_query[i * c + ci] += acc;
                    if (!g_w_f.empty()) {
                        double* row = g_w_f.data() + static_cast<std::int64_t>(ci) * kl;
                        for (int u = 0; u < kl; ++u) row[u] += v * dlg[u];
                    }
                    if (!g_w_off.empty()) {
                        double* row = g_w_off.data() + static_cast<std::int64_t>(ci) * 2 * kl;
                        for (int tix = 0; tix < 2 * kl; ++tix) row[tix] += v * doff[tix];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// ACLA

namespace {

struct AclaSaved : ClaSaved {
    std::vector<double> m_hat;   // relaxed mask, N * K*L
    std::vector<double> m_fwd;   // value used in the forward product
    bool soft_forward = false;
    bool force_on = false;
    double tau = 1.0;
};

}  // namespace

AclaResult acla_forward(Tape& tape, std::span<const Var> bank, const AclaVars& p,
                        const AclaOptions& opt) {
    if (opt.key_count < 1) throw ContractError("acla_forward requires K >= 1");
    if (opt.mode == GateMode::Train && opt.mask_rng == nullptr)
        throw ContractError("acla_forward in train mode needs a mask rng");
    if (!(opt.tau > 0.0)) throw DomainError("acla_forward: temperature must be positive");
    const MapDims d = check_bank(bank, tape);
    const int K = opt.key_count;
    const int L = static_cast<int>(bank.size());
    const int kl = K * L;
    check_cla_params(tape, p.cla, d.c, K, L);
    if (tape.value(p.w_mask).shape().d0 != d.c || tape.value(p.w_mask).shape().d1 != 1 ||
        tape.value(p.b_mask).size() != 1)
        throw DimensionError("mask unit must be C x 1 with scalar bias");
    if (!opt.layer_gates.empty() && static_cast<int>(opt.layer_gates.size()) != L)
        throw DimensionError("layer gate count must match bank size");

    bool ng = tape.needs_grad(p.cla.w_offset) || tape.needs_grad(p.cla.b_offset) ||
              tape.needs_grad(p.cla.w_weight) || tape.needs_grad(p.cla.b_weight) ||
              tape.needs_grad(p.cla.w_value) || tape.needs_grad(p.cla.b_value) ||
              tape.needs_grad(p.w_mask) || tape.needs_grad(p.b_mask);
    for (const Var v : bank) ng = ng || tape.needs_grad(v);
    for (const Var v : opt.layer_gates) ng = ng || tape.needs_grad(v);

    const std::int64_t n = d.queries();
    Var out = tape.alloc_node({d.h, d.w, d.c, 1}, ng);
    Var occ = tape.alloc_node({kl, 1, 1, 1}, ng);

    auto saved = std::make_shared<AclaSaved>();
    saved->h = d.h;
    saved->w = d.w;
    saved->c = d.c;
    saved->keys = K;
    saved->layers = L;
    saved->soft_forward = opt.soft_forward;
    saved->force_on = opt.force_masks_on;
    saved->tau = opt.tau;
    saved->offsets.resize(static_cast<std::size_t>(n) * 2 * kl);
    saved->weights.resize(static_cast<std::size_t>(n) * kl);
    saved->m_hat.resize(static_cast<std::size_t>(n) * kl);
    saved->m_fwd.resize(static_cast<std::size_t>(n) * kl);

    if (opt.trace) opt.trace->assign(static_cast<std::size_t>(n), QueryTrace{});

    {
        const double* q_map = tape.data(bank.back()).data();
        const double* w_off = tape.data(p.cla.w_offset).data();
        const double* b_off = tape.data(p.cla.b_offset).data();
        const double* w_f = tape.data(p.cla.w_weight).data();
        const double* b_f = tape.data(p.cla.b_weight).data();
        const double* w_g = tape.data(p.cla.w_value).data();
        const double* b_g = tape.data(p.cla.b_value).data();
        const double* w_m = tape.data(p.w_mask).data();
        const double b_m = tape.data(p.b_mask)[0];
        std::vector<double> gate_value(static_cast<std::size_t>(L), 1.0);
        for (int l = 0; l < L; ++l)
            if (!opt.layer_gates.empty()) gate_value[l] = tape.data(opt.layer_gates[l])[0];
        auto o = tape.data(out);
        auto occ_out = tape.data(occ);
        for (int u = 0; u < kl; ++u) occ_out[u] = 0.0;

        std::vector<double> logits(static_cast<std::size_t>(kl));
        std::vector<double> value(static_cast<std::size_t>(d.c));
        for (std::int64_t i = 0; i < n; ++i) {
            const int qr = static_cast<int>(i / d.w);
            const int qc = static_cast<int>(i % d.w);
            const double* qi = q_map + i * d.c;
            double* off = saved->offsets.data() + i * 2 * kl;
            double* wts = saved->weights.data() + i * kl;
            double* mh = saved->m_hat.data() + i * kl;
            double* mf = saved->m_fwd.data() + i * kl;

            for (int t = 0; t < 2 * kl; ++t) off[t] = b_off[t];
            for (int ci = 0; ci < d.c; ++ci) {
                const double v = qi[ci];
                const double* row = w_off + static_cast<std::int64_t>(ci) * 2 * kl;
                for (int t = 0; t < 2 * kl; ++t) off[t] += v * row[t];
            }
            for (int u = 0; u < kl; ++u) logits[u] = b_f[u];
            for (int ci = 0; ci < d.c; ++ci) {
                const double v = qi[ci];
                const double* row = w_f + static_cast<std::int64_t>(ci) * kl;
                for (int u = 0; u < kl; ++u) logits[u] += v * row[u];
            }
            stable_softmax(logits, {wts, static_cast<std::size_t>(kl)});

            double* oi = o.data() + i * d.c;
            for (int ch = 0; ch < d.c; ++ch) oi[ch] = 0.0;
            QueryTrace* qt = nullptr;
            if (opt.trace) {
                qt = &(*opt.trace)[static_cast<std::size_t>(i)];
                qt->row = qr;
                qt->col = qc;
                qt->keys.reserve(static_cast<std::size_t>(kl));
            }
            for (int l = 0; l < L; ++l) {
                const Tensor& layer_map = tape.value(bank[l]);
                const double s_l = gate_value[l];
                for (int k = 0; k < K; ++k) {
                    const int u = l * K + k;
                    const Position pos{qr + off[2 * u], qc + off[2 * u + 1]};
                    sample_bilinear(layer_map, pos, value);
                    double beta = b_m;
                    for (int ci = 0; ci < d.c; ++ci) beta += w_m[ci] * value[ci];
                    const double delta = opt.mode == GateMode::Train
                                             ? opt.mask_rng->gumbel() - opt.mask_rng->gumbel()
                                             : 0.0;
                    const double m_hat = soft_mask_with_noise(beta, delta, opt.tau);
                    double m_val;
                    if (opt.force_masks_on)
                        m_val = 1.0;
                    else if (opt.soft_forward)
                        m_val = m_hat;
                    else
                        m_val = harden(m_hat) ? 1.0 : 0.0;
                    mh[u] = m_hat;
                    mf[u] = m_val;
                    occ_out[u] += m_val / static_cast<double>(n);

                    const double coeff = s_l * m_val * wts[u];
                    if (coeff != 0.0) {
                        for (int co = 0; co < d.c; ++co) {
                            double acc = b_g[co];
                            for (int ci = 0; ci < d.c; ++ci)
                                acc += value[ci] * w_g[static_cast<std::int64_t>(ci) * d.c + co];
                            oi[co] += coeff * acc;
                        }
                    }
                    if (qt) {
                        KeySample ks;
                        ks.layer = l;
                        ks.key = k;
                        ks.offset_row = off[2 * u];
                        ks.offset_col = off[2 * u + 1];
                        ks.position = Position{
                            std::min(std::max(pos.row, 0.0), static_cast<double>(d.h - 1)),
                            std::min(std::max(pos.col, 0.0), static_cast<double>(d.w - 1))};
                        ks.value = value;
                        ks.weight = wts[u];
                        ks.beta = beta;
                        ks.mask = opt.force_masks_on ? 1 : (harden(m_hat) ? 1 : 0);
                        qt->keys.push_back(std::move(ks));
                    }
                }
            }
        }
    }

    if (ng) {
        std::vector<Var> bankv(bank.begin(), bank.end());
        std::vector<Var> gates(opt.layer_gates.begin(), opt.layer_gates.end());
        const AclaVars pc = p;
        tape.push_record([bankv, gates, pc, out, occ, saved](Tape& t) {
            const bool have_dy = t.grad_live(out);
            const bool have_docc = t.grad_live(occ);
            if (!have_dy && !have_docc) return;
            const int c = saved->c, K = saved->keys, L = saved->layers;
            const int kl = K * L;
            const std::int64_t n = static_cast<std::int64_t>(saved->h) * saved->w;
            auto go = have_dy ? t.grad_of(out) : std::span<const double>{};
            auto docc = have_docc ? t.grad_of(occ) : std::span<const double>{};
            const double* q_map = t.data(bankv.back()).data();
            const double* w_off = t.data(pc.cla.w_offset).data();
            const double* w_f = t.data(pc.cla.w_weight).data();
            const double* w_g = t.data(pc.cla.w_value).data();
            const double* b_g = t.data(pc.cla.b_value).data();
            const double* w_m = t.data(pc.w_mask).data();
            auto g_w_off = t.grad_accum(pc.cla.w_offset);
            auto g_b_off = t.grad_accum(pc.cla.b_offset);
            auto g_w_f = t.grad_accum(pc.cla.w_weight);
            auto g_b_f = t.grad_accum(pc.cla.b_weight);
            auto g_w_g = t.grad_accum(pc.cla.w_value);
            auto g_b_g = t.grad_accum(pc.cla.b_value);
            auto g_w_m = t.grad_accum(pc.w_mask);
            auto g_b_m = t.grad_accum(pc.b_mask);
            std::vector<std::span<double>> g_bank(bankv.size());
            for (std::size_t l = 0; l < bankv.size(); ++l) g_bank[l] = t.grad_accum(bankv[l]);
            std::span<double> g_query = g_bank.back();
            std::vector<double> gate_value(static_cast<std::size_t>(L), 1.0);
            std::vector<std::span<double>> g_gates(static_cast<std::size_t>(L));
            for (int l = 0; l < L; ++l)
                if (!gates.empty()) {
                    gate_value[l] = t.data(gates[l])[0];
                    g_gates[l] = t.grad_accum(gates[l]);
                }

            std::vector<double> value(static_cast<std::size_t>(c));
            std::vector<double> gvalue(static_cast<std::size_t>(c));
            std::vector<double> d_gv(static_cast<std::size_t>(c));
            std::vector<double> dv(static_cast<std::size_t>(c));
            std::vector<double> dw(static_cast<std::size_t>(kl));
            std::vector<double> dlg(static_cast<std::size_t>(kl));
            std::vector<double> doff(static_cast<std::size_t>(2 * kl));

            for (std::int64_t i = 0; i < n; ++i) {
                const int qr = static_cast<int>(i / saved->w);
                const int qc = static_cast<int>(i % saved->w);
                const double* qi = q_map + i * c;
                const double* off = saved->offsets.data() + i * 2 * kl;
                const double* wts = saved->weights.data() + i * kl;
                const double* mh = saved->m_hat.data() + i * kl;
                const double* mf = saved->m_fwd.data() + i * kl;
                const double* dyi = have_dy ? go.data() + i * c : nullptr;

                std::fill(dw.begin(), dw.end(), 0.0);
                std::fill(doff.begin(), doff.end(), 0.0);

                for (int l = 0; l < L; ++l) {
                    const Tensor& layer_map = t.value(bankv[l]);
                    const double s_l = gate_value[l];
                    for (int k = 0; k < K; ++k) {
                        const int u = l * K + k;
                        const Position pos{qr + off[2 * u], qc + off[2 * u + 1]};
                        const BilinearFootprint fp =
                            resolve_footprint(saved->h, saved->w, pos);
                        sample_bilinear(layer_map, pos, value);
                        double dcoeff = 0.0;
                        if (dyi) {
                            for (int co = 0; co < c; ++co) {
                                double acc = b_g[co];
                                for (int ci = 0; ci < c; ++ci)
                                    acc += value[ci] * w_g[static_cast<std::int64_t>(ci) * c + co];
                                gvalue[co] = acc;
                                dcoeff += acc * dyi[co];
                            }
                        }
                        const double wu = wts[u];
                        const double m_val = mf[u];

                        // d m_hat: straight-through from the output product
                        // plus the occupancy mean.  The forced-on debug mode
                        // detaches the mask path entirely.
                        double dm = 0.0;
                        if (dyi) {
                            dw[u] += s_l * m_val * dcoeff;
                            dm += s_l * wu * dcoeff;
                            if (!g_gates.empty() && !g_gates[l].empty())
                                g_gates[l][0] += m_val * wu * dcoeff;
                        }
                        if (have_docc) dm += docc[u] / static_cast<double>(n);
                        std::fill(dv.begin(), dv.end(), 0.0);
                        if (!saved->force_on && dm != 0.0) {
                            const double sig = mh[u];
                            const double dbeta = dm * sig * (1.0 - sig) / saved->tau;
                            if (!g_b_m.empty()) g_b_m[0] += dbeta;
                            for (int ci = 0; ci < c; ++ci) {
                                if (!g_w_m.empty()) g_w_m[ci] += dbeta * value[ci];
                                dv[ci] += dbeta * w_m[ci];
                            }
                        }
                        if (dyi) {
                            const double coeff = s_l * m_val * wu;
                            for (int co = 0; co < c; ++co) d_gv[co] = coeff * dyi[co];
                            if (!g_b_g.empty())
                                for (int co = 0; co < c; ++co) g_b_g[co] += d_gv[co];
                            for (int ci = 0; ci < c; ++ci) {
                                const double* row = w_g + static_cast<std::int64_t>(ci) * c;
                                double acc = 0.0;
                                for (int co = 0; co < c; ++co) acc += row[co] * d_gv[co];
                                dv[ci] += acc;
                            }
                            if (!g_w_g.empty())
                                for (int ci = 0; ci < c; ++ci) {
                                    double* row = g_w_g.data() + static_cast<std::int64_t>(ci) * c;
                                    const double v = value[ci];
                                    for (int co = 0; co < c; ++co) row[co] += v * d_gv[co];
                                }
                        }
                        const PositionGrad pg =
                            sample_bilinear_backward(layer_map, fp, dv, g_bank[l]);
                        doff[2 * u] += pg.d_row;
                        doff[2 * u + 1] += pg.d_col;
                    }
                }
                double dot = 0.0;
                for (int u = 0; u < kl; ++u) dot += dw[u] * wts[u];
                for (int u = 0; u < kl; ++u) dlg[u] = wts[u] * (dw[u] - dot);

                if (!g_b_f.empty())
                    for (int u = 0; u < kl; ++u) g_b_f[u] += dlg[u];
                if (!g_b_off.empty())
                    for (int v = 0; v < 2 * kl; ++v) g_b_off[v] += doff[v];
                for (int ci = 0; ci < c; ++ci) {
                    const double v = qi[ci];
                    double acc = 0.0;
                    const double* frow = w_f + static_cast<std::int64_t>(ci) * kl;
                    const double* orow = w_off + static_cast<std::int64_t>(ci) * 2 * kl;
                    for (int u = 0; u < kl; ++u) acc += frow[u] * dlg[u];
                    for (int tix = 0; tix < 2 * kl; ++tix) acc += orow[tix] * doff[tix];
                    if (!g_query.empty()) g_query[i * c + ci] += acc;
                    if (!g_w_f.empty()) {
                        double* row = g_w_f.data() + static_cast<std::int64_t>(ci) * kl;
                        for (int u = 0; u < kl; ++u) row[u] += v * dlg[u];
                    }
                    if (!g_w_off.empty()) {
                        double* row = g_w_off.data() + static_cast<std::int64_t>(ci) * 2 * kl;
                        for (int tix = 0; tix < 2 * kl; ++tix) row[tix] += v * doff[tix];
                    }
                }
            }
        });
    }
    return {out, occ};
}

Var block_wrap(Tape& tape, Var x, Var y, Var w_out, Var b_out) {
    if (!(tape.value(x).shape() == tape.value(y).shape()))
        throw DimensionError("block_wrap: x and y must share one shape");
    return tape.add(tape.conv1x1(y, w_out, b_out), x);
}

}  // namespace acla
