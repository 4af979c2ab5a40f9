#include "acla/tape.hpp"

#include <algorithm>
#include <cmath>

#include "acla/gating.hpp"

namespace acla {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!(a.shape() == b.shape()))
        throw DimensionError(std::string(op) + ": operand shapes differ");
}

}  // namespace

Var Tape::leaf(Tensor& t) {
    auto it = leaves_.find(&t);
    if (it != leaves_.end()) return Var{it->second};
    Node n;
    n.value = t;
    n.needs_grad = t.requires_grad();
    n.bound = &t;
    nodes_.push_back(std::move(n));
    const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
    leaves_.emplace(&t, id);
    return Var{id};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::alloc_node(const Shape& shape, bool needs_grad) {
    Node n;
    n.value = Tensor::of_shape(shape);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::push_record(BackwardFn backward) {
    records_.push_back(std::move(backward));
}

std::vector<double>& Tape::grad_buffer(std::int32_t id) {
    auto& g = nodes_[id].grad;
    if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[id].value.size()), 0.0);
    return g;
}

std::span<double> Tape::grad_accum(Var v) {
    const auto id = check(v);
    if (!nodes_[id].needs_grad) return {};
    return grad_buffer(id);
}

bool Tape::grad_live(Var v) const {
    return !nodes_[check(v)].grad.empty();
}

std::span<const double> Tape::grad_of(Var v) const {
    const auto id = check(v);
    static const std::vector<double> kEmpty;
    return nodes_[id].grad.empty() ? std::span<const double>{} : std::span<const double>(nodes_[id].grad);
}

void Tape::backward(Var loss) {
    const auto id = check(loss);
    if (nodes_[id].value.size() != 1)
        throw ContractError("backward requires a scalar output");
    if (backward_done_) throw ContractError("backward already ran on this tape");
    backward_done_ = true;

    grad_buffer(id)[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)(*this);

    for (auto& [tensor, node_id] : leaves_) {
        Node& n = nodes_[node_id];
        if (n.bound && n.bound->requires_grad() && !n.grad.empty()) {
            auto& dst = n.bound->grad();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise and reduction ops

Var Tape::relu(Var x) {
    const Tensor& xv = value(x);
    Var out = alloc_node(xv.shape(), needs_grad(x));
    auto o = data(out);
    auto in = data(x);
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
    if (needs_grad(x)) {
        push_record([x, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gx = t.grad_accum(x);
            auto in = t.data(x);
            for (std::size_t i = 0; i < gx.size(); ++i)
                if (in[i] > 0.0) gx[i] += go[i];
        });
    }
    return out;
}

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Var out = alloc_node(value(a).shape(), needs_grad(a) || needs_grad(b));
    auto o = data(out);
    auto av = data(a);
    auto bv = data(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    if (needs_grad(out)) {
        push_record([a, b, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            if (auto ga = t.grad_accum(a); !ga.empty())
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            if (auto gb = t.grad_accum(b); !gb.empty())
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        });
    }
    return out;
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Var out = alloc_node(value(a).shape(), needs_grad(a) || needs_grad(b));
    auto o = data(out);
    auto av = data(a);
    auto bv = data(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
    if (needs_grad(out)) {
        push_record([a, b, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            if (auto ga = t.grad_accum(a); !ga.empty())
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            if (auto gb = t.grad_accum(b); !gb.empty())
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        });
    }
    return out;
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Var out = alloc_node(value(a).shape(), needs_grad(a) || needs_grad(b));
    auto o = data(out);
    auto av = data(a);
    auto bv = data(b);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
    if (needs_grad(out)) {
        push_record([a, b, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto av = t.data(a);
            auto bv = t.data(b);
            if (auto ga = t.grad_accum(a); !ga.empty())
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
            if (auto gb = t.grad_accum(b); !gb.empty())
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
        });
    }
    return out;
}

Var Tape::scale(Var a, double k) {
    Var out = alloc_node(value(a).shape(), needs_grad(a));
    auto o = data(out);
    auto av = data(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * k;
    if (needs_grad(a)) {
        push_record([a, out, k](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto ga = t.grad_accum(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * k;
        });
    }
    return out;
}

Var Tape::add_const(Var a, double k) {
    Var out = alloc_node(value(a).shape(), needs_grad(a));
    auto o = data(out);
    auto av = data(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + k;
    if (needs_grad(a)) {
        push_record([a, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto ga = t.grad_accum(a);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

Var Tape::sigmoid(Var x) {
    const Tensor& xv = value(x);
    for (double v : xv.values())
        if (!std::isfinite(v)) throw DomainError("sigmoid requires finite input");
    Var out = alloc_node(xv.shape(), needs_grad(x));
    auto o = data(out);
    auto in = data(x);
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-in[i]));
    if (needs_grad(x)) {
        push_record([x, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gx = t.grad_accum(x);
            auto o = t.data(out);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * o[i] * (1.0 - o[i]);
        });
    }
    return out;
}

Var Tape::shifted_sigmoid(Var x, double shift, double tau) {
    if (!(tau > 0.0)) throw DomainError("temperature must be positive");
    const Tensor& xv = value(x);
    Var out = alloc_node(xv.shape(), needs_grad(x));
    auto o = data(out);
    auto in = data(x);
    for (std::size_t i = 0; i < in.size(); ++i)
        o[i] = soft_mask_with_noise(in[i], shift, tau);
    if (needs_grad(x)) {
        push_record([x, out, tau](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gx = t.grad_accum(x);
            auto o = t.data(out);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += go[i] * o[i] * (1.0 - o[i]) / tau;
        });
    }
    return out;
}

void stable_softmax(std::span<const double> in, std::span<double> out) {
    double m = in[0];
    for (double v : in) m = std::max(m, v);
    double denom = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - m);
        denom += out[i];
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] /= denom;
}

Var Tape::softmax(Var logits) {
    const Tensor& xv = value(logits);
    if (xv.size() == 0) throw DomainError("softmax of an empty vector");
    for (double v : xv.values())
        if (!std::isfinite(v)) throw DomainError("softmax requires finite logits");
    Var out = alloc_node(xv.shape(), needs_grad(logits));
    stable_softmax(data(logits), data(out));
    if (needs_grad(logits)) {
        push_record([logits, out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gx = t.grad_accum(logits);
            auto s = t.data(out);
            double dot = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) dot += go[i] * s[i];
            for (std::size_t i = 0; i < s.size(); ++i) gx[i] += s[i] * (go[i] - dot);
        });
    }
    return out;
}

Var Tape::sum(Var x) {
    Var out = alloc_node({1, 1, 1, 1}, needs_grad(x));
    double acc = 0.0;
    for (double v : data(x)) acc += v;
    data(out)[0] = acc;
    if (needs_grad(x)) {
        push_record([x, out](Tape& t) {
            if (!t.grad_live(out)) return;
            const double g = t.grad_of(out)[0];
            auto gx = t.grad_accum(x);
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

Var Tape::mean(Var x) {
    const double n = static_cast<double>(value(x).size());
    Var out = alloc_node({1, 1, 1, 1}, needs_grad(x));
    double acc = 0.0;
    for (double v : data(x)) acc += v;
    data(out)[0] = acc / n;
    if (needs_grad(x)) {
        push_record([x, out, n](Tape& t) {
            if (!t.grad_live(out)) return;
            const double g = t.grad_of(out)[0] / n;
            auto gx = t.grad_accum(x);
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

Var Tape::mse(Var a, Var b) {
    check_same_shape(value(a), value(b), "mse");
    const double n = static_cast<double>(value(a).size());
    Var out = alloc_node({1, 1, 1, 1}, needs_grad(a) || needs_grad(b));
    auto av = data(a);
    auto bv = data(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    data(out)[0] = acc / n;
    if (needs_grad(out)) {
        push_record([a, b, out, n](Tape& t) {
            if (!t.grad_live(out)) return;
            const double g = 2.0 * t.grad_of(out)[0] / n;
            auto av = t.data(a);
            auto bv = t.data(b);
            if (auto ga = t.grad_accum(a); !ga.empty())
                for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * (av[i] - bv[i]);
            if (auto gb = t.grad_accum(b); !gb.empty())
                for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
        });
    }
    return out;
}

Var Tape::log_floored(Var x, double floor_value) {
    if (value(x).size() != 1) throw ContractError("log_floored expects a scalar");
    Var out = alloc_node({1, 1, 1, 1}, needs_grad(x));
    const double v = data(x)[0];
    const bool floored = v <= floor_value;
    data(out)[0] = std::log(floored ? floor_value : v);
    if (needs_grad(x)) {
        push_record([x, out, floored](Tape& t) {
            if (!t.grad_live(out)) return;
            if (floored) return;  // flat below the floor
            auto gx = t.grad_accum(x);
            gx[0] += t.grad_of(out)[0] / t.data(x)[0];
        });
    }
    return out;
}

Var Tape::add_n(std::span<const Var> terms) {
    if (terms.empty()) throw ContractError("add_n of zero terms");
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// convolutions

Var Tape::conv1x1(Var x, Var weight, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    const int c_in = xv.channels();
    const int rows = wv.shape().d0;
    const int c_out = wv.shape().d1;
    if (rows != c_in)
        throw DimensionError("conv1x1: weight row count must equal input channels");
    if (bias.valid() && value(bias).size() != c_out)
        throw DimensionError("conv1x1: bias length must equal output channels");

    const bool ng = needs_grad(x) || needs_grad(weight) || (bias.valid() && needs_grad(bias));
    Var out = alloc_node({xv.height(), xv.width(), c_out, 1}, ng);
    {
        auto o = data(out);
        auto in = data(x);
        auto wm = data(weight);
        const double* b = bias.valid() ? data(bias).data() : nullptr;
        const std::int64_t n = static_cast<std::int64_t>(xv.height()) * xv.width();
        for (std::int64_t p = 0; p < n; ++p) {
            const double* px = in.data() + p * c_in;
            double* po = o.data() + p * c_out;
            for (int co = 0; co < c_out; ++co) po[co] = b ? b[co] : 0.0;
            for (int ci = 0; ci < c_in; ++ci) {
                const double v = px[ci];
                const double* wrow = wm.data() + static_cast<std::int64_t>(ci) * c_out;
                for (int co = 0; co < c_out; ++co) po[co] += v * wrow[co];
            }
        }
    }
    if (ng) {
        push_record([x, weight, bias, out, c_in, c_out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto in = t.data(x);
            auto wm = t.data(weight);
            auto gx = t.grad_accum(x);
            auto gw = t.grad_accum(weight);
            auto gb = bias.valid() ? t.grad_accum(bias) : std::span<double>{};
            const std::int64_t n = static_cast<std::int64_t>(in.size()) / c_in;
            for (std::int64_t p = 0; p < n; ++p) {
                const double* px = in.data() + p * c_in;
                const double* pg = go.data() + p * c_out;
                if (!gb.empty())
                    for (int co = 0; co < c_out; ++co) gb[co] += pg[co];
                for (int ci = 0; ci < c_in; ++ci) {
                    const double* wrow = wm.data() + static_cast<std::int64_t>(ci) * c_out;
                    double acc = 0.0;
                    for (int co = 0; co < c_out; ++co) acc += wrow[co] * pg[co];
                    if (!gx.empty()) gx[p * c_in + ci] += acc;
                    if (!gw.empty()) {
                        double* gwrow = gw.data() + static_cast<std::int64_t>(ci) * c_out;
                        const double v = px[ci];
                        for (int co = 0; co < c_out; ++co) gwrow[co] += v * pg[co];
                    }
                }
            }
        });
    }
    return out;
}

Var Tape::conv3x3(Var x, Var weight, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    const int h = xv.height(), w = xv.width(), c_in = xv.channels();
    if (h < 1 || w < 1) throw DimensionError("conv3x3: input must be at least 1x1");
    if (wv.shape().d0 != 3 || wv.shape().d1 != 3 || wv.shape().d2 != c_in)
        throw DimensionError("conv3x3: kernel must be 3x3x(c_in)x(c_out)");
    const int c_out = wv.shape().d3;
    if (bias.valid() && value(bias).size() != c_out)
        throw DimensionError("conv3x3: bias length must equal output channels");

    const bool ng = needs_grad(x) || needs_grad(weight) || (bias.valid() && needs_grad(bias));
    Var out = alloc_node({h, w, c_out, 1}, ng);
    {
        auto o = data(out);
        auto in = data(x);
        auto km = data(weight);
        const double* b = bias.valid() ? data(bias).data() : nullptr;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                double* po = o.data() + (static_cast<std::int64_t>(r) * w + c) * c_out;
                for (int co = 0; co < c_out; ++co) po[co] = b ? b[co] : 0.0;
                for (int kr = 0; kr < 3; ++kr) {
                    const int rr = r + kr - 1;
                    if (rr < 0 || rr >= h) continue;  // zero padding
                    for (int kc = 0; kc < 3; ++kc) {
                        const int cc = c + kc - 1;
                        if (cc < 0 || cc >= w) continue;
                        const double* px = in.data() + (static_cast<std::int64_t>(rr) * w + cc) * c_in;
                        const double* kslice =
                            km.data() + ((static_cast<std::int64_t>(kr) * 3 + kc) * c_in) * c_out;
                        for (int ci = 0; ci < c_in; ++ci) {
                            const double v = px[ci];
                            const double* krow = kslice + static_cast<std::int64_t>(ci) * c_out;
                            for (int co = 0; co < c_out; ++co) po[co] += v * krow[co];
                        }
                    }
                }
            }
        }
    }
    if (ng) {
        push_record([x, weight, bias, out, h, w, c_in, c_out](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto in = t.data(x);
            auto km = t.data(weight);
            auto gx = t.grad_accum(x);
            auto gw = t.grad_accum(weight);
            auto gb = bias.valid() ? t.grad_accum(bias) : std::span<double>{};
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < w; ++c) {
                    const double* pg = go.data() + (static_cast<std::int64_t>(r) * w + c) * c_out;
                    if (!gb.empty())
                        for (int co = 0; co < c_out; ++co) gb[co] += pg[co];
                    for (int kr = 0; kr < 3; ++kr) {
                        const int rr = r + kr - 1;
                        if (rr < 0 || rr >= h) continue;
                        for (int kc = 0; kc < 3; ++kc) {
                            const int cc = c + kc - 1;
                            if (cc < 0 || cc >= w) continue;
                            const std::int64_t pix = (static_cast<std::int64_t>(rr) * w + cc) * c_in;
                            const std::int64_t koff =
                                (static_cast<std::int64_t>(kr) * 3 + kc) * c_in * c_out;
                            for (int ci = 0; ci < c_in; ++ci) {
                                const double* krow = km.data() + koff + static_cast<std::int64_t>(ci) * c_out;
                                double acc = 0.0;
                                for (int co = 0; co < c_out; ++co) acc += krow[co] * pg[co];
                                if (!gx.empty()) gx[pix + ci] += acc;
                                if (!gw.empty()) {
                                    const double v = in[pix + ci];
                                    double* gkrow =
                                        gw.data() + koff + static_cast<std::int64_t>(ci) * c_out;
                                    for (int co = 0; co < c_out; ++co) gkrow[co] += v * pg[co];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Var Tape::pixel_shuffle(Var x, int upscale) {
    const Tensor& xv = value(x);
    const int s = upscale;
    const int h = xv.height(), w = xv.width(), c = xv.channels();
    if (s < 1 || c % (s * s) != 0)
        throw DimensionError("pixel_shuffle: channels must be divisible by upscale^2");
    const int c_out = c / (s * s);
    Var out = alloc_node({h * s, w * s, c_out, 1}, needs_grad(x));
    auto o = data(out);
    auto in = data(x);
    const int wo = w * s;
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc)
            for (int dr = 0; dr < s; ++dr)
                for (int dc = 0; dc < s; ++dc)
                    for (int k = 0; k < c_out; ++k) {
                        const std::int64_t src =
                            (static_cast<std::int64_t>(r) * w + cc) * c +
                            (static_cast<std::int64_t>(dr) * s + dc) * c_out + k;
                        const std::int64_t dst =
                            (static_cast<std::int64_t>(r * s + dr) * wo + (cc * s + dc)) * c_out + k;
                        o[dst] = in[src];
                    }
    if (needs_grad(x)) {
        push_record([x, out, h, w, c, c_out, s, wo](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gx = t.grad_accum(x);
            for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w; ++cc)
                    for (int dr = 0; dr < s; ++dr)
                        for (int dc = 0; dc < s; ++dc)
                            for (int k = 0; k < c_out; ++k) {
                                const std::int64_t src =
                                    (static_cast<std::int64_t>(r) * w + cc) * c +
                                    (static_cast<std::int64_t>(dr) * s + dc) * c_out + k;
                                const std::int64_t dst =
                                    (static_cast<std::int64_t>(r * s + dr) * wo + (cc * s + dc)) * c_out +
                                    k;
                                gx[src] += go[dst];
                            }
        });
    }
    return out;
}

Var Tape::sample_bilinear(Var map, Var pos) {
    const Tensor& mv = value(map);
    if (value(pos).size() != 2) throw DimensionError("sample position must be a 2-vector");
    const Position p{data(pos)[0], data(pos)[1]};
    const BilinearFootprint fp = resolve_footprint(mv.height(), mv.width(), p);
    const int ch = mv.channels();
    Var out = alloc_node({ch, 1, 1, 1}, needs_grad(map) || needs_grad(pos));
    acla::sample_bilinear(mv, p, data(out));
    if (needs_grad(out)) {
        push_record([map, pos, out, fp](Tape& t) {
            if (!t.grad_live(out)) return;
            auto go = t.grad_of(out);
            auto gm = t.grad_accum(map);
            const PositionGrad pg =
                sample_bilinear_backward(t.value(map), fp, go, gm);
            if (auto gp = t.grad_accum(pos); !gp.empty()) {
                gp[0] += pg.d_row;
                gp[1] += pg.d_col;
            }
        });
    }
    return out;
}

}  // namespace acla
