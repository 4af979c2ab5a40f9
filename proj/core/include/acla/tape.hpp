#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "acla/sampler.hpp"
#include "acla/tensor.hpp"

namespace acla {

// Max-subtracted softmax shared by the tape op and the attention kernels.
void stable_softmax(std::span<const double> in, std::span<double> out);

// Handle to a node on a ComputationTape.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Tape-based reverse-mode differentiation.  Each operation appends a record
// holding a backward closure; backward() replays records in reverse order and
// accumulates into every requires_grad leaf exactly once per use.
//
// Graph construction and backward are single-threaded; a tape must not be
// shared between threads.  Leaf tensors bound via leaf() must outlive the
// tape and stay at the same address.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Binds an external tensor as a leaf.  Repeated calls with the same
    // address return the same node.  On backward(), the node gradient is
    // added into t.grad() when t.requires_grad().
    Var leaf(Tensor& t);
    // Copies a tensor in as a non-differentiable node.
    Var constant(Tensor t);

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    // Gradient of the last backward() w.r.t. node v (zeros if untouched).
    std::span<const double> grad_of(Var v) const;

    // --- recorded operations -------------------------------------------
    Var conv1x1(Var x, Var weight, Var bias = {});
    Var conv3x3(Var x, Var weight, Var bias = {});
    Var relu(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);              // elementwise, same shape
    Var scale(Var a, double k);
    Var add_const(Var a, double k);
    Var sigmoid(Var x);
    Var softmax(Var logits);            // rank-1, max-subtracted
    Var sum(Var x);                     // -> scalar
    Var mean(Var x);                    // -> scalar
    Var mse(Var a, Var b);              // mean squared error -> scalar
    Var log_floored(Var x, double floor_value);  // ln(max(x, floor)), scalar
    Var pixel_shuffle(Var x, int upscale);       // (H,W,C*s*s) -> (H*s,W*s,C)
    Var add_n(std::span<const Var> terms);
    // sigma((x + shift) / tau); the binary Gumbel-Softmax form with the noise
    // delta folded into `shift`.
    Var shifted_sigmoid(Var x, double shift, double tau);
    // Differentiable bilinear sample; `pos` is a 2-vector (row, col).
    Var sample_bilinear(Var map, Var pos);

    // --- custom-op extension point (used by the attention module) -------
    using BackwardFn = std::function<void(Tape&)>;
    Var alloc_node(const Shape& shape, bool needs_grad);
    void push_record(BackwardFn backward);
    bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }
    std::span<double> data(Var v) { return nodes_[check(v)].value.values(); }
    std::span<const double> data(Var v) const { return nodes_[check(v)].value.values(); }
    // Mutable gradient accumulator for v (allocated zero on demand during
    // backward; empty span when v does not need grad).
    std::span<double> grad_accum(Var v);
    bool grad_live(Var v) const;  // true once the output grad buffer exists

    // Runs reverse accumulation from a scalar loss.  Throws ContractError if
    // the output is not scalar or backward already ran.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;  // allocated during backward
        bool needs_grad = false;
        Tensor* bound = nullptr;   // external leaf, if any
    };

    std::int32_t check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ContractError("invalid tape handle");
        return v.id;
    }
    std::vector<double>& grad_buffer(std::int32_t id);
    Var unary(Var x, Shape out_shape);

    // deque: ops hold references to earlier nodes while appending new ones
    std::deque<Node> nodes_;
    std::vector<BackwardFn> records_;
    std::unordered_map<const Tensor*, std::int32_t> leaves_;
    bool backward_done_ = false;
};

}  // namespace acla
