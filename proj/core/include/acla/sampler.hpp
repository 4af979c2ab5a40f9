#pragma once

#include <span>

#include "acla/tensor.hpp"

namespace acla {

// Fractional sample position in pixel units, origin at the center of pixel
// (0,0).  May lie outside the map; sampling clamps to the border.
struct Position {
    double row = 0.0;
    double col = 0.0;
};

// Resolved bilinear footprint: the 4 lattice neighbors of a (clamped)
// position and their convex weights.  Positions on the last row/column
// degenerate to r1 == r0 (c1 == c0) with the weight on the low corner.
//
// The weights are differentiable in the position except on lattice lines,
// where the right-continuous sub-cell applies.  When the position was clamped
// along an axis, the position-gradient along that axis is zero.
struct BilinearFootprint {
    int r0, r1, c0, c1;
    double w00, w01, w10, w11;  // (r0,c0) (r0,c1) (r1,c0) (r1,c1)
    double fr, fc;              // fractional parts after clamping
    bool clamped_row, clamped_col;
};

BilinearFootprint resolve_footprint(int height, int width, Position pos);

// Samples all channels of `map` at `pos` into `out` (length = channels).
// Throws DomainError on a non-finite position, DimensionError on an empty map
// or wrong `out` length.
void sample_bilinear(const Tensor& map, Position pos, std::span<double> out);

// Convenience overload returning a fresh channel vector.
std::vector<double> sample_bilinear(const Tensor& map, Position pos);

// Accumulates gradients of a bilinear sample.  `upstream` is d(loss)/d(sample)
// per channel; adds into `map_grad` (4 corner taps per channel) and returns
// d(loss)/d(row), d(loss)/d(col).  `map_grad` may be empty to skip the value
// gradient.
struct PositionGrad {
    double d_row = 0.0;
    double d_col = 0.0;
};
PositionGrad sample_bilinear_backward(const Tensor& map, const BilinearFootprint& fp,
                                      std::span<const double> upstream,
                                      std::span<double> map_grad);

}  // namespace acla
