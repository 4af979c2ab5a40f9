#pragma once

#include "acla/rng.hpp"
#include "acla/tensor.hpp"

namespace acla {

// clean + N(0, sigma^2) per value, clamped to [0,1].  sigma is on the [0,1]
// scale (divide 255-scale levels by 255).
Tensor degrade_awgn(const Tensor& clean, double sigma, Rng& rng);

// Anti-aliased bicubic (a = -0.5) downsample by an integer factor.
// Dimensions must be divisible by the scale.
Tensor degrade_bicubic_down(const Tensor& clean, int scale);

// Bayer RGGB subsampling of an RGB image; non-pattern channels are zeroed,
// output stays 3-channel.
Tensor degrade_mosaic(const Tensor& clean);

// One of the 8 dihedral transforms of a square patch.
enum class Dihedral { Id, Rot90, Rot180, Rot270, Flip, FlipRot90, FlipRot180, FlipRot270 };
Tensor apply_dihedral(const Tensor& patch, Dihedral t);
Dihedral random_dihedral(Rng& rng);

}  // namespace acla
