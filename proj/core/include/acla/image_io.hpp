#pragma once

#include <string>

#include "acla/tensor.hpp"

namespace acla {

// 8-bit binary PGM (P5, 1 channel) and PPM (P6, 3 channels).  Values map to
// [0,1] by /255 on read and round-to-nearest with clamping on write.
Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& image);

}  // namespace acla
