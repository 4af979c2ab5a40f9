#pragma once

#include <string>
#include <vector>

#include "acla/config.hpp"
#include "acla/rng.hpp"
#include "acla/tensor.hpp"

namespace acla {

// A clean target with its (possibly pre-degraded) input counterpart.
struct ImagePair {
    std::string name;
    Tensor clean;     // target, model output scale
    Tensor degraded;  // model input; empty for on-the-fly degradation
};

// Loads every .pgm/.ppm in `dir`, sorted by filename.  For the
// car-precompressed task, `degraded_dir` supplies same-named inputs.
std::vector<ImagePair> load_directory(const std::string& dir,
                                      const std::string& degraded_dir = "");

// Applies the task degradation to a clean image (identity for
// car-precompressed, whose inputs are external).
Tensor degrade_for_task(const Tensor& clean, const ExperimentConfig& cfg, Rng& rng);

// Ensures a 3-channel image (grayscale replicates).
Tensor to_rgb(const Tensor& image);

// Deterministic synthetic textured image for desk-scale experiments: layered
// sinusoids, ramps and repeated rectangles with per-image randomized phase.
// Values in [0.1, 0.9] so AWGN stays mostly unclamped.
Tensor synth_image(int height, int width, Rng& rng);

// Writes `count` synthetic PPM images into dir (img_000.ppm, ...).
void write_synth_dataset(const std::string& dir, int count, int height, int width,
                         std::uint64_t seed);

}  // namespace acla
