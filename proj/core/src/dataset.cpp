#include "acla/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "acla/degrade.hpp"
#include "acla/image_io.hpp"

namespace acla {

namespace fs = std::filesystem;

std::vector<ImagePair> load_directory(const std::string& dir, const std::string& degraded_dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    std::vector<ImagePair> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        ImagePair p;
        p.name = n;
        p.clean = read_image((fs::path(dir) / n).string());
        if (!degraded_dir.empty()) {
            const fs::path dp = fs::path(degraded_dir) / n;
            if (!fs::exists(dp))
                throw IoError("missing degraded counterpart for " + n + " in " + degraded_dir);
            p.degraded = read_image(dp.string());
        }
        out.push_back(std::move(p));
    }
    return out;
}

Tensor to_rgb(const Tensor& image) {
    if (image.channels() == 3) return image;
    if (image.channels() != 1) throw DimensionError("expected 1 or 3 channels");
    Tensor out = Tensor::map(image.height(), image.width(), 3);
    for (int r = 0; r < image.height(); ++r)
        for (int c = 0; c < image.width(); ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(r, c, 0);
    return out;
}

Tensor degrade_for_task(const Tensor& clean, const ExperimentConfig& cfg, Rng& rng) {
    switch (cfg.task) {
        case Task::Denoise:
            return degrade_awgn(clean, cfg.sigma255 / 255.0, rng);
        case Task::Sr2:
        case Task::Sr3:
        case Task::Sr4:
            return degrade_bicubic_down(clean, task_scale(cfg.task));
        case Task::Demosaic:
            return degrade_mosaic(clean);
        case Task::CarPrecompressed:
            throw ContractError("car-precompressed inputs are read from disk, not generated");
    }
    throw ContractError("unknown task");
}

Tensor synth_image(int height, int width, Rng& rng) {
    Tensor img = Tensor::map(height, width, 3);
    const double fr1 = 0.5 + rng.uniform01() * 2.5;
    const double fc1 = 0.5 + rng.uniform01() * 2.5;
    const double fr2 = 3.0 + rng.uniform01() * 5.0;
    const double ph1 = rng.uniform01() * 6.2831853;
    const double ph2 = rng.uniform01() * 6.2831853;
    const double chroma = rng.uniform01();
    // repeated rectangles give the image exact self-similar structure
    const int cell = 8 + static_cast<int>(rng.below(9));
    const double cell_tone = rng.uniform01();
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double u = static_cast<double>(r) / height;
            const double v = static_cast<double>(c) / width;
            double t = 0.5;
            t += 0.18 * std::sin(6.2831853 * (fr1 * u + fc1 * v) + ph1);
            t += 0.10 * std::sin(6.2831853 * fr2 * (u - v) + ph2);
            const bool in_cell = (r % cell) < cell / 2 && (c % cell) < cell / 2;
            if (in_cell) t += 0.12 * (cell_tone - 0.5);
            t = 0.5 + 0.8 * (t - 0.5);  // keep headroom for noise
            for (int ch = 0; ch < 3; ++ch) {
                double x = t + 0.06 * chroma * (ch - 1);
                if (x < 0.1) x = 0.1;
                if (x > 0.9) x = 0.9;
                img.at(r, c, ch) = x;
            }
        }
    }
    return img;
}

void write_synth_dataset(const std::string& dir, int count, int height, int width,
                         std::uint64_t seed) {
    fs::create_directories(dir);
    Rng rng = Rng::stream(seed, "synth");
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%03d.ppm", i);
        write_image((fs::path(dir) / name).string(), synth_image(height, width, rng));
    }
}

}  // namespace acla
