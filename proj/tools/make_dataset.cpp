#include <CLI11.hpp>
#include <iostream>

#include "acla/dataset.hpp"

// Deterministic synthetic PPM dataset generator for the desk-scale
// experiments described in the README.
int main(int argc, char** argv) {
    CLI::App app{"Write deterministic synthetic textured images"};
    std::string dir = "data";
    int count = 12;
    int size = 64;
    std::uint64_t seed = 1;
    app.add_option("--dir", dir, "output directory");
    app.add_option("--count", count, "number of images");
    app.add_option("--size", size, "image side length");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    try {
        acla::write_synth_dataset(dir, count, size, size, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote " << count << " images to " << dir << "\n";
    return 0;
}
