#include <CLI11.hpp>
#include <iostream>

#include "acla/experiment.hpp"

namespace {

// exit codes: 0 success, 2 usage/config, 3 state/version
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStateError = 3;

acla::ExperimentConfig load_cfg(const std::string& path, bool has_seed, std::uint64_t seed) {
    acla::ExperimentConfig cfg = acla::load_config(path);
    if (has_seed) cfg.seed = seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-layer attention experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool has_seed = false;
    app.add_option("--config", config_path, "experiment config file")->envname("ACLA_CONFIG");
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        has_seed = true;
    });

    auto* search = app.add_subcommand("search", "two-stage insert-position search");

    auto* train = app.add_subcommand("train", "train a restoration model");
    std::string resume_path;
    int stop_after = -1;
    train->add_option("--resume", resume_path, "checkpoint to continue from");
    train->add_option("--stop-after", stop_after,
                      "checkpoint after this many epochs, keeping the full schedule");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a directory");
    std::string eval_ckpt, eval_dir;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--data", eval_dir, "directory of clean target images")->required();

    auto* vis = app.add_subcommand("visualize-keys", "plot selected keys for one query");
    std::string vis_ckpt, vis_image;
    int query_row = 0, query_col = 0;
    bool force_on = false;
    vis->add_option("--checkpoint", vis_ckpt, "model checkpoint")->required();
    vis->add_option("--image", vis_image, "input image (pgm/ppm)")->required();
    vis->add_option("--row", query_row, "query row")->required();
    vis->add_option("--col", query_col, "query column")->required();
    vis->add_flag("--force-masks-on", force_on, "debug: keep every sampled key");

    CLI11_PARSE(app, argc, argv);

    try {
        if (search->parsed()) {
            if (config_path.empty()) {
                std::cerr << "error: search needs --config\n";
                return kConfigError;
            }
            const auto art = acla::cmd_search(load_cfg(config_path, has_seed, seed), out_dir);
            std::cout << "lambda: " << art.lambda << "\n";
            std::cout << "derived positions:";
            for (int p : art.derived) std::cout << " " << p;
            std::cout << "\n";
            std::cout << "wrote " << art.derived_file << ", " << art.log_file << ", "
                      << art.checkpoint_file << "\n";
        } else if (train->parsed()) {
            if (config_path.empty()) {
                std::cerr << "error: train needs --config\n";
                return kConfigError;
            }
            const auto art =
                acla::cmd_train(load_cfg(config_path, has_seed, seed), out_dir, resume_path, stop_after);
            if (!art.trace.empty()) {
                const auto& last = art.trace.back();
                std::cout << "final epoch " << last.epoch << ": val psnr " << last.val_psnr
                          << " dB, ssim " << last.val_ssim << "\n";
            }
            std::cout << "wrote " << art.metrics_file << ", " << art.checkpoint_file << "\n";
        } else if (eval->parsed()) {
            const auto art = acla::cmd_eval(eval_ckpt, eval_dir, out_dir, seed, has_seed);
            for (const auto& row : art.summary.rows)
                std::cout << row.name << ": psnr " << row.psnr << " dB, ssim " << row.ssim
                          << "\n";
            std::cout << "mean: psnr " << art.summary.mean_psnr << " dB, ssim "
                      << art.summary.mean_ssim << "\n";
            std::cout << "wrote " << art.csv_file << "\n";
        } else if (vis->parsed()) {
            const auto art = acla::cmd_visualize_keys(vis_ckpt, vis_image, query_row, query_col,
                                                      out_dir, force_on);
            std::cout << art.csv_rows << " keys across " << art.image_files.size()
                      << " images; wrote " << art.csv_file << "\n";
        }
    } catch (const acla::ConfigError& e) {
        std::cerr << "config error (" << e.field << "): " << e.what() << "\n";
        return kConfigError;
    } catch (const acla::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const acla::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const acla::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStateError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStateError;
    }
    return kOk;
}
