#include "acla/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <iostream>

#include "acla/dataset.hpp"
#include "acla/image_io.hpp"

namespace acla {

namespace fs = std::filesystem;

std::vector<int> resolved_positions(const ExperimentConfig& cfg) {
    if (cfg.variant == AttentionVariant::None) return {};
    if (cfg.search_positions) {
        std::vector<int> all(static_cast<std::size_t>(cfg.blocks));
        for (int b = 0; b < cfg.blocks; ++b) all[static_cast<std::size_t>(b)] = b + 1;
        return all;
    }
    return cfg.positions;
}

LoadedModel load_model(const std::string& checkpoint_path) {
    LoadedModel lm;
    lm.checkpoint = load_checkpoint(checkpoint_path);
    lm.config = parse_config(lm.checkpoint.config_text);
    Rng init = Rng::stream(lm.config.seed, "init");
    lm.model = std::make_unique<RestorationModel>(lm.config, resolved_positions(lm.config), init);
    restore_params(lm.model->weights(), lm.checkpoint.weights);
    return lm;
}

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Checkpoint::StreamState stream_state(const std::string& name, const Rng& rng) {
    return Checkpoint::StreamState{name, rng.state()};
}

}  // namespace

SearchArtifacts cmd_search(const ExperimentConfig& cfg_in, const std::string& out_dir) {
    ExperimentConfig cfg = cfg_in;
    validate(cfg);
    if (cfg.variant != AttentionVariant::Acla || !cfg.search_positions)
        throw ConfigError("attention.positions",
                          "search requires attention.variant = acla and attention.positions = search");
    auto images = load_directory(cfg.train_dir, cfg.task == Task::CarPrecompressed
                                                    ? cfg.degraded_train_dir
                                                    : "");
    if (images.empty()) throw ConfigError("data.train_dir", "no training images found");

    if (cfg.lambda_cv) {
        cfg.lambda = cross_validate_lambda(cfg.lambda_candidates, images, cfg, cfg.seed);
        cfg.lambda_cv = false;
    }

    fs::create_directories(out_dir);
    SearchArtifacts art;
    art.lambda = cfg.lambda;
    art.log_file = (fs::path(out_dir) / "search_log.csv").string();
    art.derived_file = (fs::path(out_dir) / "derived.txt").string();
    art.checkpoint_file = (fs::path(out_dir) / "supernet.ckpt").string();

    Rng init = Rng::stream(cfg.seed, "init");
    Supernet net = build_supernet(cfg, init);
    Adam weight_opt, arch_opt;
    SearchStreams streams = make_search_streams(cfg.seed);

    std::ofstream log(art.log_file);
    if (!log) throw IoError("cannot write " + art.log_file);
    log << "epoch,tau";
    for (int j = 0; j < net.candidate_count(); ++j) log << ",s_hat" << (j + 1);
    log << ",cost,train_loss,val_loss\n";

    SearchResult res = run_search(net, weight_opt, arch_opt, images, cfg, streams,
                                  [&](const SearchStepLog& row) {
                                      log << row.epoch << "," << g17(row.tau);
                                      for (double s : row.s_hat) log << "," << g17(s);
                                      log << "," << g17(row.cost) << "," << g17(row.train_loss)
                                          << "," << g17(row.val_loss) << "\n";
                                  });
    log.close();
    art.derived = res.derived;

    {
        std::ofstream df(art.derived_file);
        if (!df) throw IoError("cannot write " + art.derived_file);
        for (std::size_t i = 0; i < res.derived.size(); ++i)
            df << (i ? "," : "") << res.derived[i];
        df << "\n";
    }

    Checkpoint ckpt;
    ckpt.config_text = serialize_config(cfg);
    ckpt.epoch = static_cast<std::uint64_t>(cfg.stage1_epochs + cfg.stage2_epochs);
    ckpt.weights = snapshot_params(net.model->weights());
    ckpt.alpha = res.final_alpha;
    ckpt.adam_weights = snapshot_adam(weight_opt);
    ckpt.adam_arch = snapshot_adam(arch_opt);
    ckpt.rng_streams = {stream_state("data", streams.data), stream_state("noise", streams.noise),
                        stream_state("mask", streams.mask), stream_state("arch", streams.arch)};
    ckpt.has_derived = true;
    ckpt.derived_positions = res.derived;
    save_checkpoint(art.checkpoint_file, ckpt);
    return art;
}

TrainArtifacts cmd_train(const ExperimentConfig& cfg_in, const std::string& out_dir,
                         const std::string& resume_path, int stop_after) {
    ExperimentConfig cfg = cfg_in;
    validate(cfg);
    if (cfg.search_positions)
        throw ConfigError("attention.positions",
                          "training needs resolved insert positions, not 'search'");
    auto train_images = load_directory(
        cfg.train_dir, cfg.task == Task::CarPrecompressed ? cfg.degraded_train_dir : "");
    auto val_images = load_directory(
        cfg.val_dir, cfg.task == Task::CarPrecompressed ? cfg.degraded_val_dir : "");
    if (train_images.empty()) throw ConfigError("data.train_dir", "no training images found");
    if (val_images.empty()) throw ConfigError("data.val_dir", "no validation images found");

    Rng init = Rng::stream(cfg.seed, "init");
    RestorationModel model(cfg, resolved_positions(cfg), init);
    Adam opt;
    TrainStreams streams = make_train_streams(cfg.seed);
    int start_epoch = 0;

    const std::string cfg_echo = serialize_config(cfg);
    if (!resume_path.empty()) {
        Checkpoint prev = load_checkpoint(resume_path);
        // the epoch budget may grow across resumes; everything else must match
        ExperimentConfig prev_cfg = parse_config(prev.config_text);
        prev_cfg.train_epochs = cfg.train_epochs;
        if (serialize_config(prev_cfg) != cfg_echo)
            throw IoError("resume checkpoint was produced by a different configuration");
        restore_params(model.weights(), prev.weights);
        restore_adam(opt, prev.adam_weights);
        for (const auto& st : prev.rng_streams) {
            if (st.name == "data") streams.data.set_state(st.state);
            if (st.name == "noise") streams.noise.set_state(st.state);
            if (st.name == "mask") streams.mask.set_state(st.state);
        }
        start_epoch = static_cast<int>(prev.epoch);
    }

    const ValSet val = prepare_val(val_images, cfg, cfg.seed);
    const int end_epoch = stop_after >= 0 ? std::min(stop_after, cfg.train_epochs)
                                          : cfg.train_epochs;

    fs::create_directories(out_dir);
    TrainArtifacts art;
    art.metrics_file = (fs::path(out_dir) / "metrics.csv").string();
    art.checkpoint_file = (fs::path(out_dir) / "model.ckpt").string();

    std::ofstream metrics(art.metrics_file);
    if (!metrics) throw IoError("cannot write " + art.metrics_file);
    metrics << "epoch,lr,train_loss,val_psnr,val_ssim\n";

    art.trace = train_model_until(model, opt, train_images, val, cfg, streams, start_epoch,
                            end_epoch,
                            [&](const EpochRow& row) {
                                metrics << row.epoch << "," << g17(row.lr) << ","
                                        << g17(row.train_loss) << "," << g17(row.val_psnr) << ","
                                        << g17(row.val_ssim) << "\n";
                            });
    metrics.close();

    Checkpoint ckpt;
    ckpt.config_text = cfg_echo;
    ckpt.epoch = static_cast<std::uint64_t>(end_epoch);
    ckpt.weights = snapshot_params(model.weights());
    ckpt.adam_weights = snapshot_adam(opt);
    ckpt.rng_streams = {stream_state("data", streams.data), stream_state("noise", streams.noise),
                        stream_state("mask", streams.mask)};
    save_checkpoint(art.checkpoint_file, ckpt);
    return art;
}

EvalArtifacts cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
                       const std::string& out_dir, std::uint64_t seed_override,
                       bool has_seed_override) {
    LoadedModel lm = load_model(checkpoint_path);
    if (has_seed_override) lm.config.seed = seed_override;

    if (!fs::is_directory(data_dir)) throw IoError("not a directory: " + data_dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(data_dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());

    EvalArtifacts art;
    std::vector<ImagePair> pairs;
    for (const auto& n : names) {
        try {
            ImagePair p;
            p.name = n;
            p.clean = read_image((fs::path(data_dir) / n).string());
            if (lm.config.task == Task::CarPrecompressed) {
                p.degraded =
                    read_image((fs::path(lm.config.degraded_val_dir) / n).string());
            }
            pairs.push_back(std::move(p));
        } catch (const IoError& e) {
            std::cerr << "warning: skipping " << n << ": " << e.what() << "\n";
            ++art.skipped;
        }
    }
    if (pairs.empty()) throw IoError("no readable images in " + data_dir);

    const ValSet val = prepare_val(pairs, lm.config, lm.config.seed);
    art.summary = evaluate(*lm.model, val, lm.config);

    fs::create_directories(out_dir);
    art.csv_file = (fs::path(out_dir) / "eval.csv").string();
    std::ofstream csv(art.csv_file);
    if (!csv) throw IoError("cannot write " + art.csv_file);
    csv << "image,psnr,ssim\n";
    for (const auto& row : art.summary.rows)
        csv << row.name << "," << g17(row.psnr) << "," << g17(row.ssim) << "\n";
    csv << "mean," << g17(art.summary.mean_psnr) << "," << g17(art.summary.mean_ssim) << "\n";
    return art;
}

VisualizeResult cmd_visualize_keys(const std::string& checkpoint_path,
                                   const std::string& image_path, int query_row, int query_col,
                                   const std::string& out_dir, bool force_masks_on) {
    LoadedModel lm = load_model(checkpoint_path);
    const Tensor image = read_image(image_path);
    return visualize_keys(*lm.model, lm.config, image, query_row, query_col, out_dir,
                          force_masks_on);
}

}  // namespace acla
