#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "acla/experiment.hpp"
#include "acla/image_io.hpp"

using namespace acla;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("acla_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int counter;
};
int TempDir::counter = 0;

// Checkpoint of a hand-built identity model: head embeds the rgb channels,
// blocks are identity at zero init, the tail projects the first three
// channels back out.
void write_identity_checkpoint(const std::string& path, const ExperimentConfig& cfg) {
    Rng init = Rng::stream(cfg.seed, "init");
    RestorationModel model(cfg, {}, init);
    auto& params = model.weights();
    Tensor* head = params.find("head.w");
    head->fill(0.0);
    for (int ch = 0; ch < 3; ++ch) head->raw()[static_cast<std::size_t>(
        ((1 * 3 + 1) * 3 + ch) * cfg.channels + ch)] = 1.0;  // center tap, channel ch -> ch
    params.find("head.b")->fill(0.0);
    Tensor* tail = params.find("tail.w");
    tail->fill(0.0);
    for (int ch = 0; ch < 3; ++ch)
        tail->raw()[static_cast<std::size_t>(((1 * 3 + 1) * cfg.channels + ch) * 3 + ch)] = 1.0;
    params.find("tail.b")->fill(0.0);

    Checkpoint ck;
    ck.config_text = serialize_config(cfg);
    ck.epoch = 0;
    ck.weights = snapshot_params(params);
    save_checkpoint(path, ck);
}

}  // namespace

TEST_CASE("cmd_eval: clean targets against an identity model score the caps") {
    TempDir tmp;
    const fs::path data = tmp.path / "data";
    fs::create_directories(data);
    Rng rng(91);
    Tensor img = Tensor::map(24, 24, 3);
    for (auto& v : img.values()) v = (50.0 + rng.below(156)) / 255.0;
    write_image((data / "one.ppm").string(), img);

    ExperimentConfig cfg;
    cfg.task = Task::Denoise;
    cfg.sigma255 = 0.0;  // identity degradation
    cfg.blocks = 2;
    cfg.channels = 8;
    cfg.seed = 4;
    write_identity_checkpoint((tmp.path / "id.ckpt").string(), cfg);

    const auto art = cmd_eval((tmp.path / "id.ckpt").string(), data.string(),
                              (tmp.path / "out").string());
    REQUIRE(art.summary.rows.size() == 1);
    CHECK(art.summary.mean_psnr == 99.0);
    CHECK(art.summary.mean_ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(art.summary.rows[0].psnr == art.summary.mean_psnr);  // single image = mean
}

TEST_CASE("cmd_eval: sigma-30 noise through an identity model lands at the closed form") {
    TempDir tmp;
    const fs::path data = tmp.path / "data";
    fs::create_directories(data);
    // flat mid-gray grayscale images: no clamping, luminance is passthrough
    for (int i = 0; i < 2; ++i) {
        Tensor img = Tensor::map(96, 96, 1);
        img.fill(0.5);
        write_image((data / ("g" + std::to_string(i) + ".pgm")).string(), img);
    }

    ExperimentConfig cfg;
    cfg.task = Task::Denoise;
    cfg.sigma255 = 30.0;
    cfg.blocks = 2;
    cfg.channels = 8;
    cfg.seed = 4;
    write_identity_checkpoint((tmp.path / "id.ckpt").string(), cfg);

    const auto art = cmd_eval((tmp.path / "id.ckpt").string(), data.string(),
                              (tmp.path / "out").string());
    const double want = 10.0 * std::log10(255.0 * 255.0 / (30.0 * 30.0));  // 18.588 dB
    CHECK(std::fabs(art.summary.mean_psnr - want) < 0.3);
}

TEST_CASE("cmd_eval skips unreadable images and fails only when all are") {
    TempDir tmp;
    const fs::path data = tmp.path / "data";
    fs::create_directories(data);
    Tensor img = Tensor::map(24, 24, 3);
    img.fill(0.5);
    write_image((data / "ok.ppm").string(), img);
    std::ofstream(data / "junk.ppm") << "not an image";

    ExperimentConfig cfg;
    cfg.task = Task::Denoise;
    cfg.sigma255 = 0.0;
    cfg.blocks = 2;
    cfg.channels = 8;
    cfg.seed = 4;
    write_identity_checkpoint((tmp.path / "id.ckpt").string(), cfg);

    const auto art = cmd_eval((tmp.path / "id.ckpt").string(), data.string(),
                              (tmp.path / "out").string());
    CHECK(art.skipped == 1);
    CHECK(art.summary.rows.size() == 1);

    const fs::path empty = tmp.path / "empty";
    fs::create_directories(empty);
    std::ofstream(empty / "junk.ppm") << "still not an image";
    CHECK_THROWS_AS(cmd_eval((tmp.path / "id.ckpt").string(), empty.string(),
                             (tmp.path / "out2").string()),
                    IoError);
}

TEST_CASE("cmd_search artifacts: derived positions are a subset of the candidates") {
    TempDir tmp;
    write_synth_dataset((tmp.path / "train").string(), 5, 48, 48, 77);

    ExperimentConfig cfg;
    cfg.task = Task::Denoise;
    cfg.blocks = 3;
    cfg.channels = 6;
    cfg.variant = AttentionVariant::Acla;
    cfg.key_count = 2;
    cfg.search_positions = true;
    cfg.lambda = 0.35;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 2;
    cfg.patch = 16;
    cfg.batch = 4;
    cfg.sigma255 = 30.0;
    cfg.seed = 6;
    cfg.train_dir = (tmp.path / "train").string();

    const auto art = cmd_search(cfg, (tmp.path / "out").string());
    CHECK(fs::exists(art.derived_file));
    CHECK(fs::exists(art.log_file));
    CHECK(fs::exists(art.checkpoint_file));
    for (int p : art.derived) {
        CHECK(p >= 1);
        CHECK(p <= cfg.blocks);
    }

    // search log header matches the candidate count
    std::ifstream log(art.log_file);
    std::string header;
    std::getline(log, header);
    CHECK(header == "epoch,tau,s_hat1,s_hat2,s_hat3,cost,train_loss,val_loss");

    // the checkpoint reloads into the dense supernet
    const LoadedModel lm = load_model(art.checkpoint_file);
    CHECK(lm.model->positions() == std::vector<int>{1, 2, 3});
    CHECK(lm.checkpoint.has_derived);
}

TEST_CASE("cmd_train rejects unresolved positions and missing data dirs") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.task = Task::Denoise;
    cfg.variant = AttentionVariant::Acla;
    cfg.search_positions = true;
    cfg.train_dir = (tmp.path / "nope").string();
    cfg.val_dir = (tmp.path / "nope").string();
    CHECK_THROWS_AS(cmd_train(cfg, (tmp.path / "out").string()), ConfigError);

    cfg.search_positions = false;
    cfg.positions = {1};
    CHECK_THROWS_AS(cmd_train(cfg, (tmp.path / "out").string()), IoError);
}
