#include "acla/train.hpp"

#include <cmath>

#include "acla/degrade.hpp"
#include "acla/metrics.hpp"

namespace acla {

TrainStreams make_train_streams(std::uint64_t seed) {
    return TrainStreams{Rng::stream(seed, "data"), Rng::stream(seed, "noise"),
                        Rng::stream(seed, "mask")};
}

namespace {

Tensor crop(const Tensor& src, int r0, int c0, int size) {
    Tensor out = Tensor::map(size, size, src.channels());
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            for (int ch = 0; ch < src.channels(); ++ch)
                out.at(r, c, ch) = src.at(r0 + r, c0 + c, ch);
    return out;
}

Tensor clamp01(Tensor t) {
    for (auto& v : t.values()) {
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
    }
    return t;
}

}  // namespace

PatchPair sample_patch(const ImagePair& img, const ExperimentConfig& cfg, Rng& data_rng,
                       Rng& noise_rng) {
    const int scale = task_scale(cfg.task);
    const int tgt = cfg.patch * scale;
    const Tensor& clean = img.clean;
    if (clean.height() < tgt || clean.width() < tgt)
        throw DimensionError("image " + img.name + " is smaller than the training patch");
    int r0 = static_cast<int>(data_rng.below(static_cast<std::uint64_t>(clean.height() - tgt) + 1));
    int c0 = static_cast<int>(data_rng.below(static_cast<std::uint64_t>(clean.width() - tgt) + 1));
    if (cfg.task == Task::Demosaic) {  // keep the Bayer pattern aligned
        r0 &= ~1;
        c0 &= ~1;
    }
    const Dihedral aug = random_dihedral(data_rng);

    // degradation happens on the image's native channels; grayscale inputs
    // replicate to rgb only at the model boundary
    PatchPair p;
    const Tensor target = apply_dihedral(crop(clean, r0, c0, tgt), aug);
    if (cfg.task == Task::CarPrecompressed) {
        if (img.degraded.size() == 0)
            throw ContractError("car-precompressed requires paired degraded images");
        p.input = to_rgb(apply_dihedral(crop(img.degraded, r0, c0, tgt), aug));
    } else {
        p.input = to_rgb(degrade_for_task(target, cfg, noise_rng));
    }
    p.target = to_rgb(target);
    return p;
}

ValSet prepare_val(const std::vector<ImagePair>& images, const ExperimentConfig& cfg,
                   std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "valnoise");
    ValSet vs;
    for (const auto& img : images) {
        vs.names.push_back(img.name);
        if (cfg.task == Task::CarPrecompressed) {
            if (img.degraded.size() == 0)
                throw ContractError("car-precompressed requires paired degraded images");
            vs.inputs.push_back(img.degraded);
        } else {
            vs.inputs.push_back(degrade_for_task(img.clean, cfg, rng));
        }
        vs.targets.push_back(img.clean);
    }
    return vs;
}

Tensor predict(RestorationModel& model, const Tensor& input, const ExperimentConfig& cfg) {
    Tape tape;
    ForwardOptions opt;
    opt.mask_mode = GateMode::Infer;
    opt.tau = cfg.tau_end;
    ForwardResult r = model.forward(tape, tape.constant(to_rgb(input)), opt);
    return clamp01(tape.value(r.prediction));
}

double mask_occupancy(RestorationModel& model, const Tensor& input,
                      const ExperimentConfig& cfg) {
    if (model.variant() != AttentionVariant::Acla)
        throw ContractError("mask occupancy is defined for acla models");
    Tape tape;
    ForwardOptions opt;
    opt.mask_mode = GateMode::Infer;
    opt.tau = cfg.tau_end;
    ForwardResult r = model.forward(tape, tape.constant(to_rgb(input)), opt);
    double total = 0.0;
    std::int64_t count = 0;
    for (const Var occ : r.occupancies) {
        const Tensor& o = tape.value(occ);
        for (double v : o.values()) total += v;
        count += o.size();
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

std::vector<EpochRow> train_model(RestorationModel& model, Adam& opt,
                                  const std::vector<ImagePair>& train_images,
                                  const ValSet& val, const ExperimentConfig& cfg,
                                  TrainStreams& streams, int start_epoch,
                                  const std::function<void(const EpochRow&)>& on_epoch) {
    return train_model_until(model, opt, train_images, val, cfg, streams, start_epoch,
                             cfg.train_epochs, on_epoch);
}

std::vector<EpochRow> train_model_until(RestorationModel& model, Adam& opt,
                                        const std::vector<ImagePair>& train_images,
                                        const ValSet& val, const ExperimentConfig& cfg,
                                        TrainStreams& streams, int start_epoch, int end_epoch,
                                        const std::function<void(const EpochRow&)>& on_epoch) {
    std::vector<EpochRow> trace;
    if (train_images.empty() && end_epoch > start_epoch)
        throw ContractError("training needs a non-empty image set");

    std::vector<std::size_t> order(train_images.size() *
                                   static_cast<std::size_t>(cfg.patches_per_image));
    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        const double lr = lr_schedule(epoch, LrPhase::Train, cfg.train_epochs, cfg.lr);

        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i % train_images.size();
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[streams.data.below(i)]);

        double loss_sum = 0.0;
        int batch_count = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t take =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - cursor);
            Tape tape;
            std::vector<Var> losses;
            losses.reserve(take);
            for (std::size_t b = 0; b < take; ++b) {
                PatchPair p = sample_patch(train_images[order[cursor + b]], cfg, streams.data,
                                           streams.noise);
                ForwardOptions fopt;
                fopt.mask_mode = GateMode::Train;
                // tau_start keeps the straight-through gradient alive; the
                // hard decisions at inference are temperature-invariant
                fopt.tau = cfg.tau_start;
                fopt.mask_rng = &streams.mask;
                ForwardResult r = model.forward(tape, tape.constant(std::move(p.input)), fopt);
                losses.push_back(tape.mse(r.prediction, tape.constant(std::move(p.target))));
            }
            Var loss = tape.scale(tape.add_n(losses), 1.0 / static_cast<double>(take));
            const double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch));
            model.weights().zero_grads();
            tape.backward(loss);
            opt.step(model.weights(), lr);
            loss_sum += loss_value;
            ++batch_count;
            cursor += take;
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_loss = batch_count ? loss_sum / batch_count : 0.0;
        EvalSummary ev = evaluate(model, val, cfg);
        row.val_psnr = ev.mean_psnr;
        row.val_ssim = ev.mean_ssim;
        trace.push_back(row);
        if (on_epoch) on_epoch(row);
    }
    return trace;
}

EvalSummary evaluate(RestorationModel& model, const ValSet& val, const ExperimentConfig& cfg) {
    EvalSummary s;
    for (std::size_t i = 0; i < val.inputs.size(); ++i) {
        const Tensor restored = predict(model, val.inputs[i], cfg);
        const Tensor lum_a = luminance(restored);
        const Tensor lum_b = luminance(val.targets[i]);
        EvalRow row;
        row.name = i < val.names.size() ? val.names[i] : "";
        row.psnr = psnr(lum_a, lum_b);
        row.ssim = ssim(lum_a, lum_b);
        s.rows.push_back(row);
        s.mean_psnr += row.psnr;
        s.mean_ssim += row.ssim;
    }
    if (!s.rows.empty()) {
        s.mean_psnr /= static_cast<double>(s.rows.size());
        s.mean_ssim /= static_cast<double>(s.rows.size());
    }
    return s;
}

}  // namespace acla
