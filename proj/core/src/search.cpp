#include "acla/search.hpp"

#include <algorithm>
#include <cmath>

namespace acla {

Supernet build_supernet(const ExperimentConfig& cfg, Rng& init_rng) {
    if (cfg.blocks < 1) throw ConfigError("backbone.blocks", "supernet needs candidate positions");
    ExperimentConfig dense = cfg;
    dense.variant = AttentionVariant::Acla;
    std::vector<int> all(static_cast<std::size_t>(cfg.blocks));
    for (int b = 0; b < cfg.blocks; ++b) all[static_cast<std::size_t>(b)] = b + 1;

    Supernet net;
    net.model = std::make_unique<RestorationModel>(dense, all, init_rng);
    net.alpha.reserve(all.size());
    for (int b = 0; b < cfg.blocks; ++b)
        net.alpha.push_back(&net.arch.add("alpha" + std::to_string(b + 1), Tensor::scalar(0.0)));
    return net;
}

Var search_loss_var(Tape& tape, Var prediction, Var target, Var total_cost, double lambda) {
    Var loss = tape.mse(prediction, target);
    if (lambda != 0.0)
        loss = tape.add(loss, tape.scale(tape.log_floored(total_cost, 1.0), lambda));
    return loss;
}

std::vector<int> derive_arch(std::span<const double> alpha) {
    std::vector<int> kept;
    for (std::size_t j = 0; j < alpha.size(); ++j)
        if (alpha[j] > 0.0) kept.push_back(static_cast<int>(j) + 1);
    return kept;
}

SearchStreams make_search_streams(std::uint64_t seed) {
    return SearchStreams{Rng::stream(seed, "search.data"), Rng::stream(seed, "search.noise"),
                         Rng::stream(seed, "search.mask"), Rng::stream(seed, "search.arch")};
}

namespace {

struct StepOutcome {
    double loss = 0.0;
    double cost = 0.0;
};

// One forward/backward/step over a batch of patches.  `step_arch` selects
// which parameter set the optimizer touches; gradients land on both stores
// but only one is stepped.
StepOutcome search_step(Supernet& net, Adam& opt, bool step_arch,
                        std::span<const PatchPair> batch, const ExperimentConfig& cfg,
                        double tau, double lambda, double lr, SearchStreams& streams) {
    RestorationModel& model = *net.model;
    const int candidates = net.candidate_count();

    Tape tape;
    std::vector<Var> gates(static_cast<std::size_t>(candidates));
    for (int j = 0; j < candidates; ++j) {
        const double delta =
            cfg.arch_noise ? streams.arch.gumbel() - streams.arch.gumbel() : 0.0;
        gates[static_cast<std::size_t>(j)] =
            tape.shifted_sigmoid(tape.leaf(*net.alpha[static_cast<std::size_t>(j)]), delta, tau);
    }

    std::vector<Var> losses;
    losses.reserve(batch.size());
    double cost_value = 0.0;
    for (const PatchPair& p : batch) {
        ForwardOptions fopt;
        fopt.mask_mode = GateMode::Train;
        fopt.tau = tau;
        fopt.mask_rng = &streams.mask;
        fopt.layer_gates = gates;
        Tensor input = p.input;
        ForwardResult r = model.forward(tape, tape.constant(std::move(input)), fopt);

        Var loss;
        if (lambda != 0.0) {
            const std::int64_t n =
                static_cast<std::int64_t>(tape.value(r.bank.entries[0]).height()) *
                tape.value(r.bank.entries[0]).width();
            std::vector<Var> module_costs;
            module_costs.reserve(r.occupancies.size());
            for (std::size_t m = 0; m < r.occupancies.size(); ++m)
                module_costs.push_back(module_cost_var(
                    tape, static_cast<int>(m), gates, r.occupancies[m], n, model.channels(),
                    model.key_count(), cfg.cost_formula));
            Var total = total_cost_var(tape, gates, module_costs);
            cost_value = tape.value(total)[0];
            Tensor target = p.target;
            loss = search_loss_var(tape, r.prediction, tape.constant(std::move(target)), total,
                                   lambda);
        } else {
            Tensor target = p.target;
            loss = tape.mse(r.prediction, tape.constant(std::move(target)));
        }
        losses.push_back(loss);
    }
    Var total_loss = tape.scale(tape.add_n(losses), 1.0 / static_cast<double>(batch.size()));
    const double loss_value = tape.value(total_loss)[0];
    if (!std::isfinite(loss_value))
        throw std::runtime_error("search diverged: non-finite loss");

    model.weights().zero_grads();
    net.arch.zero_grads();
    tape.backward(total_loss);
    opt.step(step_arch ? net.arch : model.weights(), lr);
    return {loss_value, cost_value};
}

std::vector<PatchPair> draw_patches(const std::vector<ImagePair>& images,
                                    std::span<const std::size_t> indices,
                                    const ExperimentConfig& cfg, SearchStreams& streams) {
    std::vector<PatchPair> out;
    out.reserve(indices.size());
    for (std::size_t idx : indices)
        out.push_back(sample_patch(images[idx], cfg, streams.data, streams.noise));
    return out;
}

}  // namespace

SearchResult run_search(Supernet& net, Adam& weight_opt, Adam& arch_opt,
                        const std::vector<ImagePair>& images, const ExperimentConfig& cfg,
                        SearchStreams& streams,
                        const std::function<void(const SearchStepLog&)>& on_step,
                        const std::function<void(bool arch_step)>& on_substep) {
    if (images.size() < 2)
        throw ContractError("search needs at least 2 images for the train/val split");

    // deterministic 80/20 split by seeded shuffle
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[streams.data.below(i)]);
    std::size_t val_count = images.size() / 5;
    if (val_count == 0) val_count = 1;
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(val_count));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(val_count), order.end());

    const double lambda = cfg.lambda_cv ? 0.0 : cfg.lambda;
    const int total_epochs = cfg.stage1_epochs + cfg.stage2_epochs;
    TemperatureSchedule temp{cfg.tau_start, cfg.tau_end, cfg.stage1_epochs, cfg.stage2_epochs};

    SearchResult result;
    std::size_t val_cursor = 0;
    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        const double tau = temperature(epoch, temp);
        const double lr = lr_schedule(epoch, LrPhase::Search, total_epochs, cfg.lr);
        const bool stage2 = epoch >= cfg.stage1_epochs;

        // one patch per train image per epoch, shuffled
        std::vector<std::size_t> epoch_order = train_idx;
        for (std::size_t i = epoch_order.size(); i > 1; --i)
            std::swap(epoch_order[i - 1], epoch_order[streams.data.below(i)]);

        std::size_t cursor = 0;
        while (cursor < epoch_order.size()) {
            const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch),
                                                           epoch_order.size() - cursor);
            const auto train_batch = draw_patches(
                images, std::span(epoch_order).subspan(cursor, take), cfg, streams);
            const StepOutcome w = search_step(net, weight_opt, false, train_batch, cfg, tau,
                                              stage2 ? lambda : 0.0, lr, streams);
            if (on_substep) on_substep(false);
            cursor += take;
            if (!stage2) continue;

            // alpha step on a validation batch of the same size
            std::vector<std::size_t> vb(take);
            for (std::size_t b = 0; b < take; ++b) {
                vb[b] = val_idx[val_cursor % val_idx.size()];
                ++val_cursor;
            }
            const auto val_batch = draw_patches(images, vb, cfg, streams);
            const StepOutcome a =
                search_step(net, arch_opt, true, val_batch, cfg, tau, lambda, lr, streams);
            if (on_substep) on_substep(true);

            SearchStepLog log;
            log.epoch = epoch;
            log.tau = tau;
            log.s_hat.resize(net.alpha.size());
            for (std::size_t j = 0; j < net.alpha.size(); ++j)
                log.s_hat[j] = 1.0 / (1.0 + std::exp(-(*net.alpha[j])[0] / tau));
            log.cost = w.cost;
            log.train_loss = w.loss;
            log.val_loss = a.loss;
            result.trace.push_back(log);
            if (on_step) on_step(log);
        }
    }

    result.final_alpha.resize(net.alpha.size());
    for (std::size_t j = 0; j < net.alpha.size(); ++j) result.final_alpha[j] = (*net.alpha[j])[0];
    result.derived = derive_arch(result.final_alpha);
    return result;
}

std::unique_ptr<RestorationModel> derive_model(const Supernet& net,
                                               const std::vector<int>& positions,
                                               const ExperimentConfig& cfg, Rng& init_rng) {
    ExperimentConfig derived = cfg;
    derived.variant = AttentionVariant::Acla;
    auto model = std::make_unique<RestorationModel>(derived, positions, init_rng);
    model->warm_start_from(*net.model);
    return model;
}

double cross_validate_lambda(std::span<const double> candidates,
                             const std::vector<ImagePair>& images,
                             const ExperimentConfig& cfg, std::uint64_t seed) {
    if (candidates.empty())
        throw ContractError("cross_validate_lambda needs a non-empty candidate set");
    if (candidates.size() == 1) return candidates[0];

    // 20% search slice, 10% held-out evaluation slice
    Rng split_rng = Rng::stream(seed, "cv.split");
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.below(i)]);
    std::size_t n_search = std::max<std::size_t>(2, images.size() / 5);
    std::size_t n_eval = std::max<std::size_t>(1, images.size() / 10);
    n_search = std::min(n_search, images.size() > 1 ? images.size() - 1 : images.size());
    n_eval = std::min(n_eval, images.size() - n_search);
    if (n_eval == 0) throw ContractError("not enough images for lambda cross-validation");

    std::vector<ImagePair> search_set, eval_set;
    for (std::size_t i = 0; i < n_search; ++i) search_set.push_back(images[order[i]]);
    for (std::size_t i = 0; i < n_eval; ++i) eval_set.push_back(images[order[n_search + i]]);
    const ValSet eval_val = prepare_val(eval_set, cfg, seed);

    double best_lambda = candidates[0];
    double best_psnr = -1.0;
    for (const double lam : candidates) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.lambda_cv = false;
        run_cfg.lambda = lam;

        Rng init_rng = Rng::stream(seed, "cv.init");
        Supernet net = build_supernet(run_cfg, init_rng);
        Adam w_opt, a_opt;
        SearchStreams streams = make_search_streams(seed);
        SearchResult sr = run_search(net, w_opt, a_opt, search_set, run_cfg, streams);

        double score;
        if (sr.derived.empty()) {
            // nothing inserted: score the plain searched backbone
            ExperimentConfig plain = run_cfg;
            plain.variant = AttentionVariant::None;
            Rng r2 = Rng::stream(seed, "cv.init");
            RestorationModel base(plain, {}, r2);
            // reuse trunk weights from the supernet by name
            for (std::size_t i = 0; i < base.weights().size(); ++i) {
                const Tensor* src = net.model->weights().find(base.weights().name(i));
                if (src && src->shape() == base.weights()[i].shape())
                    base.weights()[i].raw() = src->raw();
            }
            score = evaluate(base, eval_val, plain).mean_psnr;
        } else {
            Rng r2 = Rng::stream(seed, "cv.derived");
            auto model = derive_model(net, sr.derived, run_cfg, r2);
            ExperimentConfig retrain = run_cfg;
            retrain.positions = sr.derived;
            retrain.search_positions = false;
            Adam opt;
            TrainStreams ts = make_train_streams(seed + 1);
            ValSet train_val = prepare_val(eval_set, retrain, seed);
            train_model(*model, opt, search_set, train_val, retrain, ts);
            score = evaluate(*model, eval_val, retrain).mean_psnr;
        }
        if (score >= best_psnr) {  // ties break toward the larger lambda
            best_psnr = score;
            best_lambda = lam;
        }
    }
    return best_lambda;
}

}  // namespace acla
