#include "acla/model.hpp"

#include <cmath>

namespace acla {

namespace {

Tensor gauss_init(const Shape& shape, double stddev, Rng& rng) {
    Tensor t = Tensor::of_shape(shape);
    for (auto& v : t.values()) v = stddev * rng.gaussian();
    return t;
}

// Wide positive mask-unit init: most keys start decisively on (negligible
// train-time flip noise), the distribution tail leaves some decisively off.
constexpr double kMaskInitBias = 5.0;
constexpr double kMaskInitStd = 2.0;

}  // namespace

RestorationModel::RestorationModel(const ExperimentConfig& cfg, std::vector<int> positions,
                                   Rng& init_rng)
    : variant_(cfg.variant),
      task_(cfg.task),
      blocks_(cfg.blocks),
      channels_(cfg.channels),
      key_count_(cfg.key_count),
      scale_(task_scale(cfg.task)),
      positions_(std::move(positions)) {
    const int c = channels_;
    if (variant_ == AttentionVariant::None && !positions_.empty())
        throw ConfigError("attention.positions",
                          "insert positions need an attention variant");
    for (std::size_t i = 0; i + 1 < positions_.size(); ++i)
        if (positions_[i] >= positions_[i + 1])
            throw ConfigError("attention.positions", "insert positions must increase");
    for (int p : positions_)
        if (p < 1 || p > blocks_)
            throw ConfigError("attention.positions", "insert position outside the backbone");

    const double conv_std = std::sqrt(2.0 / (9.0 * c));
    head_w_ = &params_.add("head.w", gauss_init({3, 3, 3, c}, std::sqrt(2.0 / (9.0 * 3)), init_rng));
    head_b_ = &params_.add("head.b", Tensor::vec(c));

    block_refs_.resize(static_cast<std::size_t>(blocks_));
    for (int b = 0; b < blocks_; ++b) {
        const std::string prefix = "block" + std::to_string(b + 1);
        auto& r = block_refs_[static_cast<std::size_t>(b)];
        r.w1 = &params_.add(prefix + ".conv1.w", gauss_init({3, 3, c, c}, conv_std, init_rng));
        r.b1 = &params_.add(prefix + ".conv1.b", Tensor::vec(c));
        // zero second conv: the block starts as the identity map
        r.w2 = &params_.add(prefix + ".conv2.w", Tensor::kernel3(c, c));
        r.b2 = &params_.add(prefix + ".conv2.b", Tensor::vec(c));
    }

    const int tail_out = scale_ > 1 ? 3 * scale_ * scale_ : 3;
    tail_w_ = &params_.add("tail.w", gauss_init({3, 3, c, tail_out}, conv_std, init_rng));
    tail_b_ = &params_.add("tail.b", Tensor::vec(tail_out));

    // Attention parameters draw after the trunk, and mask units after every
    // other drawn tensor, so models differing only in the attention variant
    // share identical trunk and embedding initializations under one seed.
    const double proj_std = std::sqrt(1.0 / c);
    attn_refs_.resize(positions_.size());
    for (std::size_t m = 0; m < positions_.size(); ++m) {
        const std::string prefix = "attn" + std::to_string(positions_[m]);
        auto& r = attn_refs_[m];
        r.referred_layers = static_cast<int>(m) + 1;
        r.w_off = r.b_off = r.w_f = r.b_f = nullptr;
        r.w_theta = r.b_theta = r.w_phi = r.b_phi = nullptr;
        r.w_m = r.b_m = nullptr;
        if (variant_ == AttentionVariant::Cla || variant_ == AttentionVariant::Acla) {
            const int kl = key_count_ * r.referred_layers;
            // zero-initialized offsets: every key starts at its query position
            r.w_off = &params_.add(prefix + ".offset.w", Tensor::matrix(c, 2 * kl));
            r.b_off = &params_.add(prefix + ".offset.b", Tensor::vec(2 * kl));
            // zero logits: uniform attention weights at initialization
            r.w_f = &params_.add(prefix + ".weight.w", Tensor::matrix(c, kl));
            r.b_f = &params_.add(prefix + ".weight.b", Tensor::vec(kl));
        } else if (variant_ == AttentionVariant::Nl || variant_ == AttentionVariant::Clnl) {
            r.w_theta = &params_.add(prefix + ".theta.w", gauss_init({c, c, 1, 1}, proj_std, init_rng));
            r.b_theta = &params_.add(prefix + ".theta.b", Tensor::vec(c));
            r.w_phi = &params_.add(prefix + ".phi.w", gauss_init({c, c, 1, 1}, proj_std, init_rng));
            r.b_phi = &params_.add(prefix + ".phi.b", Tensor::vec(c));
        }
        r.w_g = &params_.add(prefix + ".value.w", gauss_init({c, c, 1, 1}, proj_std, init_rng));
        r.b_g = &params_.add(prefix + ".value.b", Tensor::vec(c));
        // zero output transform: the whole block starts as the identity
        r.w_h = &params_.add(prefix + ".out.w", Tensor::matrix(c, c));
        r.b_h = &params_.add(prefix + ".out.b", Tensor::vec(c));
    }
    if (variant_ == AttentionVariant::Acla) {
        for (std::size_t m = 0; m < positions_.size(); ++m) {
            const std::string prefix = "attn" + std::to_string(positions_[m]);
            auto& r = attn_refs_[m];
            r.w_m = &params_.add(prefix + ".mask.w",
                                 gauss_init({c, 1, 1, 1}, kMaskInitStd, init_rng));
            Tensor bm = Tensor::vec(1);
            bm[0] = kMaskInitBias;
            r.b_m = &params_.add(prefix + ".mask.b", std::move(bm));
        }
    }
}

ForwardResult RestorationModel::forward(Tape& tape, Var input, const ForwardOptions& opt) {
    if (!opt.layer_gates.empty() &&
        opt.layer_gates.size() != positions_.size())
        throw ContractError("layer gate count must equal the number of insert positions");

    ForwardResult res;
    Var f = tape.conv3x3(input, tape.leaf(*head_w_), tape.leaf(*head_b_));
    std::size_t module = 0;
    for (int b = 0; b < blocks_; ++b) {
        const auto& br = block_refs_[static_cast<std::size_t>(b)];
        Var r = tape.conv3x3(f, tape.leaf(*br.w1), tape.leaf(*br.b1));
        r = tape.relu(r);
        r = tape.conv3x3(r, tape.leaf(*br.w2), tape.leaf(*br.b2));
        f = tape.add(f, r);

        if (module < positions_.size() && positions_[module] == b + 1) {
            res.bank.push(f);
            const auto& ar = attn_refs_[module];
            KeyTrace* trace = nullptr;
            if (opt.traces) {
                opt.traces->resize(positions_.size());
                trace = &(*opt.traces)[module];
            }
            Var y;
            if (variant_ == AttentionVariant::Nl) {
                NlVars nv{tape.leaf(*ar.w_theta), tape.leaf(*ar.b_theta),
                          tape.leaf(*ar.w_phi), tape.leaf(*ar.b_phi),
                          tape.leaf(*ar.w_g), tape.leaf(*ar.b_g)};
                y = nl_forward(tape, f, nv);
            } else if (variant_ == AttentionVariant::Clnl) {
                NlVars nv{tape.leaf(*ar.w_theta), tape.leaf(*ar.b_theta),
                          tape.leaf(*ar.w_phi), tape.leaf(*ar.b_phi),
                          tape.leaf(*ar.w_g), tape.leaf(*ar.b_g)};
                y = clnl_forward(tape, res.bank.entries, nv);
            } else if (variant_ == AttentionVariant::Cla) {
                ClaVars cv{tape.leaf(*ar.w_off), tape.leaf(*ar.b_off),
                           tape.leaf(*ar.w_f), tape.leaf(*ar.b_f),
                           tape.leaf(*ar.w_g), tape.leaf(*ar.b_g)};
                ClaOptions co;
                co.key_count = key_count_;
                co.trace = trace;
                y = cla_forward(tape, res.bank.entries, cv, co);
            } else {  // Acla
                AclaVars av{{tape.leaf(*ar.w_off), tape.leaf(*ar.b_off),
                             tape.leaf(*ar.w_f), tape.leaf(*ar.b_f),
                             tape.leaf(*ar.w_g), tape.leaf(*ar.b_g)},
                            tape.leaf(*ar.w_m), tape.leaf(*ar.b_m)};
                AclaOptions ao;
                ao.key_count = key_count_;
                ao.tau = opt.tau;
                ao.mode = opt.mask_mode;
                ao.mask_rng = opt.mask_rng;
                ao.soft_forward = opt.soft_masks;
                ao.force_masks_on = opt.force_masks_on;
                if (!opt.layer_gates.empty())
                    ao.layer_gates = opt.layer_gates.subspan(0, module + 1);
                ao.trace = trace;
                AclaResult r2 = acla_forward(tape, res.bank.entries, av, ao);
                y = r2.output;
                res.occupancies.push_back(r2.occupancy);
            }
            f = block_wrap(tape, f, y, tape.leaf(*ar.w_h), tape.leaf(*ar.b_h));
            ++module;
        }
    }
    Var t = tape.conv3x3(f, tape.leaf(*tail_w_), tape.leaf(*tail_b_));
    res.prediction = scale_ > 1 ? tape.pixel_shuffle(t, scale_) : t;
    return res;
}

void RestorationModel::warm_start_from(const RestorationModel& searched) {
    if (variant_ != AttentionVariant::Acla || searched.variant_ != AttentionVariant::Acla)
        throw ContractError("warm start is defined between acla models");
    if (channels_ != searched.channels_ || blocks_ != searched.blocks_ ||
        key_count_ != searched.key_count_)
        throw ContractError("warm start requires matching backbone dimensions");

    // backbone, head and tail copy over by name
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::string& nm = params_.name(i);
        if (nm.rfind("attn", 0) == 0 &&
            (nm.find(".offset.") != std::string::npos || nm.find(".weight.") != std::string::npos))
            continue;  // sliced below
        const Tensor* src = const_cast<RestorationModel&>(searched).params_.find(nm);
        if (src && src->shape() == params_[i].shape()) params_[i].raw() = src->raw();
    }

    // per-layer slices of the offset/weight projections: keep the columns of
    // referred layers that survived derivation
    const int K = key_count_;
    for (std::size_t m = 0; m < positions_.size(); ++m) {
        const int pos = positions_[m];
        std::size_t sm = 0;
        while (sm < searched.positions_.size() && searched.positions_[sm] != pos) ++sm;
        if (sm == searched.positions_.size()) continue;
        const auto& dst = attn_refs_[m];
        const auto& src = searched.attn_refs_[sm];
        // kept referred layers of this module, as indices into the searched
        // module's layer range
        std::vector<int> kept;
        for (std::size_t i = 0; i <= m; ++i) {
            const int p = positions_[i];
            for (std::size_t si = 0; si < searched.positions_.size(); ++si)
                if (searched.positions_[si] == p) kept.push_back(static_cast<int>(si));
        }
        const int c = channels_;
        const int src_kl = K * src.referred_layers;
        const int dst_kl = K * dst.referred_layers;
        for (int ci = 0; ci < c; ++ci)
            for (std::size_t li = 0; li < kept.size(); ++li)
                for (int k = 0; k < K; ++k) {
                    const int su = kept[li] * K + k;
                    const int du = static_cast<int>(li) * K + k;
                    dst.w_off->raw()[static_cast<std::size_t>(ci) * 2 * dst_kl + 2 * du] =
                        src.w_off->raw()[static_cast<std::size_t>(ci) * 2 * src_kl + 2 * su];
                    dst.w_off->raw()[static_cast<std::size_t>(ci) * 2 * dst_kl + 2 * du + 1] =
                        src.w_off->raw()[static_cast<std::size_t>(ci) * 2 * src_kl + 2 * su + 1];
                    dst.w_f->raw()[static_cast<std::size_t>(ci) * dst_kl + du] =
                        src.w_f->raw()[static_cast<std::size_t>(ci) * src_kl + su];
                }
        for (std::size_t li = 0; li < kept.size(); ++li)
            for (int k = 0; k < K; ++k) {
                const int su = kept[li] * K + k;
                const int du = static_cast<int>(li) * K + k;
                dst.b_off->raw()[static_cast<std::size_t>(2 * du)] =
                    src.b_off->raw()[static_cast<std::size_t>(2 * su)];
                dst.b_off->raw()[static_cast<std::size_t>(2 * du + 1)] =
                    src.b_off->raw()[static_cast<std::size_t>(2 * su + 1)];
                dst.b_f->raw()[static_cast<std::size_t>(du)] =
                    src.b_f->raw()[static_cast<std::size_t>(su)];
            }
    }
}

}  // namespace acla
