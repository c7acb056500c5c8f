#pragma once

#include <string>
#include <vector>

#include "prseg/dcsm.hpp"
#include "prseg/nn.hpp"
#include "prseg/prm.hpp"
#include "prseg/rng.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

enum class Selection { dcsm, random, fixed };

inline std::string selection_name(Selection s) {
    switch (s) {
        case Selection::dcsm: return "dcsm";
        case Selection::random: return "random";
        case Selection::fixed: return "fixed";
    }
    throw std::logic_error("unknown selection");
}

inline Selection selection_from_name(const std::string& s) {
    if (s == "dcsm") return Selection::dcsm;
    if (s == "random") return Selection::random;
    if (s == "fixed") return Selection::fixed;
    throw std::invalid_argument("unknown selection manner '" + s + "' (expected dcsm, random or fixed)");
}

struct DecoderConfig {
    int dim = 512;
    int blocks = 2;
    double rho = 0.5;
    int group_size = 4;
    double alpha = 0.4;
    int num_classes = 4;
    int scales = 1;  // 1 = single-scale, 4 = multi-scale
    Mode mode = Mode::training;
    bool final_concat = true;
    Selection selection = Selection::dcsm;
    double temperature = 1.0;
};

/// One decoder block: channel selection, patch rotation, then a square FC.
struct DprBlockParams {
    DcsmParams dcsm;
    Tensor fc_weight;  // {D,D}
    Tensor fc_bias;    // {D}
};

namespace detail {

inline Tensor constant_indicator(int channels, const std::vector<int>& picked) {
    std::vector<double> q(static_cast<std::size_t>(channels), 0.0);
    for (int i : picked) q[static_cast<std::size_t>(i)] = 1.0;
    return Tensor::from_data({channels}, std::move(q));
}

inline std::vector<int> random_subset(int channels, int k, Rng& rng) {
    std::vector<int> pool(static_cast<std::size_t>(channels));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) std::swap(pool[static_cast<std::size_t>(i)],
                                          pool[static_cast<std::size_t>(uniform_int(rng, i, channels - 1))]);
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

}  // namespace detail

/// Q = select(F); F_hat = PRM(F, Q); out = FC(F_hat). With rho = 0 the
/// block degrades to the bare FC (no selection, no rotation) in both
/// modes, which is what the component ablation compares against.
inline Tensor dpr_block(const Tensor& f, const DprBlockParams& params, const DecoderConfig& cfg, Mode mode,
                        Rng& rng, Tensor* q_out = nullptr) {
    const int C = f.dim(0);
    const PrmConfig prm_cfg{cfg.group_size, cfg.rho};
    Tensor q;
    Tensor f_hat;
    if (cfg.rho == 0.0) {
        q = Tensor::zeros({C});
        f_hat = f;
    } else if (cfg.selection == Selection::dcsm) {
        const Tensor probs = predict_probs(f, params.dcsm);
        if (mode == Mode::training) {
            q = select_training(probs, params.dcsm.temperature, rng);
            f_hat = prm_training(f, q, prm_cfg);
        } else {
            q = select_inference(probs, cfg.rho);
            f_hat = prm_inference(f, q, prm_cfg);
        }
    } else {
        const int k = rotate_count(cfg.rho, C);
        std::vector<int> picked;
        if (cfg.selection == Selection::random) {
            picked = detail::random_subset(C, k, rng);
            std::sort(picked.begin(), picked.end());
        } else {
            picked.resize(static_cast<std::size_t>(k));
            std::iota(picked.begin(), picked.end(), 0);
        }
        q = detail::constant_indicator(C, picked);
        f_hat = prm_inference(f, q, prm_cfg);
    }
    if (q_out) *q_out = q;
    return linear(f_hat, params.fc_weight, params.fc_bias);
}

// ---------------------------------------------------------------------------
// decoders
// ---------------------------------------------------------------------------

struct PrsegSParams {
    Tensor phi_weight;  // {D,C}
    Tensor phi_bias;    // {D}
    std::vector<DprBlockParams> blocks;
    Tensor cls_weight;  // {K, D+C} or {K, D}
    Tensor cls_bias;    // {K}
};

/// Single-scale decoder: project the encoder feature to width D, run the
/// block stack, optionally concatenate the encoder feature back in, then
/// classify per pixel.
inline Tensor prseg_s_forward(const Tensor& f_enc, const PrsegSParams& params, const DecoderConfig& cfg,
                              Mode mode, Rng& rng, std::vector<Tensor>* qs_out = nullptr) {
    Tensor f = linear(f_enc, params.phi_weight, params.phi_bias);
    for (const auto& bp : params.blocks) {
        Tensor q;
        f = dpr_block(f, bp, cfg, mode, rng, &q);
        if (qs_out) qs_out->push_back(q);
    }
    const Tensor head_in = cfg.final_concat ? concat({f, f_enc}, 0) : f;
    return linear(head_in, params.cls_weight, params.cls_bias);
}

struct ScaleBranchParams {
    Tensor phi_weight;  // {D, C_i}
    Tensor phi_bias;    // {D}
    std::vector<DprBlockParams> blocks;
};

struct PrsegMParams {
    std::vector<ScaleBranchParams> scales;  // one per backbone level
    Tensor cls_weight;                      // {K, S*D (+D)}
    Tensor cls_bias;                        // {K}
};

/// Multi-scale decoder: each backbone level gets its own projection and
/// block stack; branch outputs are upsampled to the finest level and
/// concatenated. The final concatenation reuses the projected finest
/// encoder feature so the head width stays resolution-independent.
inline Tensor prseg_m_forward(const std::vector<Tensor>& enc, const PrsegMParams& params,
                              const DecoderConfig& cfg, Mode mode, Rng& rng,
                              std::vector<Tensor>* qs_out = nullptr) {
    if (enc.size() != params.scales.size())
        throw std::invalid_argument("prseg_m_forward: got " + std::to_string(enc.size()) +
                                    " encoder features for " + std::to_string(params.scales.size()) + " branches");
    if (enc.empty()) throw std::invalid_argument("prseg_m_forward: no encoder features");
    const int Ho = enc[0].dim(1);
    const int Wo = enc[0].dim(2);
    std::vector<Tensor> merged;
    Tensor projected_finest;
    for (std::size_t i = 0; i < enc.size(); ++i) {
        const auto& sp = params.scales[i];
        Tensor f = linear(enc[i], sp.phi_weight, sp.phi_bias);
        if (i == 0) projected_finest = f;
        for (const auto& bp : sp.blocks) {
            Tensor q;
            f = dpr_block(f, bp, cfg, mode, rng, &q);
            if (qs_out) qs_out->push_back(q);
        }
        merged.push_back(upsample_bilinear(f, Ho, Wo));
    }
    Tensor head_in = concat(merged, 0);
    if (cfg.final_concat) head_in = concat({head_in, projected_finest}, 0);
    return linear(head_in, params.cls_weight, params.cls_bias);
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean over blocks of (rho - selected fraction)^2. Gradient reaches the
/// selection probabilities through the straight-through indicators.
inline Tensor reg_loss(const std::vector<Tensor>& qs, double rho) {
    if (qs.empty()) throw std::invalid_argument("reg_loss: need at least one indicator");
    Tensor acc;
    for (const auto& q : qs) {
        const Tensor d = sub(Tensor::scalar(rho), mean(q));
        const Tensor sq = mul(d, d);
        acc = acc.defined() ? add(acc, sq) : sq;
    }
    return scale(acc, 1.0 / static_cast<double>(qs.size()));
}

struct LossParts {
    Tensor total;
    Tensor ce;
    Tensor reg;
};

/// L = L_ce + alpha * L_reg, with logits bilinearly upsampled to the
/// label resolution first.
inline LossParts total_loss(const Tensor& logits, const Tensor& labels, const std::vector<Tensor>& qs,
                            const DecoderConfig& cfg) {
    const Shape& sl = labels.shape();
    if (sl.size() != 2)
        throw std::invalid_argument("total_loss: labels must be rank 2, got " + shape_str(sl));
    LossParts parts;
    parts.ce = cross_entropy(upsample_bilinear(logits, sl[0], sl[1]), labels);
    parts.reg = qs.empty() ? Tensor::scalar(0.0) : reg_loss(qs, cfg.rho);
    parts.total = add(parts.ce, scale(parts.reg, cfg.alpha));
    return parts;
}

}  // namespace prseg
