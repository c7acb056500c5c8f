#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "prseg/decoder.hpp"
#include "prseg/nn.hpp"
#include "prseg/rng.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

inline Tensor uniform_init(Shape shape, double bound, Rng& rng) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = uniform(rng, -bound, bound);
    Tensor t = Tensor::from_data(std::move(shape), std::move(data));
    t.set_requires_grad(true);
    return t;
}

inline Tensor zero_init(Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
}

// ---------------------------------------------------------------------------
// toy backbone
// ---------------------------------------------------------------------------

struct ConvParams {
    Tensor weight;  // {O,C,3,3}
    Tensor bias;    // {O}
};

/// Stand-in encoder: a short stack of stride-2 3x3 convs with relu.
/// scales=1 emits one map at 1/8 resolution (width 64); scales=4 emits
/// maps at 1/4, 1/8, 1/16, 1/32 with widths 16, 32, 64, 128.
struct ToyBackboneParams {
    int scales = 1;
    std::vector<ConvParams> convs;
};

inline std::vector<int> backbone_widths(int scales) {
    if (scales == 1) return {16, 32, 64};
    if (scales == 4) return {8, 16, 32, 64, 128};
    throw std::invalid_argument("toy_backbone: scales must be 1 or 4, got " + std::to_string(scales));
}

/// Encoder channel widths as seen by the decoder.
inline std::vector<int> encoder_channels(int scales) {
    if (scales == 1) return {64};
    if (scales == 4) return {16, 32, 64, 128};
    throw std::invalid_argument("toy_backbone: scales must be 1 or 4, got " + std::to_string(scales));
}

inline ToyBackboneParams make_toy_backbone(int scales, Rng& rng) {
    ToyBackboneParams bp;
    bp.scales = scales;
    int in = 3;
    for (int out : backbone_widths(scales)) {
        ConvParams c;
        c.weight = uniform_init({out, in, 3, 3}, 1.0 / std::sqrt(9.0 * in), rng);
        c.bias = zero_init({out});
        bp.convs.push_back(std::move(c));
        in = out;
    }
    return bp;
}

inline std::vector<Tensor> toy_backbone(const Tensor& image, const ToyBackboneParams& params) {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[0] != 3)
        throw std::invalid_argument("toy_backbone: image must be {3,h,w}, got " + shape_str(s));
    const int div = params.scales == 4 ? 32 : 8;
    if (s[1] % div != 0 || s[2] % div != 0)
        throw std::invalid_argument("toy_backbone: image size " + std::to_string(s[1]) + "x" +
                                    std::to_string(s[2]) + " is not divisible by " + std::to_string(div));
    std::vector<Tensor> out;
    Tensor x = image;
    for (std::size_t i = 0; i < params.convs.size(); ++i) {
        x = relu(conv3x3(x, params.convs[i].weight, params.convs[i].bias, 2));
        if (params.scales == 1) {
            if (i + 1 == params.convs.size()) out.push_back(x);
        } else if (i >= 1) {
            out.push_back(x);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// full model
// ---------------------------------------------------------------------------

struct PrsegModel {
    DecoderConfig cfg;
    ToyBackboneParams backbone;
    PrsegSParams dec_s;  // populated when cfg.scales == 1
    PrsegMParams dec_m;  // populated when cfg.scales == 4
};

namespace detail {

inline DcsmParams init_dcsm(int dim, const DecoderConfig& cfg, Rng& rng) {
    DcsmParams d;
    d.weight = uniform_init({dim, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    d.bias = zero_init({dim});
    d.rho = cfg.rho;
    d.temperature = cfg.temperature;
    return d;
}

inline std::vector<DprBlockParams> init_blocks(const DecoderConfig& cfg, Rng& rng) {
    std::vector<DprBlockParams> blocks;
    for (int l = 0; l < cfg.blocks; ++l) {
        DprBlockParams b;
        b.dcsm = init_dcsm(cfg.dim, cfg, rng);
        b.fc_weight = uniform_init({cfg.dim, cfg.dim}, 1.0 / std::sqrt(static_cast<double>(cfg.dim)), rng);
        b.fc_bias = zero_init({cfg.dim});
        blocks.push_back(std::move(b));
    }
    return blocks;
}

}  // namespace detail

inline PrsegModel init_model(const DecoderConfig& cfg, Rng& rng) {
    if (cfg.blocks < 1) throw std::invalid_argument("init_model: need at least one block");
    if (cfg.dim < 1) throw std::invalid_argument("init_model: decoder width must be positive");
    if (cfg.rho < 0.0 || cfg.rho > 1.0) throw std::invalid_argument("init_model: rho must lie in [0,1]");
    PrsegModel m;
    m.cfg = cfg;
    m.backbone = make_toy_backbone(cfg.scales, rng);
    const std::vector<int> enc_ch = encoder_channels(cfg.scales);
    if (cfg.scales == 1) {
        const int C = enc_ch[0];
        m.dec_s.phi_weight = uniform_init({cfg.dim, C}, 1.0 / std::sqrt(static_cast<double>(C)), rng);
        m.dec_s.phi_bias = zero_init({cfg.dim});
        m.dec_s.blocks = detail::init_blocks(cfg, rng);
        const int head_in = cfg.final_concat ? cfg.dim + C : cfg.dim;
        m.dec_s.cls_weight =
            uniform_init({cfg.num_classes, head_in}, 1.0 / std::sqrt(static_cast<double>(head_in)), rng);
        m.dec_s.cls_bias = zero_init({cfg.num_classes});
    } else {
        for (int c : enc_ch) {
            ScaleBranchParams sp;
            sp.phi_weight = uniform_init({cfg.dim, c}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
            sp.phi_bias = zero_init({cfg.dim});
            sp.blocks = detail::init_blocks(cfg, rng);
            m.dec_m.scales.push_back(std::move(sp));
        }
        const int S = static_cast<int>(enc_ch.size());
        const int head_in = cfg.final_concat ? (S + 1) * cfg.dim : S * cfg.dim;
        m.dec_m.cls_weight =
            uniform_init({cfg.num_classes, head_in}, 1.0 / std::sqrt(static_cast<double>(head_in)), rng);
        m.dec_m.cls_bias = zero_init({cfg.num_classes});
    }
    return m;
}

/// Decoder half only; enc must come from the matching backbone layout.
inline Tensor decoder_forward(const PrsegModel& m, const std::vector<Tensor>& enc, Mode mode, Rng& rng,
                              std::vector<Tensor>* qs_out = nullptr) {
    if (m.cfg.scales == 1) {
        if (enc.size() != 1) throw std::invalid_argument("decoder_forward: single-scale decoder expects one feature");
        return prseg_s_forward(enc[0], m.dec_s, m.cfg, mode, rng, qs_out);
    }
    return prseg_m_forward(enc, m.dec_m, m.cfg, mode, rng, qs_out);
}

struct ForwardResult {
    Tensor logits;
    std::vector<Tensor> qs;
    std::vector<Tensor> enc;
};

inline ForwardResult model_forward(const PrsegModel& m, const Tensor& image, Mode mode, Rng& rng) {
    ForwardResult r;
    r.enc = toy_backbone(image, m.backbone);
    r.logits = decoder_forward(m, r.enc, mode, rng, &r.qs);
    return r;
}

// ---------------------------------------------------------------------------
// parameter registry
// ---------------------------------------------------------------------------

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline NamedParams named_params(const PrsegModel& m) {
    NamedParams out;
    for (std::size_t i = 0; i < m.backbone.convs.size(); ++i) {
        out.emplace_back("backbone.conv" + std::to_string(i) + ".weight", m.backbone.convs[i].weight);
        out.emplace_back("backbone.conv" + std::to_string(i) + ".bias", m.backbone.convs[i].bias);
    }
    auto add_blocks = [&out](const std::string& prefix, const std::vector<DprBlockParams>& blocks) {
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            const std::string b = prefix + "block" + std::to_string(l) + ".";
            out.emplace_back(b + "dcsm.weight", blocks[l].dcsm.weight);
            out.emplace_back(b + "dcsm.bias", blocks[l].dcsm.bias);
            out.emplace_back(b + "fc.weight", blocks[l].fc_weight);
            out.emplace_back(b + "fc.bias", blocks[l].fc_bias);
        }
    };
    if (m.cfg.scales == 1) {
        out.emplace_back("dec.phi.weight", m.dec_s.phi_weight);
        out.emplace_back("dec.phi.bias", m.dec_s.phi_bias);
        add_blocks("dec.", m.dec_s.blocks);
        out.emplace_back("dec.cls.weight", m.dec_s.cls_weight);
        out.emplace_back("dec.cls.bias", m.dec_s.cls_bias);
    } else {
        for (std::size_t i = 0; i < m.dec_m.scales.size(); ++i) {
            const std::string s = "dec.scale" + std::to_string(i) + ".";
            out.emplace_back(s + "phi.weight", m.dec_m.scales[i].phi_weight);
            out.emplace_back(s + "phi.bias", m.dec_m.scales[i].phi_bias);
            add_blocks(s, m.dec_m.scales[i].blocks);
        }
        out.emplace_back("dec.cls.weight", m.dec_m.cls_weight);
        out.emplace_back("dec.cls.bias", m.dec_m.cls_bias);
    }
    return out;
}

}  // namespace prseg
