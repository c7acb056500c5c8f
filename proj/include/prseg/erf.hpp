#pragma once

#include <cmath>
#include <vector>

#include "prseg/model.hpp"
#include "prseg/rng.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

struct ErfResult {
    int height = 0;
    int width = 0;
    std::vector<double> heat;  // |d logits(center)/d feature|, channel-summed
};

/// Effective receptive field of the decoder: push a unit gradient from
/// the channel-summed logit at one feature-map pixel back to the finest
/// encoder feature and average the absolute per-pixel gradient over the
/// probe images. The backbone is cut out of the graph so the map shows
/// the decoder's reach alone.
inline ErfResult erf_probe(const PrsegModel& model, const std::vector<Tensor>& images, int center_r,
                           int center_c, Rng& rng) {
    if (images.empty()) throw std::invalid_argument("erf_probe: need at least one image");
    ErfResult result;
    for (const auto& image : images) {
        std::vector<Tensor> enc;
        for (auto& f : toy_backbone(image, model.backbone)) enc.push_back(detach(f));
        Tensor probe = enc[0];
        probe.set_requires_grad(true);
        enc[0] = probe;

        Tensor logits = decoder_forward(model, enc, Mode::inference, rng);
        const int Ho = logits.dim(1), Wo = logits.dim(2);
        if (center_r < 0 || center_r >= Ho || center_c < 0 || center_c >= Wo)
            throw std::invalid_argument("erf_probe: center (" + std::to_string(center_r) + "," +
                                        std::to_string(center_c) + ") outside " + std::to_string(Ho) + "x" +
                                        std::to_string(Wo) + " output");
        backward(sum(slice(slice(logits, 1, center_r, 1), 2, center_c, 1)));

        const int C = probe.dim(0);
        const int H = probe.dim(1), W = probe.dim(2);
        if (result.heat.empty()) {
            result.height = H;
            result.width = W;
            result.heat.assign(static_cast<std::size_t>(H) * W, 0.0);
        }
        const auto& g = probe.grad();
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        for (int c = 0; c < C; ++c)
            for (std::size_t p = 0; p < plane; ++p)
                result.heat[p] += std::abs(g[static_cast<std::size_t>(c) * plane + p]);
    }
    for (double& v : result.heat) v /= static_cast<double>(images.size());
    // the sweeps above also touched the parameter gradient buffers
    for (auto& [name, t] : named_params(model)) t.zero_grad();
    return result;
}

}  // namespace prseg
