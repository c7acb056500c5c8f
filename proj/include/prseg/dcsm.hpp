#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "prseg/nn.hpp"
#include "prseg/rng.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

enum class Mode { training, inference };

constexpr double kProbClamp = 1e-7;

/// Channel-wise FC that scores each channel, plus the selection knobs.
struct DcsmParams {
    Tensor weight;  // {C,C}
    Tensor bias;    // {C}
    double rho = 0.5;
    double temperature = 1.0;

    int channels() const { return weight.dim(0); }
};

struct ChannelSelection {
    Tensor probs;      // P, {C}
    Tensor indicator;  // Q, {C}, entries exactly 0 or 1
    Mode mode = Mode::inference;
};

inline DcsmParams make_dcsm_params(int channels, double rho, double temperature = 1.0) {
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("dcsm: rho must lie in [0,1]");
    if (temperature <= 0.0) throw std::invalid_argument("dcsm: temperature must be positive");
    DcsmParams p;
    p.weight = Tensor::zeros({channels, channels});
    p.bias = Tensor::zeros({channels});
    p.rho = rho;
    p.temperature = temperature;
    return p;
}

/// P = Sigmoid(FC(AvgPool(f))).
inline Tensor predict_probs(const Tensor& f, const DcsmParams& params) {
    return sigmoid(linear(avg_pool_global(f), params.weight, params.bias));
}

/// Number of rotated channels at ratio rho. The epsilon guards floor
/// against values like 0.3*10 landing just below the integer.
inline int rotate_count(double rho, int channels) {
    return static_cast<int>(rho * channels + 1e-9);
}

/// Deterministic top-k indicator: the floor(rho*C) largest probabilities
/// get a 1; equal values are taken in ascending index order.
inline Tensor select_inference(const Tensor& probs, double rho) {
    const int C = probs.dim(0);
    const int k = rotate_count(rho, C);
    std::vector<int> idx(static_cast<std::size_t>(C));
    std::iota(idx.begin(), idx.end(), 0);
    const auto& p = probs.data();
    std::stable_sort(idx.begin(), idx.end(), [&p](int a, int b) {
        return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
    });
    std::vector<double> q(static_cast<std::size_t>(C), 0.0);
    for (int i = 0; i < k; ++i) q[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1.0;
    return Tensor::from_data({C}, std::move(q));
}

/// Stochastic binary indicator with straight-through gradients. Each
/// channel is a 2-way Gumbel-Softmax between "rotate" (weight P) and
/// "reserve" (weight 1-P); the softmax collapses to a sigmoid of the
/// logit difference. Forward values are exactly 0 or 1; the backward pass
/// sees the soft relaxation.
inline Tensor select_training(const Tensor& probs, double temperature, Rng& rng) {
    if (temperature <= 0.0) throw std::invalid_argument("select_training: temperature must be positive");
    const int C = probs.dim(0);
    std::vector<double> noise(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i) {
        const double g1 = gumbel(rng);
        const double g0 = gumbel(rng);
        noise[static_cast<std::size_t>(i)] = g1 - g0;
    }
    const Tensor pc = clamp(probs, kProbClamp, 1.0 - kProbClamp);
    const Tensor logit = sub(log(pc), log(affine(pc, -1.0, 1.0)));
    const Tensor z = scale(add(logit, Tensor::from_data({C}, std::move(noise))), 1.0 / temperature);
    const Tensor soft = sigmoid(z);
    std::vector<double> hard(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i) hard[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : 0.0;
    return add(sub(soft, detach(soft)), Tensor::from_data({C}, std::move(hard)));
}

inline ChannelSelection select_channels(const Tensor& f, const DcsmParams& params, Mode mode, Rng& rng) {
    ChannelSelection sel;
    sel.mode = mode;
    sel.probs = predict_probs(f, params);
    sel.indicator = mode == Mode::inference ? select_inference(sel.probs, params.rho)
                                            : select_training(sel.probs, params.temperature, rng);
    return sel;
}

/// Ascending channel ids with Q=1.
inline std::vector<int> selected_indices(const Tensor& indicator) {
    std::vector<int> out;
    const auto& q = indicator.data();
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] == 1.0)
            out.push_back(static_cast<int>(i));
        else if (q[i] != 0.0)
            throw std::invalid_argument("selected_indices: indicator entries must be exactly 0 or 1");
    }
    return out;
}

}  // namespace prseg
