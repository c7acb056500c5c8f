#pragma once

#include <vector>

#include "prseg/dcsm.hpp"
#include "prseg/rotate.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

struct PrmConfig {
    int group_size = 4;
    double rho = 0.5;
};

namespace detail {

inline void check_prm_args(const Tensor& f, const Tensor& q, const PrmConfig& cfg) {
    const Shape& s = f.shape();
    if (s.size() != 3) throw std::invalid_argument("prm: feature map must be rank 3, got " + shape_str(s));
    if (q.shape() != Shape{s[0]})
        throw std::invalid_argument("prm: indicator " + shape_str(q.shape()) + " does not match channels of " +
                                    shape_str(s));
    if (cfg.group_size < 1) throw std::invalid_argument("prm: group size must be >= 1");
    if (s[1] % cfg.group_size != 0 || s[2] % cfg.group_size != 0)
        throw std::invalid_argument("prm: spatial dims " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                                    " are not divisible by group size " + std::to_string(cfg.group_size));
}

}  // namespace detail

/// Inference split: rotated channels are gathered in ascending order,
/// rotated as a bundle, and written back in place. Reserved channels are
/// carried over bit-exactly.
inline Tensor prm_inference(const Tensor& f, const Tensor& q, const PrmConfig& cfg) {
    detail::check_prm_args(f, q, cfg);
    const std::vector<int> idx = selected_indices(q);
    if (idx.empty()) return f;
    const auto plan = cached_plan(cfg.group_size, static_cast<int>(idx.size()), f.dim(1), f.dim(2));
    return replace_channels(f, rotate(gather_channels(f, idx), plan), idx);
}

/// Training split: out = (1-Q) (*) f + scatter(rotate(gather(f) (*) Q)).
/// Forward values match prm_inference exactly for binary Q; the two
/// product gates are where Q's straight-through gradient enters.
inline Tensor prm_training(const Tensor& f, const Tensor& q, const PrmConfig& cfg) {
    detail::check_prm_args(f, q, cfg);
    const std::vector<int> idx = selected_indices(q);
    const int C = f.dim(0);
    const Tensor reserved = mul(f, reshape(affine(q, -1.0, 1.0), {C, 1, 1}));
    if (idx.empty()) return reserved;
    const int N = static_cast<int>(idx.size());
    const Tensor gated = mul(gather_channels(f, idx), reshape(gather_channels(q, idx), {N, 1, 1}));
    const auto plan = cached_plan(cfg.group_size, N, f.dim(1), f.dim(2));
    return add(reserved, scatter_channels(rotate(gated, plan), idx, C));
}

inline Tensor prm_forward(const Tensor& f, const Tensor& q, const PrmConfig& cfg, Mode mode) {
    return mode == Mode::inference ? prm_inference(f, q, cfg) : prm_training(f, q, cfg);
}

}  // namespace prseg
