#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>
#include <vector>

#include "prseg/tensor.hpp"

namespace prseg {

// ---------------------------------------------------------------------------
// clockwise enumeration
// ---------------------------------------------------------------------------

/// Patch positions enumerated over concentric rings, outermost ring first,
/// each ring walked clockwise starting at its top-left cell.
inline std::vector<std::pair<int, int>> clockwise_order(int group_size) {
    if (group_size < 1) throw std::invalid_argument("clockwise_order: group size must be >= 1");
    std::vector<std::pair<int, int>> order;
    order.reserve(static_cast<std::size_t>(group_size) * group_size);
    int lo = 0, hi = group_size - 1;
    while (lo <= hi) {
        if (lo == hi) {
            order.emplace_back(lo, lo);
            break;
        }
        for (int c = lo; c < hi; ++c) order.emplace_back(lo, c);
        for (int r = lo; r < hi; ++r) order.emplace_back(r, hi);
        for (int c = hi; c > lo; --c) order.emplace_back(hi, c);
        for (int r = hi; r > lo; --r) order.emplace_back(r, lo);
        ++lo;
        --hi;
    }
    return order;
}

// ---------------------------------------------------------------------------
// plans
// ---------------------------------------------------------------------------

/// Precomputed patch rotation. perm[d] is the source flat index feeding
/// destination d of an N x H x W tensor. Plans are immutable once built.
struct RotatePlan {
    int group_size = 1;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<std::size_t> perm;
};

/// Channel group of channel j out of n rotated channels.
inline int channel_group(int j, int n, int group_size) {
    return static_cast<int>((static_cast<long long>(j) * group_size * group_size) / n);
}

/// Build the rotation for N channels over an H x W plane cut into
/// G_s x G_s patches. Within every patch of channel j the value at
/// clockwise position p lands on clockwise position (p + g(j)) mod G_s^2
/// where g(j) = floor(j * G_s^2 / N).
inline RotatePlan build_plan(int group_size, int channels, int height, int width) {
    if (group_size < 1) throw std::invalid_argument("build_plan: group size must be >= 1");
    if (channels < 1) throw std::invalid_argument("build_plan: need at least one channel");
    if (height % group_size != 0 || width % group_size != 0)
        throw std::invalid_argument("build_plan: spatial dims " + std::to_string(height) + "x" +
                                    std::to_string(width) + " are not divisible by group size " +
                                    std::to_string(group_size));

    const auto order = clockwise_order(group_size);
    const int cells = group_size * group_size;
    const std::size_t plane = static_cast<std::size_t>(height) * width;

    RotatePlan plan;
    plan.group_size = group_size;
    plan.channels = channels;
    plan.height = height;
    plan.width = width;
    plan.perm.resize(static_cast<std::size_t>(channels) * plane);

    for (int j = 0; j < channels; ++j) {
        const int g = channel_group(j, channels, group_size);
        const std::size_t base = static_cast<std::size_t>(j) * plane;
        for (int bi = 0; bi < height; bi += group_size)
            for (int bj = 0; bj < width; bj += group_size)
                for (int p = 0; p < cells; ++p) {
                    const auto [rd, cd] = order[static_cast<std::size_t>(p)];
                    const auto [rs, cs] = order[static_cast<std::size_t>((p - g + cells) % cells)];
                    plan.perm[base + static_cast<std::size_t>(bi + rd) * width + (bj + cd)] =
                        base + static_cast<std::size_t>(bi + rs) * width + (bj + cs);
                }
    }
    return plan;
}

inline RotatePlan invert_plan(const RotatePlan& plan) {
    RotatePlan inv = plan;
    for (std::size_t d = 0; d < plan.perm.size(); ++d) inv.perm[plan.perm[d]] = d;
    return inv;
}

/// Shared cache; rebuilding a plan for every forward pass would dominate
/// small-model training time.
inline std::shared_ptr<const RotatePlan> cached_plan(int group_size, int channels, int height, int width) {
    static std::mutex mu;
    static std::map<std::tuple<int, int, int, int>, std::shared_ptr<const RotatePlan>> cache;
    const auto key = std::make_tuple(group_size, channels, height, width);
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it == cache.end())
        it = cache.emplace(key, std::make_shared<RotatePlan>(build_plan(group_size, channels, height, width))).first;
    return it->second;
}

// ---------------------------------------------------------------------------
// rotate
// ---------------------------------------------------------------------------

/// Apply the permutation: out[d] = x[perm[d]]. Gradients flow through the
/// inverse permutation.
inline Tensor rotate(const Tensor& x, const RotatePlan& plan) {
    const Shape expect{plan.channels, plan.height, plan.width};
    if (x.shape() != expect)
        throw std::invalid_argument("rotate: input " + shape_str(x.shape()) + " does not match plan " +
                                    shape_str(expect));
    const auto& d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[plan.perm[i]];
    auto xn = x.node();
    const std::vector<std::size_t>& perm = plan.perm;
    return detail::make_op(expect, std::move(out), {x}, [xn, perm](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) gx[perm[i]] += n.grad[i];
    });
}

inline Tensor rotate(const Tensor& x, const std::shared_ptr<const RotatePlan>& plan) { return rotate(x, *plan); }

}  // namespace prseg
