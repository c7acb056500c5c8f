#pragma once

#include <cmath>
#include <cstdio>
#include <vector>

#include "prseg/tensor.hpp"

namespace prseg {

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

/// Per-position fully connected layer.
/// x {C} -> {O}, or x {C,H,W} -> {O,H,W} applied at every spatial position.
/// weight is {O,C}, bias {O}.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& sw = weight.shape();
    if (sw.size() != 2) throw std::invalid_argument("linear: weight must be rank 2, got " + shape_str(sw));
    const int O = sw[0], C = sw[1];
    if (bias.shape() != Shape{O})
        throw std::invalid_argument("linear: bias shape " + shape_str(bias.shape()) + " does not match weight " +
                                    shape_str(sw));
    const Shape& sx = x.shape();
    if (sx.empty() || sx[0] != C)
        throw std::invalid_argument("linear: input " + shape_str(sx) + " does not match weight " + shape_str(sw));
    std::size_t P = 1;
    for (std::size_t a = 1; a < sx.size(); ++a) P *= static_cast<std::size_t>(sx[a]);

    Shape out_shape = sx;
    out_shape[0] = O;
    std::vector<double> out(static_cast<std::size_t>(O) * P);
    const auto& dx = x.data();
    const auto& dw = weight.data();
    const auto& db = bias.data();
    for (int o = 0; o < O; ++o) {
        double* row = out.data() + static_cast<std::size_t>(o) * P;
        for (std::size_t p = 0; p < P; ++p) row[p] = db[static_cast<std::size_t>(o)];
        for (int c = 0; c < C; ++c) {
            const double w = dw[static_cast<std::size_t>(o) * C + c];
            const double* xin = dx.data() + static_cast<std::size_t>(c) * P;
            for (std::size_t p = 0; p < P; ++p) row[p] += w * xin[p];
        }
    }
    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.node();
    return detail::make_op(out_shape, std::move(out), {x, weight, bias}, [xn, wn, bn, O, C, P](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        auto& gw = wn->ensure_grad();
        auto& gb = bn->ensure_grad();
        const auto& g = n.grad;
        for (int o = 0; o < O; ++o) {
            const double* grow = g.data() + static_cast<std::size_t>(o) * P;
            double acc = 0.0;
            for (std::size_t p = 0; p < P; ++p) acc += grow[p];
            gb[static_cast<std::size_t>(o)] += acc;
            for (int c = 0; c < C; ++c) {
                const double w = wn->data[static_cast<std::size_t>(o) * C + c];
                const double* xin = xn->data.data() + static_cast<std::size_t>(c) * P;
                double* gxin = gx.data() + static_cast<std::size_t>(c) * P;
                double wacc = 0.0;
                for (std::size_t p = 0; p < P; ++p) {
                    wacc += grow[p] * xin[p];
                    gxin[p] += grow[p] * w;
                }
                gw[static_cast<std::size_t>(o) * C + c] += wacc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// conv3x3
// ---------------------------------------------------------------------------

/// 3x3 convolution with zero padding 1. x {C,H,W}, weight {O,C,3,3},
/// bias {O}; output {O, (H-1)/stride+1, (W-1)/stride+1}.
inline Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    if (sx.size() != 3) throw std::invalid_argument("conv3x3: input must be rank 3, got " + shape_str(sx));
    if (sw.size() != 4 || sw[2] != 3 || sw[3] != 3)
        throw std::invalid_argument("conv3x3: weight must be {O,C,3,3}, got " + shape_str(sw));
    if (sw[1] != sx[0])
        throw std::invalid_argument("conv3x3: input " + shape_str(sx) + " does not match weight " + shape_str(sw));
    if (stride < 1) throw std::invalid_argument("conv3x3: stride must be >= 1");
    const int C = sx[0], H = sx[1], W = sx[2], O = sw[0];
    if (bias.shape() != Shape{O})
        throw std::invalid_argument("conv3x3: bias shape " + shape_str(bias.shape()) + " does not match weight");
    const int Ho = (H - 1) / stride + 1;
    const int Wo = (W - 1) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(O) * Ho * Wo);
    const auto& dx = x.data();
    const auto& dw = weight.data();
    const auto& db = bias.data();
    for (int o = 0; o < O; ++o)
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
                double acc = db[static_cast<std::size_t>(o)];
                for (int c = 0; c < C; ++c)
                    for (int ki = 0; ki < 3; ++ki) {
                        const int r = i * stride + ki - 1;
                        if (r < 0 || r >= H) continue;
                        for (int kj = 0; kj < 3; ++kj) {
                            const int q = j * stride + kj - 1;
                            if (q < 0 || q >= W) continue;
                            acc += dw[((static_cast<std::size_t>(o) * C + c) * 3 + ki) * 3 + kj] *
                                   dx[(static_cast<std::size_t>(c) * H + r) * W + q];
                        }
                    }
                out[(static_cast<std::size_t>(o) * Ho + i) * Wo + j] = acc;
            }

    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.node();
    return detail::make_op({O, Ho, Wo}, std::move(out), {x, weight, bias},
                           [xn, wn, bn, O, C, H, W, Ho, Wo, stride](detail::Node& n) {
                               auto& gx = xn->ensure_grad();
                               auto& gw = wn->ensure_grad();
                               auto& gb = bn->ensure_grad();
                               const auto& g = n.grad;
                               for (int o = 0; o < O; ++o)
                                   for (int i = 0; i < Ho; ++i)
                                       for (int j = 0; j < Wo; ++j) {
                                           const double go = g[(static_cast<std::size_t>(o) * Ho + i) * Wo + j];
                                           if (go == 0.0) continue;
                                           gb[static_cast<std::size_t>(o)] += go;
                                           for (int c = 0; c < C; ++c)
                                               for (int ki = 0; ki < 3; ++ki) {
                                                   const int r = i * stride + ki - 1;
                                                   if (r < 0 || r >= H) continue;
                                                   for (int kj = 0; kj < 3; ++kj) {
                                                       const int q = j * stride + kj - 1;
                                                       if (q < 0 || q >= W) continue;
                                                       const std::size_t wi =
                                                           ((static_cast<std::size_t>(o) * C + c) * 3 + ki) * 3 + kj;
                                                       const std::size_t xi =
                                                           (static_cast<std::size_t>(c) * H + r) * W + q;
                                                       gw[wi] += go * xn->data[xi];
                                                       gx[xi] += go * wn->data[wi];
                                                   }
                                               }
                                       }
                           });
}

// ---------------------------------------------------------------------------
// pooling / softmax
// ---------------------------------------------------------------------------

/// Global average pool: {C,H,W} -> {C}.
inline Tensor avg_pool_global(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() != 3) throw std::invalid_argument("avg_pool_global: input must be rank 3, got " + shape_str(s));
    const int C = s[0];
    const std::size_t P = static_cast<std::size_t>(s[1]) * s[2];
    std::vector<double> out(static_cast<std::size_t>(C), 0.0);
    const auto& d = x.data();
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += d[static_cast<std::size_t>(c) * P + p];
        out[static_cast<std::size_t>(c)] = acc / static_cast<double>(P);
    }
    auto xn = x.node();
    return detail::make_op({C}, std::move(out), {x}, [xn, C, P](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        const double inv = 1.0 / static_cast<double>(P);
        for (int c = 0; c < C; ++c) {
            const double g = n.grad[static_cast<std::size_t>(c)] * inv;
            for (std::size_t p = 0; p < P; ++p) gx[static_cast<std::size_t>(c) * P + p] += g;
        }
    });
}

/// Numerically stable softmax along one axis.
inline Tensor softmax(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    const int r = static_cast<int>(s.size());
    if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: axis out of range for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(s[a]);
    for (int a = axis + 1; a < r; ++a) inner *= static_cast<std::size_t>(s[a]);
    const std::size_t K = static_cast<std::size_t>(s[axis]);

    std::vector<double> out(x.size());
    const auto& d = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * K * inner + i;
            double mx = d[base];
            for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, d[base + k * inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                const double e = std::exp(d[base + k * inner] - mx);
                out[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < K; ++k) out[base + k * inner] /= z;
        }
    auto xn = x.node();
    return detail::make_op(s, std::move(out), {x}, [xn, outer, inner, K](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * K * inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < K; ++k) dot += n.grad[base + k * inner] * n.data[base + k * inner];
                for (std::size_t k = 0; k < K; ++k) {
                    const std::size_t at = base + k * inner;
                    gx[at] += n.data[at] * (n.grad[at] - dot);
                }
            }
    });
}

// ---------------------------------------------------------------------------
// bilinear upsample
// ---------------------------------------------------------------------------

/// Bilinear resize of {C,H,W} to {C,Ho,Wo} with half-pixel centers
/// (align_corners = false). Same-size input is an exact identity.
inline Tensor upsample_bilinear(const Tensor& x, int Ho, int Wo) {
    const Shape& s = x.shape();
    if (s.size() != 3) throw std::invalid_argument("upsample_bilinear: input must be rank 3, got " + shape_str(s));
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("upsample_bilinear: target size must be positive");
    const int C = s[0], H = s[1], W = s[2];
    if (Ho == H && Wo == W) {
        auto xn = x.node();
        return detail::make_op(s, x.data(), {x}, [xn](detail::Node& n) {
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
        });
    }

    struct Tap {
        int lo, hi;
        double whi;
    };
    auto taps = [](int out_n, int in_n) {
        std::vector<Tap> t(static_cast<std::size_t>(out_n));
        const double scale = static_cast<double>(in_n) / out_n;
        for (int i = 0; i < out_n; ++i) {
            double src = (i + 0.5) * scale - 0.5;
            src = std::min(std::max(src, 0.0), static_cast<double>(in_n - 1));
            const int lo = static_cast<int>(std::floor(src));
            const int hi = std::min(lo + 1, in_n - 1);
            t[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
        }
        return t;
    };
    const auto th = taps(Ho, H);
    const auto tw = taps(Wo, W);

    std::vector<double> out(static_cast<std::size_t>(C) * Ho * Wo);
    const auto& d = x.data();
    for (int c = 0; c < C; ++c) {
        const double* plane = d.data() + static_cast<std::size_t>(c) * H * W;
        double* oplane = out.data() + static_cast<std::size_t>(c) * Ho * Wo;
        for (int i = 0; i < Ho; ++i) {
            const Tap& a = th[static_cast<std::size_t>(i)];
            for (int j = 0; j < Wo; ++j) {
                const Tap& b = tw[static_cast<std::size_t>(j)];
                const double v00 = plane[a.lo * W + b.lo];
                const double v01 = plane[a.lo * W + b.hi];
                const double v10 = plane[a.hi * W + b.lo];
                const double v11 = plane[a.hi * W + b.hi];
                oplane[i * Wo + j] = (1 - a.whi) * ((1 - b.whi) * v00 + b.whi * v01) +
                                     a.whi * ((1 - b.whi) * v10 + b.whi * v11);
            }
        }
    }
    auto xn = x.node();
    return detail::make_op({C, Ho, Wo}, std::move(out), {x}, [xn, C, H, W, Ho, Wo, th, tw](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (int c = 0; c < C; ++c) {
            double* gplane = gx.data() + static_cast<std::size_t>(c) * H * W;
            const double* goplane = n.grad.data() + static_cast<std::size_t>(c) * Ho * Wo;
            for (int i = 0; i < Ho; ++i) {
                const auto& a = th[static_cast<std::size_t>(i)];
                for (int j = 0; j < Wo; ++j) {
                    const auto& b = tw[static_cast<std::size_t>(j)];
                    const double g = goplane[i * Wo + j];
                    gplane[a.lo * W + b.lo] += g * (1 - a.whi) * (1 - b.whi);
                    gplane[a.lo * W + b.hi] += g * (1 - a.whi) * b.whi;
                    gplane[a.hi * W + b.lo] += g * a.whi * (1 - b.whi);
                    gplane[a.hi * W + b.hi] += g * a.whi * b.whi;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// cross entropy
// ---------------------------------------------------------------------------

constexpr int kIgnoreLabel = 255;

/// Mean cross entropy over non-ignored pixels. logits {K,H,W}, labels
/// {H,W} holding integer class ids as doubles (kIgnoreLabel skips a
/// pixel). If every pixel is ignored the loss is 0 with zero gradient.
inline Tensor cross_entropy(const Tensor& logits, const Tensor& labels) {
    const Shape& sl = logits.shape();
    if (sl.size() != 3) throw std::invalid_argument("cross_entropy: logits must be rank 3, got " + shape_str(sl));
    const int K = sl[0];
    const std::size_t P = static_cast<std::size_t>(sl[1]) * sl[2];
    if (labels.shape() != Shape{sl[1], sl[2]})
        throw std::invalid_argument("cross_entropy: labels " + shape_str(labels.shape()) +
                                    " do not match logits " + shape_str(sl));

    std::vector<int> lab(P);
    for (std::size_t p = 0; p < P; ++p) {
        const double v = labels.data()[p];
        const int li = static_cast<int>(std::llround(v));
        if (static_cast<double>(li) != v)
            throw std::invalid_argument("cross_entropy: labels must hold integer values");
        if (li != kIgnoreLabel && (li < 0 || li >= K))
            throw std::invalid_argument("cross_entropy: label " + std::to_string(li) + " out of range for " +
                                        std::to_string(K) + " classes");
        lab[p] = li;
    }

    const auto& d = logits.data();
    std::vector<double> probs(d.size());
    double loss = 0.0;
    std::size_t valid = 0;
    for (std::size_t p = 0; p < P; ++p) {
        double mx = d[p];
        for (int k = 1; k < K; ++k) mx = std::max(mx, d[static_cast<std::size_t>(k) * P + p]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) {
            const double e = std::exp(d[static_cast<std::size_t>(k) * P + p] - mx);
            probs[static_cast<std::size_t>(k) * P + p] = e;
            z += e;
        }
        for (int k = 0; k < K; ++k) probs[static_cast<std::size_t>(k) * P + p] /= z;
        if (lab[p] == kIgnoreLabel) continue;
        ++valid;
        loss -= std::log(probs[static_cast<std::size_t>(lab[p]) * P + p]);
    }
    if (valid == 0) {
        std::fprintf(stderr, "cross_entropy: every pixel carries the ignore label; loss is 0\n");
        auto ln = logits.node();
        return detail::make_op({1}, {0.0}, {logits}, [ln](detail::Node&) { ln->ensure_grad(); });
    }
    loss /= static_cast<double>(valid);

    auto ln = logits.node();
    return detail::make_op({1}, {loss}, {logits},
                           [ln, probs = std::move(probs), lab = std::move(lab), K, P, valid](detail::Node& n) {
                               auto& gl = ln->ensure_grad();
                               const double g = n.grad[0] / static_cast<double>(valid);
                               for (std::size_t p = 0; p < P; ++p) {
                                   if (lab[p] == kIgnoreLabel) continue;
                                   for (int k = 0; k < K; ++k) {
                                       const std::size_t at = static_cast<std::size_t>(k) * P + p;
                                       gl[at] += g * (probs[at] - (k == lab[p] ? 1.0 : 0.0));
                                   }
                               }
                           });
}

/// Argmax over axis 0 of {K,H,W}; ties go to the smaller class id.
inline std::vector<int> argmax_channels(const Tensor& logits) {
    const Shape& s = logits.shape();
    if (s.size() != 3) throw std::invalid_argument("argmax_channels: input must be rank 3, got " + shape_str(s));
    const int K = s[0];
    const std::size_t P = static_cast<std::size_t>(s[1]) * s[2];
    std::vector<int> out(P, 0);
    const auto& d = logits.data();
    for (std::size_t p = 0; p < P; ++p) {
        double best = d[p];
        for (int k = 1; k < K; ++k) {
            const double v = d[static_cast<std::size_t>(k) * P + p];
            if (v > best) {
                best = v;
                out[p] = k;
            }
        }
    }
    return out;
}

}  // namespace prseg
