#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "prseg/rng.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

enum class ShapeFamily { rectangles, stripes, blobs };

inline ShapeFamily family_from_name(const std::string& s) {
    if (s == "rectangles") return ShapeFamily::rectangles;
    if (s == "stripes") return ShapeFamily::stripes;
    if (s == "blobs") return ShapeFamily::blobs;
    throw std::invalid_argument("unknown shape family '" + s + "' (expected rectangles, stripes or blobs)");
}

inline std::string family_name(ShapeFamily f) {
    switch (f) {
        case ShapeFamily::rectangles: return "rectangles";
        case ShapeFamily::stripes: return "stripes";
        case ShapeFamily::blobs: return "blobs";
    }
    throw std::logic_error("unknown shape family");
}

struct SyntheticTask {
    std::uint64_t seed = 0;
    int num_images = 32;
    int height = 64;
    int width = 64;
    int num_classes = 4;
    ShapeFamily family = ShapeFamily::stripes;
    double noise_std = 0.0;
};

struct Sample {
    Tensor image;  // {3,h,w}
    Tensor label;  // {h,w}, integer class ids
};

// Rectangles and blobs are intensity-coded: every class has its own mean
// brightness, so a per-pixel classifier can solve them once the noise is
// low. Stripes are phase-coded: bands cycle through the classes while
// their brightness level repeats every two classes, so a band's level
// pins the class only down to a pair and the next band's level is needed
// to break the tie. That tie lives one band away, which is out of reach
// of a per-pixel decoder and inside reach of the patch rotation.

inline int stripe_levels(int num_classes) { return std::max(2, (num_classes + 1) / 2); }

/// With two classes the pairing would collapse both onto one level, so
/// that case falls back to one level per class.
inline int stripe_level_of(int cls, int num_classes) { return num_classes == 2 ? cls : cls / 2; }

inline int stripe_thickness(const SyntheticTask& task) {
    return std::max(2, std::min(32, std::min(task.height, task.width) / 4));
}

namespace detail {

inline void paint_rect(std::vector<double>& label, int w, int r0, int c0, int r1, int c1, int cls) {
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) label[static_cast<std::size_t>(r) * w + c] = cls;
}

}  // namespace detail

inline Sample generate_sample(const SyntheticTask& task, int index) {
    if (task.num_classes < 2) throw std::invalid_argument("synthetic task: need at least two classes");
    const int h = task.height, w = task.width, K = task.num_classes;
    Rng rng = seeded(mix(task.seed, static_cast<std::uint64_t>(index)));

    std::vector<double> label(static_cast<std::size_t>(h) * w, 0.0);
    switch (task.family) {
        case ShapeFamily::rectangles: {
            const int bg = index % K;
            std::fill(label.begin(), label.end(), static_cast<double>(bg));
            for (int j = 0; j < 3; ++j) {
                const int cls = (bg + 1 + j) % K;
                const int rh = uniform_int(rng, h / 8, h / 2);
                const int rw = uniform_int(rng, w / 8, w / 2);
                const int r0 = uniform_int(rng, 0, h - rh);
                const int c0 = uniform_int(rng, 0, w - rw);
                detail::paint_rect(label, w, r0, c0, r0 + rh, c0 + rw, cls);
            }
            break;
        }
        case ShapeFamily::stripes: {
            const int t = stripe_thickness(task);
            const bool horizontal = uniform_int(rng, 0, 1) == 0;
            const int phase = uniform_int(rng, 0, K * t - 1);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    const int coord = horizontal ? r : c;
                    label[static_cast<std::size_t>(r) * w + c] = ((coord + phase) / t) % K;
                }
            break;
        }
        case ShapeFamily::blobs: {
            const int bg = index % K;
            std::fill(label.begin(), label.end(), static_cast<double>(bg));
            for (int j = 0; j < 3; ++j) {
                const int cls = (bg + 1 + j) % K;
                const int cr = uniform_int(rng, 0, h - 1);
                const int cc = uniform_int(rng, 0, w - 1);
                const int ra = uniform_int(rng, h / 8, h / 4);
                const int rb = uniform_int(rng, w / 8, w / 4);
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < w; ++c) {
                        const double dr = static_cast<double>(r - cr) / ra;
                        const double dc = static_cast<double>(c - cc) / rb;
                        if (dr * dr + dc * dc <= 1.0) label[static_cast<std::size_t>(r) * w + c] = cls;
                    }
            }
            break;
        }
    }

    // class (or stripe level) -> mean brightness, kept >= 2 sigma apart
    const bool phase_coded = task.family == ShapeFamily::stripes;
    const int levels = phase_coded ? stripe_levels(K) : K;
    const double sep = std::max(2.0 * task.noise_std, phase_coded ? 1.0 : 0.5);
    std::vector<double> signal(label.size());
    for (std::size_t i = 0; i < label.size(); ++i) {
        const int cls = static_cast<int>(label[i]);
        const int v = phase_coded ? stripe_level_of(cls, K) : cls;
        signal[i] = (v - (levels - 1) / 2.0) * sep;
    }

    const double gains[3] = {1.0, 0.8, 1.2};
    std::vector<double> image(3 * label.size());
    for (int ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < label.size(); ++i) {
            double v = gains[ch] * signal[i];
            if (task.noise_std > 0.0) v += task.noise_std * normal(rng);
            image[static_cast<std::size_t>(ch) * label.size() + i] = v;
        }

    Sample s;
    s.image = Tensor::from_data({3, h, w}, std::move(image));
    s.label = Tensor::from_data({h, w}, std::move(label));
    return s;
}

inline std::vector<Sample> generate_dataset(const SyntheticTask& task) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(task.num_images));
    for (int i = 0; i < task.num_images; ++i) out.push_back(generate_sample(task, i));
    return out;
}

}  // namespace prseg
