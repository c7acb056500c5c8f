#pragma once

#include <cstdint>
#include <vector>

#include "prseg/nn.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

/// Streaming confusion counts; IoU accumulates over a whole dataset
/// before the mean is taken. Pixels labeled with the ignore value do not
/// count anywhere.
class SegScorer {
public:
    explicit SegScorer(int num_classes)
        : k_(num_classes),
          tp_(static_cast<std::size_t>(num_classes), 0),
          fp_(static_cast<std::size_t>(num_classes), 0),
          fn_(static_cast<std::size_t>(num_classes), 0) {
        if (num_classes < 1) throw std::invalid_argument("SegScorer: need at least one class");
    }

    void add(const std::vector<int>& pred, const Tensor& gt) {
        const auto& g = gt.data();
        if (pred.size() != g.size()) throw std::invalid_argument("SegScorer: prediction/label size mismatch");
        for (std::size_t i = 0; i < g.size(); ++i) {
            const int y = static_cast<int>(g[i]);
            if (y == kIgnoreLabel) continue;
            if (y < 0 || y >= k_) throw std::invalid_argument("SegScorer: label out of range");
            const int p = pred[i];
            if (p < 0 || p >= k_) throw std::invalid_argument("SegScorer: prediction out of range");
            ++total_;
            if (p == y) {
                ++correct_;
                ++tp_[static_cast<std::size_t>(y)];
            } else {
                ++fp_[static_cast<std::size_t>(p)];
                ++fn_[static_cast<std::size_t>(y)];
            }
        }
    }

    void add_counts(int cls, std::int64_t tp, std::int64_t fp, std::int64_t fn) {
        tp_.at(static_cast<std::size_t>(cls)) += tp;
        fp_.at(static_cast<std::size_t>(cls)) += fp;
        fn_.at(static_cast<std::size_t>(cls)) += fn;
        correct_ += tp;
        total_ += tp + fn;
    }

    /// IoU per class; classes absent from both prediction and ground
    /// truth come back as -1 and are skipped by the mean.
    std::vector<double> per_class_iou() const {
        std::vector<double> iou(static_cast<std::size_t>(k_), -1.0);
        for (int c = 0; c < k_; ++c) {
            const std::size_t i = static_cast<std::size_t>(c);
            const std::int64_t denom = tp_[i] + fp_[i] + fn_[i];
            if (denom > 0) iou[i] = static_cast<double>(tp_[i]) / static_cast<double>(denom);
        }
        return iou;
    }

    double miou() const {
        const auto iou = per_class_iou();
        double acc = 0.0;
        int present = 0;
        for (double v : iou)
            if (v >= 0.0) {
                acc += v;
                ++present;
            }
        return present ? acc / present : 0.0;
    }

    double pixel_accuracy() const {
        return total_ ? static_cast<double>(correct_) / static_cast<double>(total_) : 0.0;
    }

private:
    int k_;
    std::vector<std::int64_t> tp_, fp_, fn_;
    std::int64_t correct_ = 0;
    std::int64_t total_ = 0;
};

/// One logged training step. Wall-clock lives only in the run summary's
/// timing side channel so the metrics stream stays byte-reproducible.
struct MetricsRecord {
    int step = 0;
    double loss_ce = 0.0;
    double loss_reg = 0.0;
    double loss_total = 0.0;
    std::vector<double> block_fractions;
    double miou = -1.0;        // -1 when no eval ran at this step
    double pixel_acc = -1.0;
    double wall_clock = 0.0;   // seconds since run start; not serialized
};

}  // namespace prseg
