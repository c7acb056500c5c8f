#pragma once

#include <cmath>
#include <vector>

#include "prseg/model.hpp"
#include "prseg/tensor.hpp"

namespace prseg {

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int total_steps = 0;  // 0 disables the polynomial decay
    double power = 0.9;
};

/// SGD with momentum, decoupled-from-nothing weight decay added to the
/// raw gradient, and polynomial learning-rate decay:
///   v <- momentum*v + (grad + wd*param); param <- param - lr_t*v
/// with lr_t = lr * (1 - step/total)^power.
class Sgd {
public:
    Sgd() = default;
    Sgd(SgdConfig cfg, const NamedParams& params) : cfg_(cfg) {
        velocity_.reserve(params.size());
        for (const auto& [name, t] : params) velocity_.emplace_back(t.size(), 0.0);
    }

    double lr_at(int step) const {
        if (cfg_.total_steps <= 0) return cfg_.lr;
        const double frac = std::min(1.0, static_cast<double>(step) / cfg_.total_steps);
        return cfg_.lr * std::pow(1.0 - frac, cfg_.power);
    }

    int step_count() const { return step_; }
    void set_step_count(int s) { step_ = s; }
    const SgdConfig& config() const { return cfg_; }

    std::vector<std::vector<double>>& velocity() { return velocity_; }
    const std::vector<std::vector<double>>& velocity() const { return velocity_; }

    /// Consumes the accumulated gradients and zeroes them.
    void step(NamedParams& params) {
        if (params.size() != velocity_.size())
            throw std::invalid_argument("sgd: parameter list does not match optimizer state");
        const double lr_t = lr_at(step_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& t = params[i].second;
            auto& v = velocity_[i];
            auto& p = t.mutable_data();
            const auto& g = t.grad();
            if (v.size() != p.size()) throw std::invalid_argument("sgd: stale velocity buffer for " + params[i].first);
            for (std::size_t k = 0; k < p.size(); ++k) {
                v[k] = cfg_.momentum * v[k] + (g[k] + cfg_.weight_decay * p[k]);
                p[k] -= lr_t * v[k];
            }
            t.zero_grad();
        }
        ++step_;
    }

private:
    SgdConfig cfg_;
    std::vector<std::vector<double>> velocity_;
    int step_ = 0;
};

}  // namespace prseg
