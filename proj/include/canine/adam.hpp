#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "canine/param_store.hpp"

namespace canine {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables global-norm clipping
};

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& param)
        : std::runtime_error("non-finite gradient in parameter '" + param + "'"), parameter(param) {}
    std::string parameter;
};

// First/second-moment adaptive update with bias correction. Deterministic:
// parameters are visited in name order.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return t_; }

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads) {
        step(params, grads, cfg_.lr);
    }

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
        for (const auto& [name, g] : grads) {
            for (double v : g.data)
                if (!std::isfinite(v)) throw NonFiniteGradient(name);
        }
        double scale = 1.0;
        if (cfg_.clip_norm > 0.0) {
            double sq = 0.0;
            for (const auto& [name, g] : grads)
                for (double v : g.data) sq += v * v;
            double norm = std::sqrt(sq);
            if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
        }
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            Tensor& p = params.at(name);
            require_same_shape(p, g, "adam");
            Tensor& m = state(m_, name, p.shape);
            Tensor& v = state(v_, name, p.shape);
            for (int64_t i = 0; i < p.numel(); ++i) {
                double gi = g.at(i) * scale;
                m.at(i) = cfg_.beta1 * m.at(i) + (1.0 - cfg_.beta1) * gi;
                v.at(i) = cfg_.beta2 * v.at(i) + (1.0 - cfg_.beta2) * gi * gi;
                double mhat = m.at(i) / bc1;
                double vhat = v.at(i) / bc2;
                p.at(i) -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    Tensor& state(std::map<std::string, Tensor>& store, const std::string& name,
                  const std::vector<int64_t>& shape) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor::zeros(shape)).first;
        return it->second;
    }

    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// linear warmup then linear decay to zero
inline double lr_schedule(double base_lr, int64_t step, int64_t total_steps, double warmup_frac) {
    if (total_steps <= 0) return base_lr;
    auto warmup = static_cast<int64_t>(std::ceil(warmup_frac * static_cast<double>(total_steps)));
    if (warmup > 0 && step < warmup)
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (total_steps == warmup) return base_lr;
    double remain = static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
    return base_lr * std::max(0.0, remain);
}

}  // namespace canine
