#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "canine/nn.hpp"

namespace canine {

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        int64_t components_checked = 0;
    };
    std::vector<Entry> entries;
    double max_rel_err = 0.0;

    bool passed(double tol) const { return max_rel_err <= tol; }
};

struct GradCheckOptions {
    double step = 1e-4;
    // < 0 checks every component; otherwise a deterministic subsample per parameter
    int64_t max_components_per_param = -1;
    uint64_t sample_seed = 17;
    // relative-error floor: tiny gradients are compared at this scale
    double denom_floor = 1e-3;
};

// Central-difference comparison for every parameter the computation touches.
// f must be deterministic and must read parameters through the ModelCtx.
inline GradCheckReport grad_check(const std::function<Var(ModelCtx&)>& f, ParamStore& params,
                                  GradCheckOptions opt = {}) {
    GradCheckReport report;

    Tape tape;
    ModelCtx ctx(tape, params, true);
    Var loss = f(ctx);
    if (loss.val().numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    tape.backward(loss);
    std::map<std::string, Tensor> analytic = ctx.collect_grads();

    auto eval = [&]() {
        Tape t2;
        ModelCtx c2(t2, params, false);
        return f(c2).val().data[0];
    };

    for (const auto& [name, ga] : analytic) {
        Tensor& p = params.at(name);
        std::vector<int64_t> comps;
        if (opt.max_components_per_param < 0 || p.numel() <= opt.max_components_per_param) {
            comps.resize(static_cast<size_t>(p.numel()));
            for (int64_t i = 0; i < p.numel(); ++i) comps[static_cast<size_t>(i)] = i;
        } else {
            Rng rng(opt.sample_seed ^ fnv1a64(name));
            for (int64_t i = 0; i < opt.max_components_per_param; ++i)
                comps.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(p.numel()))));
            std::sort(comps.begin(), comps.end());
            comps.erase(std::unique(comps.begin(), comps.end()), comps.end());
        }
        GradCheckReport::Entry entry;
        entry.name = name;
        entry.components_checked = static_cast<int64_t>(comps.size());
        for (int64_t i : comps) {
            double saved = p.at(i);
            p.at(i) = saved + opt.step;
            double fp = eval();
            p.at(i) = saved - opt.step;
            double fm = eval();
            p.at(i) = saved;
            double numeric = (fp - fm) / (2.0 * opt.step);
            double a = ga.at(i);
            double denom = std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
            double rel = std::abs(a - numeric) / denom;
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace canine
