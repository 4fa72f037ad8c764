#ifndef PROMPTREC_OPTIMIZER_HPP
#define PROMPTREC_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "promptrec/common.hpp"
#include "promptrec/gemma.hpp"

namespace promptrec {

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment accumulators, parallel to the parameter list they were
// first stepped with. One state object per training run.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<NamedParam>& params, double max_norm) {
    double total2 = 0.0;
    for (NamedParam& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) total2 += g * g;
    }
    const double total = std::sqrt(total2);
    if (total > max_norm && total > 0.0) {
        const double s = max_norm / total;
        for (NamedParam& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (double& g : p.tensor.grad()) g *= s;
        }
    }
    return total;
}

// Adaptive-moment update with bias correction. A non-finite gradient aborts
// with the offending parameter's name.
inline void optimizer_step(std::vector<NamedParam>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].tensor.numel(), 0.0);
            state.v[i].assign(params[i].tensor.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("optimizer_step: state tracks " + std::to_string(state.m.size()) +
                                    " parameters but got " + std::to_string(params.size()));
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].tensor;
        if (!w.has_grad()) continue;  // parameter untouched by this loss
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < w.numel(); ++j) {
            const double g = w.grad()[j];
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient in parameter '" + params[i].name + "' at element " +
                                   std::to_string(j));
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w.data()[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

}  // namespace promptrec

#endif
