#include "alkd/optimizer.hpp"

#include <cmath>

namespace alkd {

OptimizerState OptimizerState::for_parameters(const std::vector<NamedParameter>& params) {
    OptimizerState s;
    for (const auto& p : params) {
        s.names.push_back(p.name);
        s.m.emplace_back(p.tensor.size(), 0.0);
        s.v.emplace_back(p.tensor.size(), 0.0);
    }
    return s;
}

void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, double lr, double weight_decay) {
    if (state.m.size() != params.size()) {
        throw DimensionError("optimizer tracks " + std::to_string(state.m.size()) + " tensors, model has " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.names[i] != params[i].name || state.m[i].size() != params[i].tensor.size()) {
            throw DimensionError("optimizer state for '" + state.names[i] + "' does not match parameter '" +
                                 params[i].name + "'");
        }
        if (params[i].tensor.has_grad()) require_finite(params[i].tensor.grad(), "gradient of " + params[i].name);
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].tensor;
        auto data = p.data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const double decay = params[i].weight_decay ? lr * weight_decay : 0.0;
        const bool has_grad = p.has_grad();
        std::span<const double> grad = has_grad ? std::span<const double>(p.grad()) : std::span<const double>();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = has_grad ? grad[j] : 0.0;
            m[j] = to_storage(state.beta1 * m[j] + (1.0 - state.beta1) * g);
            v[j] = to_storage(state.beta2 * v[j] + (1.0 - state.beta2) * g * g);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            double x = data[j] * (1.0 - decay);
            x -= lr * mhat / (std::sqrt(vhat) + state.eps);
            data[j] = to_storage(x);
        }
    }
}

double clip_grad_norm(const std::vector<NamedParameter>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto p : params) {
            if (!p.tensor.has_grad()) continue;
            for (auto& g : p.tensor.grad()) g *= f;
        }
    }
    return norm;
}

}  // namespace alkd
