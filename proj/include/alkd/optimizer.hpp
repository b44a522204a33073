#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alkd/model.hpp"

namespace alkd {

/// AdamW moments and step counter, aligned with a parameter list by name.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static OptimizerState for_parameters(const std::vector<NamedParameter>& params);
    bool operator==(const OptimizerState&) const = default;
};

/// One decoupled-weight-decay Adam update with bias correction. Parameters
/// flagged weight_decay=false (biases, layer-norm gains) are not decayed.
/// Throws NumericError naming the tensor if a gradient is non-finite.
void adamw_step(const std::vector<NamedParameter>& params, OptimizerState& state, double lr, double weight_decay);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParameter>& params, double max_norm);

}  // namespace alkd
