#pragma once

#include <random>

#include "alkd/rng.hpp"
#include "alkd/tensor.hpp"

namespace testing_util {

inline alkd::Tensor randn(alkd::Shape shape, alkd::Rng& rng, double scale = 1.0, bool requires_grad = true) {
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> v(alkd::shape_size(shape));
    for (auto& x : v) x = n(rng);
    return alkd::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> randv(std::size_t n, alkd::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace testing_util
