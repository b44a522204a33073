#include "alkd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace alkd {

Numerics& numerics() {
    static Numerics settings;
    return settings;
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void require_finite(std::span<const double> values, const std::string& what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError("non-finite value at index " + std::to_string(i) + " in " + what);
        }
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto impl = std::make_shared<Impl>();
    impl->data.assign(shape_size(shape), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
    static const Shape empty;
    return impl_ ? impl_->shape : empty;
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
    }
    return impl_->shape[axis];
}

std::span<double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<double> Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() const {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<Impl>(*impl_);
    return Tensor(std::move(impl));
}

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor& output, Backward backward) {
    if (numerics().precision == Precision::f32) {
        for (auto& v : output.data()) v = static_cast<double>(static_cast<float>(v));
    }
    if (numerics().check_finite) require_finite(output.data(), op);
    const bool needs_grad = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    output.set_requires_grad(needs_grad);
    if (needs_grad) nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(Tensor& root) {
    if (!root.defined() || root.rank() != 0) {
        throw ContractError("backward() requires a scalar root, got shape " + shape_str(root.shape()));
    }
    for (auto& node : nodes_) node.output.zero_grad();
    root.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output.has_grad()) it->backward();
    }
}

}  // namespace alkd
