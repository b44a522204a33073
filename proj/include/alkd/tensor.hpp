#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alkd {

class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

/// Raised when a primitive produces NaN/Inf or training diverges.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Global numeric settings
// ----------------------------------------------------------------------------

enum class Precision { f32, f64 };

/// Process-wide numeric mode. In f32 mode every primitive rounds its outputs
/// to the nearest float, so stored values are exactly representable in the
/// 32-bit checkpoint format. f64 mode is used by gradient checks.
struct Numerics {
    Precision precision = Precision::f32;
    bool deterministic = true;
#ifdef NDEBUG
    bool check_finite = false;
#else
    bool check_finite = true;
#endif
    int threads = 1;
};

Numerics& numerics();

/// Restores the previous numeric settings on destruction.
class NumericsScope {
   public:
    explicit NumericsScope(Numerics settings) : saved_(numerics()) { numerics() = settings; }
    NumericsScope(const NumericsScope&) = delete;
    NumericsScope& operator=(const NumericsScope&) = delete;
    ~NumericsScope() { numerics() = saved_; }

   private:
    Numerics saved_;
};

/// Rounds to float when in f32 mode; identity in f64 mode.
inline double to_storage(double v) {
    return numerics().precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// ----------------------------------------------------------------------------
// Tensor
// ----------------------------------------------------------------------------

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Shared handle to a row-major array with an optional gradient buffer.
/// Copies alias the same storage; use clone() for a deep copy.
class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t axis) const;

    // Handle semantics: a const Tensor still refers to mutable storage.
    std::span<double> data() const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<double> grad() const;
    void zero_grad() const;

    Tensor clone() const;
    bool same(const Tensor& other) const { return impl_ == other.impl_; }

   private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<Impl> impl_;
};

// ----------------------------------------------------------------------------
// Tape
// ----------------------------------------------------------------------------

/// Ordered record of executed primitives. Each entry owns a closure that
/// reads the output gradient and accumulates into the inputs' gradients.
class Tape {
   public:
    using Backward = std::function<void()>;

    /// Rounds `output` to storage precision, validates finiteness when enabled,
    /// and records the node if any input requires a gradient. The output's
    /// requires_grad flag is set accordingly.
    void record(const char* op, std::vector<Tensor> inputs, Tensor& output, Backward backward);

    /// Seeds d(root)/d(root) = 1 and runs recorded closures in reverse order.
    /// Intermediate gradients are reset first, so leaf gradients accumulate
    /// across repeated calls.
    void backward(Tensor& root);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

   private:
    struct Node {
        const char* op;
        std::vector<Tensor> inputs;
        Tensor output;
        Backward backward;
    };
    std::vector<Node> nodes_;
};

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

}  // namespace alkd
