#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lcz {

// The engine is built in single precision. The float64 build exists so that
// finite-difference gradient checks are not dominated by rounding noise.
#ifdef LCZLAB_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { train, infer };

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major tensor with shared-handle semantics: copies alias the same
/// storage, `clone()` makes an independent copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, Real fill = Real(0));
    Tensor(Shape shape, std::vector<Real> values);

    static Tensor scalar(Real value);
    static Tensor ones_like(const Tensor& other);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<Real> data() { return node_->data; }
    std::span<const Real> data() const { return node_->data; }
    Real& operator[](std::size_t i) { return node_->data[i]; }
    Real operator[](std::size_t i) const { return node_->data[i]; }
    Real item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on);

    bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->grad.empty(); }
    std::span<Real> grad();
    std::span<const Real> grad() const;
    /// Allocates a zeroed gradient buffer if absent. Const because a Tensor
    /// is a handle; the buffer lives in the shared node.
    std::span<Real> ensure_grad() const;
    void zero_grad();
    void drop_grad();

    Tensor clone() const;
    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }
    bool all_finite() const;

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of differentiable operations. Operations executed while a
/// tape is active (see TapeScope) and touching a tensor that requires grad
/// append their backward rule here.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(BackwardFn fn);
    std::size_t size() const noexcept { return entries_.size(); }
    bool consumed() const noexcept { return consumed_; }

    /// Seeds d(root)/d(root) = 1 and replays the recorded rules newest first.
    /// `root` must be a scalar produced on this tape. A tape can be replayed once.
    void backward(Tensor& root);
    void clear();

    static Tape* active() noexcept;

private:
    friend class TapeScope;
    std::vector<BackwardFn> entries_;
    bool consumed_ = false;
};

class TapeScope {
public:
    explicit TapeScope(Tape& tape) noexcept;
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Disables recording for its lifetime.
class NoGradScope {
public:
    NoGradScope() noexcept;
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

/// Trainable tensor plus its Adam moment estimates.
struct Parameter {
    std::string name;
    Tensor tensor;
    std::vector<Real> adam_m;
    std::vector<Real> adam_v;
    std::int64_t step_count = 0;
};

/// Non-trainable persistent state (batch-norm running statistics).
struct Buffer {
    std::string name;
    Tensor tensor;
};

/// Owns every parameter and buffer of a network in registration order.
/// Addresses stay stable for the lifetime of the set.
class ParameterSet {
public:
    Tensor add_parameter(std::string name, Tensor initial);
    Tensor add_buffer(std::string name, Tensor initial);

    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::size_t scalar_count() const;
    Parameter& parameter(std::size_t i) { return params_.at(i); }
    const Parameter& parameter(std::size_t i) const { return params_.at(i); }
    std::size_t buffer_count() const noexcept { return buffers_.size(); }
    Buffer& buffer(std::size_t i) { return buffers_.at(i); }
    const Buffer& buffer(std::size_t i) const { return buffers_.at(i); }

    void zero_grad();

    /// Parameters then buffers, flattened in registration order.
    std::vector<Real> snapshot() const;
    void restore(std::span<const Real> values);

private:
    struct ParamList {
        std::vector<std::unique_ptr<Parameter>> items;
        Parameter& at(std::size_t i) { return *items.at(i); }
        const Parameter& at(std::size_t i) const { return *items.at(i); }
        std::size_t size() const noexcept { return items.size(); }
    } params_;
    struct BufferList {
        std::vector<std::unique_ptr<Buffer>> items;
        Buffer& at(std::size_t i) { return *items.at(i); }
        const Buffer& at(std::size_t i) const { return *items.at(i); }
        std::size_t size() const noexcept { return items.size(); }
    } buffers_;
};

}  // namespace lcz
