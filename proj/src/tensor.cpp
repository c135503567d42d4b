#include "lczlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lczlab/error.hpp"

namespace lcz {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : Tensor(Shape{1}) {}

Tensor::Tensor(Shape shape, Real fill) : node_(std::make_shared<detail::TensorNode>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : node_(std::make_shared<detail::TensorNode>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                             " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{1}, value); }

Tensor Tensor::ones_like(const Tensor& other) { return Tensor(other.shape(), Real(1)); }

Real Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
    return *this;
}

std::span<Real> Tensor::grad() {
    if (!has_grad()) throw StateError("tensor has no gradient buffer");
    return node_->grad;
}

std::span<const Real> Tensor::grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient buffer");
    return node_->grad;
}

std::span<Real> Tensor::ensure_grad() const {
    if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), Real(0));
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

void Tensor::drop_grad() {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data); }

bool Tensor::all_finite() const {
    return std::all_of(node_->data.begin(), node_->data.end(), [](Real v) { return std::isfinite(v); });
}

void Tape::record(BackwardFn fn) {
    if (consumed_) throw StateError("cannot record on a tape that has already been replayed");
    entries_.push_back(std::move(fn));
}

void Tape::backward(Tensor& root) {
    if (consumed_) throw StateError("tape has already been replayed");
    if (root.numel() != 1) throw DimensionError("backward root must be a scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad()) throw StateError("backward root does not require grad");
    auto g = root.ensure_grad();
    g[0] = Real(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    consumed_ = true;
    entries_.clear();
}

void Tape::clear() {
    entries_.clear();
    consumed_ = false;
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) noexcept : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() noexcept : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor ParameterSet::add_parameter(std::string name, Tensor initial) {
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->tensor = std::move(initial);
    p->tensor.set_requires_grad(true);
    p->adam_m.assign(p->tensor.numel(), Real(0));
    p->adam_v.assign(p->tensor.numel(), Real(0));
    Tensor handle = p->tensor;
    params_.items.push_back(std::move(p));
    return handle;
}

Tensor ParameterSet::add_buffer(std::string name, Tensor initial) {
    auto b = std::make_unique<Buffer>();
    b->name = std::move(name);
    b->tensor = std::move(initial);
    Tensor handle = b->tensor;
    buffers_.items.push_back(std::move(b));
    return handle;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_.items) n += p->tensor.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_.items) p->tensor.zero_grad();
}

std::vector<Real> ParameterSet::snapshot() const {
    std::vector<Real> out;
    for (const auto& p : params_.items) out.insert(out.end(), p->tensor.data().begin(), p->tensor.data().end());
    for (const auto& b : buffers_.items) out.insert(out.end(), b->tensor.data().begin(), b->tensor.data().end());
    return out;
}

void ParameterSet::restore(std::span<const Real> values) {
    std::size_t expected = 0;
    for (const auto& p : params_.items) expected += p->tensor.numel();
    for (const auto& b : buffers_.items) expected += b->tensor.numel();
    if (values.size() != expected) {
        throw DimensionError("snapshot holds " + std::to_string(values.size()) + " values, network needs " +
                             std::to_string(expected));
    }
    std::size_t off = 0;
    auto copy_into = [&](Tensor& t) {
        auto d = t.data();
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), d.size(), d.begin());
        off += d.size();
    };
    for (auto& p : params_.items) copy_into(p->tensor);
    for (auto& b : buffers_.items) copy_into(b->tensor);
}

}  // namespace lcz
