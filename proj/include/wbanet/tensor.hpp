#pragma once

// Dense row-major float64 tensor with tape-free, dynamic reverse-mode autodiff.
//
// Every differentiable op produces a node that keeps shared ownership of its
// inputs and a closure that maps the output gradient back onto them. The graph
// is therefore implicit in the node links; backward() recovers a topological
// order from the loss, visits each node exactly once in reverse, and then
// consumes the graph (closures and saved activations are released).
//
// Feature maps use axis order (H, W, C); token matrices are (H*W, C).

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wbanet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Throws ShapeError unless every extent is >= 1.
void check_shape(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until something is accumulated
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor constant(const Shape& shape, double value, bool requires_grad = false);
    /// Uniform on [lo, hi); bitwise reproducible for a fixed seed.
    static Tensor uniform(const Shape& shape, double lo, double hi, std::uint64_t seed,
                          bool requires_grad = false);
    static Tensor from_values(const Shape& shape, std::vector<double> values,
                              bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
    std::int64_t extent(std::int64_t axis) const;
    std::int64_t numel() const;

    std::span<const double> data() const;
    /// Writable view. Intended for leaves (optimizers, finite-difference probes).
    std::span<double> mutable_data();
    double operator[](std::size_t i) const { return data()[i]; }
    double at(std::initializer_list<std::int64_t> index) const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Copy of the values as a new leaf that is disconnected from the graph.
    Tensor detach() const;

    void backward() const;

    detail::Node& node() const;
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a scalar loss into every reachable leaf
/// with requires_grad. Leaf gradients accumulate across calls; the graph behind
/// the loss is consumed, so a second call on the same graph throws ContractError.
void backward(const Tensor& loss);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Builds an op result. If recording is enabled and any input requires grad,
/// the result becomes a graph node whose backward_fn reads node.grad and
/// accumulates into node.inputs (same order as `inputs`).
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   const char* op, std::function<void(detail::Node&)> backward_fn);

/// Independent stream seed from a base seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace wbanet
