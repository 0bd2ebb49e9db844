#include "wbanet/tensor.hpp"

#include <random>
#include <sstream>
#include <unordered_set>

#include "wbanet/error.hpp"

namespace wbanet {

namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
    for (auto e : shape) {
        if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + shape_str(shape));
    }
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return constant(shape, 0.0, requires_grad);
}

Tensor Tensor::constant(const Shape& shape, double value, bool requires_grad) {
    check_shape(shape);
    return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), value),
                  requires_grad);
}

Tensor Tensor::uniform(const Shape& shape, double lo, double hi, std::uint64_t seed,
                       bool requires_grad) {
    check_shape(shape);
    std::mt19937_64 gen(seed);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    // 53 random mantissa bits; independent of the standard library's distributions.
    for (auto& x : v) x = lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
    return Tensor(shape, std::move(v), requires_grad);
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values, bool requires_grad) {
    return Tensor(shape, std::move(values), requires_grad);
}

detail::Node& Tensor::node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::int64_t Tensor::extent(std::int64_t axis) const {
    const auto& s = shape();
    if (axis < 0) axis += static_cast<std::int64_t>(s.size());
    if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
        throw ShapeError("axis out of range for shape " + shape_str(s));
    }
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node().data.size()); }

std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw ShapeError("index rank does not match " + shape_str(s));
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= s[axis]) throw ShapeError("index out of range for " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node().data[static_cast<std::size_t>(flat)];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool on) {
    if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
    node().requires_grad = on;
}

bool Tensor::is_leaf() const { return node().is_leaf; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return node().grad;
}

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), node().data, false); }

void Tensor::backward() const { wbanet::backward(*this); }

void backward(const Tensor& loss) {
    auto& root = loss.node();
    if (root.data.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(root.shape));
    }
    if (root.consumed) throw ContractError("backward called twice on the same graph");
    if (!root.requires_grad) throw ContractError("loss does not depend on any tensor requiring grad");

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(&root, 0);
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) {
                if (!child->is_leaf && child->consumed) {
                    throw ContractError("graph already consumed by an earlier backward");
                }
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->is_leaf && n->backward_fn) n->backward_fn(*n);
    }

    for (detail::Node* n : order) {
        if (n->is_leaf) continue;
        n->backward_fn = nullptr;
        n->inputs.clear();
        n->grad.clear();
        n->grad.shrink_to_fit();
        n->consumed = true;
    }
    root.consumed = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   const char* op, std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->is_leaf = false;
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace wbanet
