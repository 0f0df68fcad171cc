#include "ffmsr/numkit/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ffmsr::FFMSR_PRECISION::numkit {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<Real>& detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
}

namespace {

std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<Real> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("tensor: shape " + shape_to_string(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad));
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(new_leaf(std::move(shape), std::vector<Real>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<Real> values, bool requires_grad) {
    return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
    return Tensor(new_leaf(Shape{}, std::vector<Real>{value}, requires_grad));
}

detail::Node& Tensor::node() const {
    if (!node_) throw std::logic_error("tensor: use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(int i) const {
    const auto& s = shape();
    const int r = static_cast<int>(s.size());
    const int idx = i < 0 ? r + i : i;
    if (idx < 0 || idx >= r) {
        throw std::out_of_range("tensor: axis " + std::to_string(i) + " out of range for " +
                                shape_to_string(s));
    }
    return s[static_cast<std::size_t>(idx)];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const Real> Tensor::data() const { return node().data; }

std::span<Real> Tensor::mutable_data() { return node().data; }

Real Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("tensor: item() on tensor of shape " + shape_to_string(shape()));
    }
    return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    auto& n = node();
    if (!n.parents.empty()) throw std::logic_error("tensor: requires_grad can only be set on leaves");
    n.requires_grad = flag;
    if (!flag) n.grad.clear();
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const Real> Tensor::grad() const { return node().grad; }

std::span<Real> Tensor::mutable_grad() { return node().ensure_grad(); }

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::detach() const {
    return Tensor(new_leaf(shape(), node().data, false));
}

Tensor Tensor::make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
    auto node = new_leaf(std::move(shape), std::move(values), false);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) node->parents.push_back(in.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    auto& root = node();
    if (root.data.size() != 1 || !root.shape.empty()) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_to_string(root.shape));
    }
    if (!root.requires_grad) return;

    // Iterative post-order DFS gives a topological order of the tape.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
    seen.insert(&root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // Interior gradients are per-sweep scratch; leaves accumulate.
    for (auto* n : order) {
        if (!n->parents.empty()) n->grad.assign(n->data.size(), Real(0));
    }
    root.ensure_grad()[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
    for (auto* n : order) {
        if (!n->parents.empty()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

Tensor uniform_tensor(Shape shape, Real bound, Rng& rng, bool requires_grad) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<Real>(dist(rng));
    return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

Tensor normal_tensor(Shape shape, Real stddev, Rng& rng, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<Real>(dist(rng));
    return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

Rng& ForwardContext::require_rng() const {
    if (rng == nullptr) throw std::logic_error("forward: training mode needs a random generator");
    return *rng;
}

}  // namespace ffmsr::FFMSR_PRECISION::numkit
