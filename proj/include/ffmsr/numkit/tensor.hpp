#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ffmsr/real.hpp"

namespace ffmsr::FFMSR_PRECISION::numkit {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

// One vertex of the recorded computation. Leaves have no parents and no
// backward function; interior nodes own their inputs so the graph stays alive
// as long as the result does.
struct Node {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<Real>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor with optional gradient tracking.
///
/// Copies share the underlying node; values are not modified after creation
/// except through mutable_data() on leaves (initialisation, optimiser steps).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, Real value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<Real> values, bool requires_grad = false);
    static Tensor scalar(Real value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Extent of axis i; negative i counts from the back.
    std::size_t dim(int i) const;
    std::size_t numel() const;

    std::span<const Real> data() const;
    std::span<Real> mutable_data();
    Real item() const;
    Real at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    /// Gradient buffer; empty span when nothing has been accumulated.
    std::span<const Real> grad() const;
    std::span<Real> mutable_grad();
    void zero_grad();

    /// Reverse-mode sweep from this scalar.
    void backward() const;

    /// Same values, cut from the tape.
    Tensor detach() const;

    // Used by op implementations.
    static Tensor make_result(Shape shape, std::vector<Real> values, std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward_fn);
    detail::Node& node() const;
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Leaf with entries drawn from U(-bound, bound).
Tensor uniform_tensor(Shape shape, Real bound, Rng& rng, bool requires_grad = true);
/// Leaf with entries drawn from N(0, stddev^2).
Tensor normal_tensor(Shape shape, Real stddev, Rng& rng, bool requires_grad = true);

/// A parameter tensor together with its stable checkpoint key.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Dropout and gate noise only act when training is set.
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;

    Rng& require_rng() const;
};

}  // namespace ffmsr::FFMSR_PRECISION::numkit
