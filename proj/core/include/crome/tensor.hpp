// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode autodiff over dense row-major tensors.
// Double precision throughout; graphs are rebuilt per forward pass and only
// recorded where a gradient can actually flow.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crome/error.hpp"
#include "crome/rng.hpp"

namespace crome {

using Scalar = double;
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;  // empty until needed, then numel() zeros
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Pulls this node's grad into the parents' grads. Empty for leaves.
    std::function<void(TensorNode&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    std::vector<Scalar>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<Scalar> values,
                       bool requires_grad = false);
    static Tensor scalar(Scalar v);
    // Elements ~ N(0, std^2).
    static Tensor randn(Shape shape, Rng& rng, Scalar std_dev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    // 2D helpers.
    int64_t rows() const;
    int64_t cols() const;

    const std::vector<Scalar>& values() const { return node_->value; }
    std::vector<Scalar>& values() { return node_->value; }
    const std::vector<Scalar>& grad() const { return node_->grad; }
    std::vector<Scalar>& ensure_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    void zero_grad() { node_->grad.clear(); }

    Scalar item() const;

    detail::TensorNode* node() const { return node_.get(); }
    std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::TensorNode> n)
        : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar c);

// [n,k] x [k,p] -> [n,p]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);

// Rows of the trailing dimension each sum to 1; max-subtracted for stability.
Tensor softmax_rows(const Tensor& x);

// gain/bias are 1D of length cols(x).
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 Scalar eps = 1e-5);

// table [V,d], ids -> [len(ids), d]
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int64_t start, int64_t count);
Tensor slice_cols(const Tensor& x, int64_t start, int64_t count);

// Adds -1e30 above the diagonal of a square score matrix (pre-softmax).
Tensor causal_mask_apply(const Tensor& scores);

// Mean NLL over mask-selected positions; targets[t] is the token that the
// logits at row t should predict.
Tensor cross_entropy_next_token(const Tensor& logits,
                                const std::vector<int>& targets,
                                const std::vector<uint8_t>& mask);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Populates grads on every requires_grad leaf reachable from loss.
// Accumulates across calls until grads are cleared.
void backward(const Tensor& loss);

// Central-difference gradient check of a scalar-valued function of one
// tensor. Returns the worst relative error over all input elements, with
// denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor input,
                  double eps = 1e-5);

}  // namespace crome
