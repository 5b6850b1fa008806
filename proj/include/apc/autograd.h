// Copyright 2026 The apcspeech Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef APC_AUTOGRAD_H_
#define APC_AUTOGRAD_H_

// Reverse-mode automatic differentiation over Tensor<T>.
//
// Every op builds a Node holding its forward value and a closure that pushes
// the node's gradient into its parents. Backward() walks the reachable graph
// once in reverse topological order. Leaves (parameters) accumulate gradients
// across calls until ZeroGrad(); interior gradients are reset on every call.
//
// All ops are templated on the scalar type. float is used for training,
// double for finite-difference verification.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "apc/tensor.h"

namespace apc {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand; same shape as value
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool leaf = true;

  Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  ~Node();

  Tensor<T>& Grad();
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  // A trainable leaf. Its gradient buffer starts at zero.
  static Var Param(Tensor<T> value);
  static Var Constant(Tensor<T> value);

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->Grad(); }
  Tensor<T>& mutable_grad() { return node_->Grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  // Scalar value of a one-element Var.
  T item() const;

  void ZeroGrad();
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Backpropagates d(root)/d(.) into every reachable leaf. root must hold a
// single element.
template <typename T>
void Backward(const Var<T>& root);

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> Matmul(const Var<T>& a, const Var<T>& b);
// a * b^T without materializing the transpose.
template <typename T>
Var<T> MatmulNT(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Transpose(const Var<T>& a);

// ---- elementwise ----------------------------------------------------------

enum class ElementwiseOp { kAdd, kSub, kMul, kSigmoid, kTanh, kGelu, kRelu, kAbs };

// Generic entry point. Binary ops take two operands, unary ops take one.
template <typename T>
Var<T> Elementwise(ElementwiseOp op, std::span<const Var<T>> operands);

// Binary ops broadcast singleton axes: shapes must have equal rank and each
// axis must agree or be 1 on one side. A one-element operand broadcasts
// against anything.
template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> Sigmoid(const Var<T>& x);
template <typename T>
Var<T> Tanh(const Var<T>& x);
// x * Phi(x) with Phi the standard normal CDF (erf form).
template <typename T>
Var<T> Gelu(const Var<T>& x);
template <typename T>
Var<T> Relu(const Var<T>& x);
// Subgradient 0 at x == 0.
template <typename T>
Var<T> Abs(const Var<T>& x);
template <typename T>
Var<T> Exp(const Var<T>& x);
template <typename T>
Var<T> Log(const Var<T>& x);
template <typename T>
Var<T> Scale(const Var<T>& x, T factor);
template <typename T>
Var<T> AddScalar(const Var<T>& x, T offset);

// Zeroes a fraction `rate` of entries and rescales the rest by 1/(1-rate).
// Identity when rate == 0.
template <typename T>
Var<T> Dropout(const Var<T>& x, double rate, std::uint64_t seed);

// ---- reductions and normalization -----------------------------------------

template <typename T>
Var<T> Sum(const Var<T>& x);
template <typename T>
Var<T> Mean(const Var<T>& x);
// Sum along one axis, keeping it with size 1.
template <typename T>
Var<T> SumAxis(const Var<T>& x, std::size_t axis);

template <typename T>
Var<T> Softmax(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> LogSoftmax(const Var<T>& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias (each holding
// as many elements as the last axis).
template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                 T eps = T(1e-5));

// ---- structural -----------------------------------------------------------

template <typename T>
Var<T> Reshape(const Var<T>& x, Shape shape);
template <typename T>
Var<T> SliceRows(const Var<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Var<T> SliceCols(const Var<T>& x, std::size_t begin, std::size_t end);
template <typename T>
Var<T> ConcatRows(std::span<const Var<T>> parts);
template <typename T>
Var<T> ConcatCols(std::span<const Var<T>> parts);

inline constexpr std::int64_t kZeroRow = -1;
// out[i] = x[indices[i]]; kZeroRow yields a zero row. Repeats accumulate in
// the backward pass.
template <typename T>
Var<T> GatherRows(const Var<T>& x, std::span<const std::int64_t> indices);
// out[i] = x[i, indices[i]] as an [R x 1] column.
template <typename T>
Var<T> PickColumns(const Var<T>& x, std::span<const std::int64_t> indices);
// Sets entries above the diagonal (column > row) of a square-or-wider score
// matrix to -inf.
template <typename T>
Var<T> MaskFuture(const Var<T>& scores);

// ---- operators ------------------------------------------------------------

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return Add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return Sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return Mul(a, b); }

// Dense kernels shared with non-differentiable code paths.
// c (m x p) += a (m x k) * b (k x p)
template <typename T>
void GemmAccumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t p);

}  // namespace apc

#endif  // APC_AUTOGRAD_H_
