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

#include "apc/autograd.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "apc/error.h"

namespace apc {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
Tensor<T>* GradOf(const NodePtr<T>& node) {
  return node->requires_grad ? &node->Grad() : nullptr;
}

// Wraps a freshly computed value. Parents are only recorded when gradient
// tracking is on and at least one parent needs a gradient.
template <typename T>
Var<T> MakeResult(Tensor<T> value, std::vector<NodePtr<T>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

void RequireMatrix(const Shape& s, const char* op) {
  if (s.size() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + ShapeString(s));
  }
}

}  // namespace

// ---- Node / Var -----------------------------------------------------------

template <typename T>
Node<T>::~Node() {
  // Unlink long parent chains iteratively so deep recurrent graphs do not
  // recurse once per node on destruction.
  std::vector<NodePtr<T>> stack = std::move(parents);
  while (!stack.empty()) {
    NodePtr<T> p = std::move(stack.back());
    stack.pop_back();
    if (p.use_count() == 1) {
      for (auto& q : p->parents) stack.push_back(std::move(q));
      p->parents.clear();
      p->backward_fn = nullptr;
    }
  }
}

template <typename T>
Tensor<T>& Node<T>::Grad() {
  if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T> Var<T>::Param(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->Grad();
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Var<T>::Constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <typename T>
T Var<T>::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar " + ShapeString(shape()));
  return node_->value[0];
}

template <typename T>
void Var<T>::ZeroGrad() {
  node_->Grad().Fill(T(0));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool GradEnabled() { return g_grad_enabled; }

template <typename T>
void Backward(const Var<T>& root) {
  if (root.size() != 1) {
    throw ContractError("backward requires a scalar root, got " + ShapeString(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (!n->leaf) n->Grad().Fill(T(0));
  }
  root.node()->Grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---- kernels ----------------------------------------------------------------

template <typename T>
void GemmAccumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T(0)) continue;
      const T* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

namespace {

// c (m x p) += a (m x k) * b^T, with b stored (p x k).
template <typename T>
void GemmNTAccumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                      std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// c (k x p) += a^T * b, with a stored (m x k), b stored (m x p).
template <typename T>
void GemmTNAccumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                      std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T(0)) continue;
      T* crow = c + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> Matmul(const Var<T>& a, const Var<T>& b) {
  RequireMatrix(a.shape(), "matmul");
  RequireMatrix(b.shape(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul inner dimensions differ: " + ShapeString(a.shape()) +
                         " x " + ShapeString(b.shape()));
  }
  Tensor<T> out(m, p);
  GemmAccumulate(a.value().data(), b.value().data(), out.data(), m, k, p);
  return MakeResult<T>(std::move(out), {a.ptr(), b.ptr()}, [m, k, p](Node<T>& n) {
    const auto& A = n.parents[0];
    const auto& B = n.parents[1];
    if (auto* ga = GradOf(A)) GemmNTAccumulate(n.grad.data(), B->value.data(), ga->data(), m, p, k);
    if (auto* gb = GradOf(B)) GemmTNAccumulate(A->value.data(), n.grad.data(), gb->data(), m, k, p);
  });
}

template <typename T>
Var<T> MatmulNT(const Var<T>& a, const Var<T>& b) {
  RequireMatrix(a.shape(), "matmul_nt");
  RequireMatrix(b.shape(), "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), p = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt inner dimensions differ: " + ShapeString(a.shape()) +
                         " x " + ShapeString(b.shape()) + "^T");
  }
  Tensor<T> out(m, p);
  GemmNTAccumulate(a.value().data(), b.value().data(), out.data(), m, k, p);
  return MakeResult<T>(std::move(out), {a.ptr(), b.ptr()}, [m, k, p](Node<T>& n) {
    const auto& A = n.parents[0];
    const auto& B = n.parents[1];
    // dA = G * B  (m x p)(p x k);  dB = G^T * A  (p x m)(m x k)
    if (auto* ga = GradOf(A)) GemmAccumulate(n.grad.data(), B->value.data(), ga->data(), m, p, k);
    if (auto* gb = GradOf(B)) GemmTNAccumulate(n.grad.data(), A->value.data(), gb->data(), m, p, k);
  });
}

template <typename T>
Var<T> Transpose(const Var<T>& a) {
  RequireMatrix(a.shape(), "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor<T> out(c, r);
  const auto& v = a.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = v(i, j);
  return MakeResult<T>(std::move(out), {a.ptr()}, [r, c](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)(i, j) += n.grad(j, i);
    }
  });
}

// ---- broadcasting binary ops ---------------------------------------------

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;  // 0 on broadcast axes
  std::vector<std::size_t> b_strides;
  bool same = false;
  bool a_scalar = false;
  bool b_scalar = false;
};

std::vector<std::size_t> Strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast PlanBroadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  if (ShapeSize(b) == 1) {
    plan.out = a;
    plan.b_scalar = true;
    return plan;
  }
  if (ShapeSize(a) == 1) {
    plan.out = b;
    plan.a_scalar = true;
    return plan;
  }
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + ShapeString(a) + " with " +
                         ShapeString(b));
  }
  plan.out.resize(a.size());
  auto sa = Strides(a), sb = Strides(b);
  plan.a_strides.resize(a.size());
  plan.b_strides.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + ShapeString(a) + " with " +
                           ShapeString(b));
    }
    plan.out[i] = std::max(a[i], b[i]);
    plan.a_strides[i] = a[i] == 1 ? 0 : sa[i];
    plan.b_strides[i] = b[i] == 1 ? 0 : sb[i];
  }
  return plan;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void ForEachBroadcast(const Broadcast& plan, F&& f) {
  const std::size_t n = ShapeSize(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (plan.b_scalar) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, std::size_t{0});
    return;
  }
  if (plan.a_scalar) {
    for (std::size_t i = 0; i < n; ++i) f(i, std::size_t{0}, i);
    return;
  }
  const std::size_t nd = plan.out.size();
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ai, bi);
    for (std::size_t axis = nd; axis-- > 0;) {
      ++idx[axis];
      ai += plan.a_strides[axis];
      bi += plan.b_strides[axis];
      if (idx[axis] < plan.out[axis]) break;
      ai -= plan.a_strides[axis] * idx[axis];
      bi -= plan.b_strides[axis] * idx[axis];
      idx[axis] = 0;
    }
  }
}

}  // namespace

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "add");
  Tensor<T> out(plan.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.data();
  ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] + bv[j]; });
  return MakeResult<T>(std::move(out), {a.ptr(), b.ptr()}, [plan](Node<T>& n) {
    auto* ga = GradOf(n.parents[0]);
    auto* gb = GradOf(n.parents[1]);
    const T* g = n.grad.data();
    ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) (*ga)[i] += g[o];
      if (gb) (*gb)[j] += g[o];
    });
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "sub");
  Tensor<T> out(plan.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.data();
  ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] - bv[j]; });
  return MakeResult<T>(std::move(out), {a.ptr(), b.ptr()}, [plan](Node<T>& n) {
    auto* ga = GradOf(n.parents[0]);
    auto* gb = GradOf(n.parents[1]);
    const T* g = n.grad.data();
    ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) (*ga)[i] += g[o];
      if (gb) (*gb)[j] -= g[o];
    });
  });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  auto plan = PlanBroadcast(a.shape(), b.shape(), "mul");
  Tensor<T> out(plan.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* ov = out.data();
  ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ov[o] = av[i] * bv[j]; });
  return MakeResult<T>(std::move(out), {a.ptr(), b.ptr()}, [plan](Node<T>& n) {
    auto* ga = GradOf(n.parents[0]);
    auto* gb = GradOf(n.parents[1]);
    const T* g = n.grad.data();
    const T* av = n.parents[0]->value.data();
    const T* bv = n.parents[1]->value.data();
    ForEachBroadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) (*ga)[i] += g[o] * bv[j];
      if (gb) (*gb)[j] += g[o] * av[i];
    });
  });
}

// ---- unary ops --------------------------------------------------------------

namespace {

// Applies fwd pointwise; the derivative is computed from (input, output).
template <typename T, typename Fwd, typename Deriv>
Var<T> Unary(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  T* ov = out.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  return MakeResult<T>(std::move(out), {x.ptr()}, [deriv](Node<T>& node) {
    auto* g = GradOf(node.parents[0]);
    if (!g) return;
    const T* xv = node.parents[0]->value.data();
    const T* yv = node.value.data();
    const T* gv = node.grad.data();
    T* dst = g->data();
    const std::size_t n = node.value.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += gv[i] * deriv(xv[i], yv[i]);
  });
}

template <typename T>
T StableSigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> Sigmoid(const Var<T>& x) {
  return Unary(x, [](T v) { return StableSigmoid(v); },
               [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> Tanh(const Var<T>& x) {
  return Unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> Gelu(const Var<T>& x) {
  static const T kInvSqrt2 = T(1) / std::sqrt(T(2));
  static const T kInvSqrt2Pi = T(1) / std::sqrt(T(2) * T(M_PI));
  return Unary(
      x, [](T v) { return v * T(0.5) * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) {
        T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  return Unary(x, [](T v) { return v > T(0) ? v : T(0); },
               [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> Abs(const Var<T>& x) {
  return Unary(x, [](T v) { return std::abs(v); },
               [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> Exp(const Var<T>& x) {
  return Unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> Log(const Var<T>& x) {
  return Unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> Scale(const Var<T>& x, T factor) {
  return Unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> AddScalar(const Var<T>& x, T offset) {
  return Unary(x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> Dropout(const Var<T>& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  Tensor<T> mask(x.shape());
  const T scale = T(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : T(0);
  return Mul(x, Var<T>::Constant(std::move(mask)));
}

template <typename T>
Var<T> Elementwise(ElementwiseOp op, std::span<const Var<T>> operands) {
  auto need = [&](std::size_t n) {
    if (operands.size() != n) {
      throw ContractError("elementwise op expects " + std::to_string(n) + " operands, got " +
                          std::to_string(operands.size()));
    }
  };
  switch (op) {
    case ElementwiseOp::kAdd: need(2); return Add(operands[0], operands[1]);
    case ElementwiseOp::kSub: need(2); return Sub(operands[0], operands[1]);
    case ElementwiseOp::kMul: need(2); return Mul(operands[0], operands[1]);
    case ElementwiseOp::kSigmoid: need(1); return Sigmoid(operands[0]);
    case ElementwiseOp::kTanh: need(1); return Tanh(operands[0]);
    case ElementwiseOp::kGelu: need(1); return Gelu(operands[0]);
    case ElementwiseOp::kRelu: need(1); return Relu(operands[0]);
    case ElementwiseOp::kAbs: need(1); return Abs(operands[0]);
  }
  throw ContractError("unknown elementwise op");
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Var<T> Sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().values()) acc += v;
  return MakeResult<T>(Tensor<T>::Scalar(acc), {x.ptr()}, [](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      const T gv = n.grad[0];
      for (T& v : g->values()) v += gv;
    }
  });
}

template <typename T>
Var<T> Mean(const Var<T>& x) {
  return Scale(Sum(x), T(1) / T(x.size()));
}

namespace {

// Splits a shape around an axis into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit SplitAxis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + ShapeString(s));
  }
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) out.inner *= s[i];
  return out;
}

}  // namespace

template <typename T>
Var<T> SumAxis(const Var<T>& x, std::size_t axis) {
  const auto sp = SplitAxis(x.shape(), axis, "sum_axis");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  Tensor<T> out(out_shape);
  const T* xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t a = 0; a < sp.len; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[(o * sp.len + a) * sp.inner + i];
  return MakeResult<T>(std::move(out), {x.ptr()}, [sp](Node<T>& n) {
    auto* g = GradOf(n.parents[0]);
    if (!g) return;
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t a = 0; a < sp.len; ++a)
        for (std::size_t i = 0; i < sp.inner; ++i)
          (*g)[(o * sp.len + a) * sp.inner + i] += n.grad[o * sp.inner + i];
  });
}

template <typename T>
Var<T> Softmax(const Var<T>& x, std::size_t axis) {
  const auto sp = SplitAxis(x.shape(), axis, "softmax");
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < sp.len; ++a) mx = std::max(mx, xv[at(a)]);
      T total = T(0);
      for (std::size_t a = 0; a < sp.len; ++a) {
        T e = std::exp(xv[at(a)] - mx);
        out[at(a)] = e;
        total += e;
      }
      for (std::size_t a = 0; a < sp.len; ++a) out[at(a)] /= total;
    }
  }
  return MakeResult<T>(std::move(out), {x.ptr()}, [sp](Node<T>& n) {
    auto* g = GradOf(n.parents[0]);
    if (!g) return;
    const T* y = n.value.data();
    const T* gy = n.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
        T dot = T(0);
        for (std::size_t a = 0; a < sp.len; ++a) dot += gy[at(a)] * y[at(a)];
        for (std::size_t a = 0; a < sp.len; ++a) (*g)[at(a)] += y[at(a)] * (gy[at(a)] - dot);
      }
    }
  });
}

template <typename T>
Var<T> LogSoftmax(const Var<T>& x, std::size_t axis) {
  const auto sp = SplitAxis(x.shape(), axis, "log_softmax");
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < sp.len; ++a) mx = std::max(mx, xv[at(a)]);
      T total = T(0);
      for (std::size_t a = 0; a < sp.len; ++a) total += std::exp(xv[at(a)] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t a = 0; a < sp.len; ++a) out[at(a)] = xv[at(a)] - lse;
    }
  }
  return MakeResult<T>(std::move(out), {x.ptr()}, [sp](Node<T>& n) {
    auto* g = GradOf(n.parents[0]);
    if (!g) return;
    const T* y = n.value.data();
    const T* gy = n.grad.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto at = [&](std::size_t a) { return (o * sp.len + a) * sp.inner + i; };
        T total = T(0);
        for (std::size_t a = 0; a < sp.len; ++a) total += gy[at(a)];
        for (std::size_t a = 0; a < sp.len; ++a)
          (*g)[at(a)] += gy[at(a)] - std::exp(y[at(a)]) * total;
      }
    }
  });
}

template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain " + ShapeString(gain.shape()) + " / bias " +
                         ShapeString(bias.shape()) + " do not match last axis of " +
                         ShapeString(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  // Normalized input and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* xv = x.value().data();
  const T* gv = gain.value().data();
  const T* bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return MakeResult<T>(std::move(out), {x.ptr(), gain.ptr(), bias.ptr()},
                       [d, rows, xhat, inv_std](Node<T>& n) {
    auto* gx = GradOf(n.parents[0]);
    auto* gg = GradOf(n.parents[1]);
    auto* gb = GradOf(n.parents[2]);
    const T* gain_v = n.parents[1]->value.data();
    const T* gy = n.grad.data();
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* h = xhat->data() + r * d;
      const T* g = gy + r * d;
      if (gg) for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[j] * h[j];
      if (gb) for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[j];
      if (!gx) continue;
      T mean_d = T(0), mean_dh = T(0);
      for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = g[j] * gain_v[j];
        mean_d += dxhat[j];
        mean_dh += dxhat[j] * h[j];
      }
      mean_d /= T(d);
      mean_dh /= T(d);
      const T is = (*inv_std)[r];
      for (std::size_t j = 0; j < d; ++j)
        (*gx)[r * d + j] += is * (dxhat[j] - mean_d - h[j] * mean_dh);
    }
  });
}

// ---- structural -----------------------------------------------------------

template <typename T>
Var<T> Reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().Reshaped(std::move(shape));
  return MakeResult<T>(std::move(out), {x.ptr()}, [](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      const std::size_t sz = n.grad.size();
      for (std::size_t i = 0; i < sz; ++i) (*g)[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> SliceRows(const Var<T>& x, std::size_t begin, std::size_t end) {
  RequireMatrix(x.shape(), "slice_rows");
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + ShapeString(x.shape()));
  }
  const std::size_t c = x.cols();
  const T* src = x.value().data() + begin * c;
  Tensor<T> out(Shape{end - begin, c}, std::vector<T>(src, src + (end - begin) * c));
  return MakeResult<T>(std::move(out), {x.ptr()}, [begin, c](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      T* dst = g->data() + begin * c;
      for (std::size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> SliceCols(const Var<T>& x, std::size_t begin, std::size_t end) {
  RequireMatrix(x.shape(), "slice_cols");
  if (begin >= end || end > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + ShapeString(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols(), w = end - begin;
  Tensor<T> out(r, w);
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy(xv + i * c + begin, xv + i * c + end, out.data() + i * w);
  return MakeResult<T>(std::move(out), {x.ptr()}, [r, c, w, begin](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) (*g)[i * c + begin + j] += n.grad[i * w + j];
    }
  });
}

template <typename T>
Var<T> ConcatRows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero parts");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + ShapeString(parts[0].shape()) +
                           " vs " + ShapeString(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<T> data;
  data.reserve(rows * c);
  std::vector<NodePtr<T>> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) {
    data.insert(data.end(), p.value().vec().begin(), p.value().vec().end());
    parents.push_back(p.ptr());
  }
  return MakeResult<T>(Tensor<T>(Shape{rows, c}, std::move(data)), std::move(parents),
                       [](Node<T>& n) {
    std::size_t offset = 0;
    for (const auto& p : n.parents) {
      const std::size_t sz = p->value.size();
      if (auto* g = GradOf(p)) {
        for (std::size_t i = 0; i < sz; ++i) (*g)[i] += n.grad[offset + i];
      }
      offset += sz;
    }
  });
}

template <typename T>
Var<T> ConcatCols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero parts");
  const std::size_t r = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + ShapeString(parts[0].shape()) +
                           " vs " + ShapeString(p.shape()));
    }
    cols += p.cols();
  }
  Tensor<T> out(r, cols);
  std::vector<NodePtr<T>> parents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const T* src = p.value().data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(src + i * w, src + (i + 1) * w, out.data() + i * cols + offset);
    offset += w;
    parents.push_back(p.ptr());
  }
  return MakeResult<T>(std::move(out), std::move(parents), [r, cols](Node<T>& n) {
    std::size_t offset = 0;
    for (const auto& p : n.parents) {
      const std::size_t w = p->value.cols();
      if (auto* g = GradOf(p)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += n.grad[i * cols + offset + j];
      }
      offset += w;
    }
  });
}

template <typename T>
Var<T> GatherRows(const Var<T>& x, std::span<const std::int64_t> indices) {
  RequireMatrix(x.shape(), "gather_rows");
  if (indices.empty()) throw DimensionError("gather_rows with no indices");
  const std::size_t r = x.rows(), c = x.cols();
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices.begin(), indices.end());
  Tensor<T> out(idx->size(), c);
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const std::int64_t k = (*idx)[i];
    if (k == kZeroRow) continue;
    if (k < 0 || static_cast<std::size_t>(k) >= r) {
      throw DimensionError("gather_rows index " + std::to_string(k) + " out of range for " +
                           ShapeString(x.shape()));
    }
    std::copy(xv + k * c, xv + (k + 1) * c, out.data() + i * c);
  }
  return MakeResult<T>(std::move(out), {x.ptr()}, [idx, c](Node<T>& n) {
    auto* g = GradOf(n.parents[0]);
    if (!g) return;
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const std::int64_t k = (*idx)[i];
      if (k == kZeroRow) continue;
      T* dst = g->data() + k * c;
      const T* src = n.grad.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> PickColumns(const Var<T>& x, std::span<const std::int64_t> indices) {
  RequireMatrix(x.shape(), "pick_columns");
  const std::size_t r = x.rows(), c = x.cols();
  if (indices.size() != r) {
    throw DimensionError("pick_columns needs one index per row of " + ShapeString(x.shape()));
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices.begin(), indices.end());
  Tensor<T> out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t k = (*idx)[i];
    if (k < 0 || static_cast<std::size_t>(k) >= c) {
      throw DimensionError("pick_columns index " + std::to_string(k) + " out of range for " +
                           ShapeString(x.shape()));
    }
    out[i] = x.value()(i, k);
  }
  return MakeResult<T>(std::move(out), {x.ptr()}, [idx, c](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      for (std::size_t i = 0; i < idx->size(); ++i) (*g)[i * c + (*idx)[i]] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> MaskFuture(const Var<T>& scores) {
  RequireMatrix(scores.shape(), "mask_future");
  const std::size_t r = scores.rows(), c = scores.cols();
  Tensor<T> out = scores.value();
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = i + 1; j < c; ++j) out(i, j) = neg_inf;
  return MakeResult<T>(std::move(out), {scores.ptr()}, [r, c](Node<T>& n) {
    if (auto* g = GradOf(n.parents[0])) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j <= i && j < c; ++j) (*g)(i, j) += n.grad(i, j);
    }
  });
}

// ---- instantiation --------------------------------------------------------

#define APC_INSTANTIATE_AUTOGRAD(T)                                                      \
  template struct Node<T>;                                                               \
  template class Var<T>;                                                                 \
  template void Backward(const Var<T>&);                                                 \
  template void GemmAccumulate(const T*, const T*, T*, std::size_t, std::size_t,         \
                               std::size_t);                                             \
  template Var<T> Matmul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> MatmulNT(const Var<T>&, const Var<T>&);                                \
  template Var<T> Transpose(const Var<T>&);                                              \
  template Var<T> Elementwise(ElementwiseOp, std::span<const Var<T>>);                   \
  template Var<T> Add(const Var<T>&, const Var<T>&);                                     \
  template Var<T> Sub(const Var<T>&, const Var<T>&);                                     \
  template Var<T> Mul(const Var<T>&, const Var<T>&);                                     \
  template Var<T> Sigmoid(const Var<T>&);                                                \
  template Var<T> Tanh(const Var<T>&);                                                   \
  template Var<T> Gelu(const Var<T>&);                                                   \
  template Var<T> Relu(const Var<T>&);                                                   \
  template Var<T> Abs(const Var<T>&);                                                    \
  template Var<T> Exp(const Var<T>&);                                                    \
  template Var<T> Log(const Var<T>&);                                                    \
  template Var<T> Scale(const Var<T>&, T);                                               \
  template Var<T> AddScalar(const Var<T>&, T);                                           \
  template Var<T> Dropout(const Var<T>&, double, std::uint64_t);                         \
  template Var<T> Sum(const Var<T>&);                                                    \
  template Var<T> Mean(const Var<T>&);                                                   \
  template Var<T> SumAxis(const Var<T>&, std::size_t);                                   \
  template Var<T> Softmax(const Var<T>&, std::size_t);                                   \
  template Var<T> LogSoftmax(const Var<T>&, std::size_t);                                \
  template Var<T> LayerNorm(const Var<T>&, const Var<T>&, const Var<T>&, T);             \
  template Var<T> Reshape(const Var<T>&, Shape);                                         \
  template Var<T> SliceRows(const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> SliceCols(const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> ConcatRows(std::span<const Var<T>>);                                   \
  template Var<T> ConcatCols(std::span<const Var<T>>);                                   \
  template Var<T> GatherRows(const Var<T>&, std::span<const std::int64_t>);              \
  template Var<T> PickColumns(const Var<T>&, std::span<const std::int64_t>);             \
  template Var<T> MaskFuture(const Var<T>&);

APC_INSTANTIATE_AUTOGRAD(float)
APC_INSTANTIATE_AUTOGRAD(double)

}  // namespace apc
