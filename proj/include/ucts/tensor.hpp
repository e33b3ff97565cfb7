// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_TENSOR_HPP
#define UCTS_TENSOR_HPP

// Minimal reverse-mode autodiff over dense tensors (define-by-run). Each
// operation allocates a graph node holding its value and a backward closure;
// backward() linearizes the graph into a tape (topological order) and replays
// it once in reverse. Single precision is the training default; gradcheck
// instantiates the same ops in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ucts/common.hpp"

namespace ucts {

namespace ad {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(s));
    n *= std::size_t(d);
  }
  return n;
}

template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

/// Ordered record of the operations reachable from a root, parents before
/// children; one reverse traversal performs the backward pass.
template <typename T>
using Tape = std::vector<Node<T>*>;

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<T> data) {
    const std::size_t n = shape_numel(shape);
    if (data.size() != n)
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    node_ = std::make_shared<Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
  }

  static Tensor zeros(std::vector<int> shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
  }
  static Tensor full(std::vector<int> shape, T v) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }
  /// Gaussian init (mean 0, given stddev) from the supplied generator.
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng,
                      double stddev = 1.0) {
    const std::size_t n = shape_numel(shape);
    std::normal_distribution<double> gauss(0.0, stddev);
    std::vector<T> d(n);
    for (auto& v : d) v = T(gauss(rng));
    return Tensor(std::move(shape), std::move(d));
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->numel(); }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true) {
    node_->requires_grad = b;
    return *this;
  }
  /// Gradient accumulated by the last backward(); empty if none reached it.
  const std::vector<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<Node<T>> node() const { return node_; }

  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->parents = std::move(parents);
  bool rg = false;
  for (const auto& p : n->parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) n->backward = std::move(backward);
  return Tensor<T>(std::move(n));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* opname) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(opname) + ": shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

/// Build the tape reachable from `root` (parents before children).
template <typename T>
Tape<T> build_tape(const Tensor<T>& root) {
  Tape<T> order;
  std::unordered_set<const Node<T>*> seen;
  // iterative DFS post-order
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;
}

/// Reverse-mode backward from a scalar root: seeds d(root)/d(root) = 1 and
/// replays the tape once in reverse, accumulating into each reachable
/// requires_grad node's grad slot.
template <typename T>
void backward(const Tensor<T>& root) {
  if (root.numel() != 1)
    throw ShapeError("backward requires a scalar root, got " +
                     shape_str(root.shape()));
  Tape<T> tape = build_tape(root);
  root.node()->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    Node<T>* n = *it;
    if (n->requires_grad && n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise and scalar ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb},
                            [pa, pb](Node<T>& n) {
                              if (pa->requires_grad) {
                                pa->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pa->grad[i] += n.grad[i];
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pb->grad[i] += n.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] - b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb},
                            [pa, pb](Node<T>& n) {
                              if (pa->requires_grad) {
                                pa->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pa->grad[i] += n.grad[i];
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pb->grad[i] -= n.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb},
                            [pa, pb](Node<T>& n) {
                              if (pa->requires_grad) {
                                pa->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pa->grad[i] += n.grad[i] * pb->value[i];
                              }
                              if (pb->requires_grad) {
                                pb->ensure_grad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pb->grad[i] += n.grad[i] * pa->value[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, double s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(a.value()[i] * s);
  auto pa = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa},
                            [pa, s](Node<T>& n) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.grad.size(); ++i)
                                pa->grad[i] += T(n.grad[i] * s);
                            });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(a.value()[i] + s);
  auto pa = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa},
                            [pa](Node<T>& n) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.grad.size(); ++i)
                                pa->grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  auto pa = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa},
                            [pa](Node<T>& n) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.grad.size(); ++i)
                                if (pa->value[i] > T(0))
                                  pa->grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope = 0.2) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.value()[i] > T(0) ? a.value()[i] : T(a.value()[i] * slope);
  auto pa = a.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {pa}, [pa, slope](Node<T>& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          pa->grad[i] += pa->value[i] > T(0) ? n.grad[i] : T(n.grad[i] * slope);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  auto pa = a.node();
  auto saved = out;  // y; dy/dx = y(1-y)
  return detail::make_op<T>(
      a.shape(), std::move(out), {pa}, [pa, saved](Node<T>& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          pa->grad[i] += n.grad[i] * saved[i] * (T(1) - saved[i]);
      });
}

// ---------------------------------------------------------------------------
// reductions and reshaping
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.value()) s += v;
  auto pa = a.node();
  return detail::make_op<T>({1}, {s}, {pa}, [pa](Node<T>& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < pa->grad.size(); ++i)
      pa->grad[i] += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.value()) s += v;
  const double inv = 1.0 / double(a.numel());
  auto pa = a.node();
  return detail::make_op<T>({1}, {T(s * inv)}, {pa}, [pa, inv](Node<T>& n) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < pa->grad.size(); ++i)
      pa->grad[i] += T(n.grad[0] * inv);
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  auto pa = a.node();
  return detail::make_op<T>(std::move(shape), a.value(), {pa},
                            [pa](Node<T>& n) {
                              pa->ensure_grad();
                              for (std::size_t i = 0; i < n.grad.size(); ++i)
                                pa->grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const auto& s0 = parts[0].shape();
  if (axis < 0 || axis >= int(s0.size()))
    throw ShapeError("concat: axis out of range for " + shape_str(s0));
  int total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != s0.size())
      throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " +
                       shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d)
      if (int(d) != axis && s[d] != s0[d])
        throw ShapeError("concat: shape mismatch off-axis " + shape_str(s0) +
                         " vs " + shape_str(s));
    total += s[axis];
  }
  std::vector<int> out_shape = s0;
  out_shape[axis] = total;
  // outer = product of dims before axis, inner = product after
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(s0[d]);
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= std::size_t(s0[d]);

  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::vector<int> widths;
  for (const auto& p : parts) {
    parents.push_back(p.node());
    widths.push_back(p.shape()[axis]);
  }
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& v = parts[pi].value();
    const std::size_t w = std::size_t(widths[pi]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(v.begin() + o * w, v.begin() + (o + 1) * w,
                out.begin() + o * std::size_t(total) * inner + off);
    off += w;
  }
  return detail::make_op<T>(
      std::move(out_shape), std::move(out), std::move(parents),
      [widths, outer, inner, total](Node<T>& n) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
          auto& p = *n.parents[pi];
          const std::size_t w = std::size_t(widths[pi]) * inner;
          if (p.requires_grad) {
            p.ensure_grad();
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < w; ++i)
                p.grad[o * w + i] +=
                    n.grad[o * std::size_t(total) * inner + off + i];
          }
          off += w;
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, int start, int len) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= int(s.size()))
    throw ShapeError("slice: axis out of range for " + shape_str(s));
  if (start < 0 || len <= 0 || start + len > s[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside axis of size " +
                     std::to_string(s[axis]));
  std::vector<int> out_shape = s;
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(s[d]);
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= std::size_t(s[d]);
  const std::size_t in_w = std::size_t(s[axis]) * inner;
  const std::size_t out_w = std::size_t(len) * inner;
  const std::size_t skip = std::size_t(start) * inner;

  std::vector<T> out(outer * out_w);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(a.value().begin() + o * in_w + skip,
              a.value().begin() + o * in_w + skip + out_w,
              out.begin() + o * out_w);
  auto pa = a.node();
  return detail::make_op<T>(std::move(out_shape), std::move(out), {pa},
                            [pa, outer, in_w, out_w, skip](Node<T>& n) {
                              pa->ensure_grad();
                              for (std::size_t o = 0; o < outer; ++o)
                                for (std::size_t i = 0; i < out_w; ++i)
                                  pa->grad[o * in_w + skip + i] +=
                                      n.grad[o * out_w + i];
                            });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// 2-D matrix product [m,k] x [k,n] -> [m,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(std::size_t(m) * n, T(0));
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      const T av = a.value()[std::size_t(i) * k + l];
      const T* brow = b.value().data() + std::size_t(l) * n;
      T* orow = out.data() + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(
      {m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](Node<T>& nd) {
        if (pa->requires_grad) {
          pa->ensure_grad();  // dA = dOut * B^T
          for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
              T s = 0;
              const T* grow = nd.grad.data() + std::size_t(i) * n;
              const T* brow = pb->value.data() + std::size_t(l) * n;
              for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
              pa->grad[std::size_t(i) * k + l] += s;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();  // dB = A^T * dOut
          for (int l = 0; l < k; ++l)
            for (int i = 0; i < m; ++i) {
              const T av = pa->value[std::size_t(i) * k + l];
              const T* grow = nd.grad.data() + std::size_t(i) * n;
              T* brow = pb->grad.data() + std::size_t(l) * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
        }
      });
}

/// 2-D transpose [m,n] -> [n,m].
template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.shape().size() != 2)
    throw ShapeError("transpose: expected rank 2, got " +
                     shape_str(a.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<T> out(std::size_t(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[std::size_t(j) * m + i] = a.value()[std::size_t(i) * n + j];
  auto pa = a.node();
  return detail::make_op<T>({n, m}, std::move(out), {pa},
                            [pa, m, n](Node<T>& nd) {
                              pa->ensure_grad();
                              for (int i = 0; i < m; ++i)
                                for (int j = 0; j < n; ++j)
                                  pa->grad[std::size_t(i) * n + j] +=
                                      nd.grad[std::size_t(j) * m + i];
                            });
}

/// Broadcast a row vector [n] over the rows of [m,n].
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 1 ||
      b.shape()[0] != a.shape()[1])
    throw ShapeError("add_rowvec: incompatible " + shape_str(a.shape()) +
                     " + " + shape_str(b.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<T> out(a.numel());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[std::size_t(i) * n + j] =
          a.value()[std::size_t(i) * n + j] + b.value()[j];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {pa, pb}, [pa, pb, m, n](Node<T>& nd) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < nd.grad.size(); ++i)
            pa->grad[i] += nd.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              pb->grad[j] += nd.grad[std::size_t(i) * n + j];
        }
      });
}

/// Softmax along `axis` (numerically stabilized).
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  const auto& s = a.shape();
  if (axis < 0 || axis >= int(s.size()))
    throw ShapeError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(s[d]);
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= std::size_t(s[d]);
  const int L = s[axis];

  std::vector<T> out(a.numel());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * std::size_t(L) * inner + in;
      T mx = a.value()[base];
      for (int l = 1; l < L; ++l)
        mx = std::max(mx, a.value()[base + std::size_t(l) * inner]);
      T denom = 0;
      for (int l = 0; l < L; ++l) {
        const T e = std::exp(a.value()[base + std::size_t(l) * inner] - mx);
        out[base + std::size_t(l) * inner] = e;
        denom += e;
      }
      for (int l = 0; l < L; ++l)
        out[base + std::size_t(l) * inner] /= denom;
    }
  auto pa = a.node();
  auto saved = out;
  return detail::make_op<T>(
      a.shape(), std::move(out), {pa},
      [pa, saved, outer, inner, L](Node<T>& nd) {
        pa->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * std::size_t(L) * inner + in;
            T dot = 0;
            for (int l = 0; l < L; ++l) {
              const std::size_t idx = base + std::size_t(l) * inner;
              dot += nd.grad[idx] * saved[idx];
            }
            for (int l = 0; l < L; ++l) {
              const std::size_t idx = base + std::size_t(l) * inner;
              pa->grad[idx] += saved[idx] * (nd.grad[idx] - dot);
            }
          }
      });
}

// ---------------------------------------------------------------------------
// image ops (NCHW)
// ---------------------------------------------------------------------------

namespace detail {
inline void check_rank4(const std::vector<int>& s, const char* opname) {
  if (s.size() != 4)
    throw ShapeError(std::string(opname) + ": expected NCHW input, got " +
                     shape_str(s));
}
}  // namespace detail

/// conv2d: x [N,Cin,H,W], w [Cout,Cin,kh,kw], bias [Cout] (optional, pass an
/// undefined tensor to skip), zero padding `pad`, stride `stride`.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int pad = 0) {
  detail::check_rank4(x.shape(), "conv2d");
  detail::check_rank4(w.shape(), "conv2d weight");
  const int N = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  const int Cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != Cin)
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) +
                     " does not match input channels of " +
                     shape_str(x.shape()));
  if (bias.defined() &&
      (bias.shape().size() != 1 || bias.shape()[0] != Cout))
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                     " must be [Cout]");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0)
    throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()));

  std::vector<T> out(std::size_t(N) * Cout * OH * OW, T(0));
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  auto xat = [&](int n, int c, int i, int j) {
    return xv[((std::size_t(n) * Cin + c) * H + i) * W + j];
  };
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      const T b = bias.defined() ? bias.value()[co] : T(0);
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          T s = b;
          for (int ci = 0; ci < Cin; ++ci)
            for (int i = 0; i < kh; ++i) {
              const int xi = oh * stride - pad + i;
              if (xi < 0 || xi >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int xj = ow * stride - pad + j;
                if (xj < 0 || xj >= W) continue;
                s += xat(n, ci, xi, xj) *
                     wv[((std::size_t(co) * Cin + ci) * kh + i) * kw + j];
              }
            }
          out[((std::size_t(n) * Cout + co) * OH + oh) * OW + ow] = s;
        }
    }

  std::vector<std::shared_ptr<Node<T>>> parents = {x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto px = x.node();
  auto pw = w.node();
  auto pb = bias.defined() ? bias.node() : nullptr;
  return detail::make_op<T>(
      {N, Cout, OH, OW}, std::move(out), std::move(parents),
      [px, pw, pb, N, Cin, H, W, Cout, kh, kw, OH, OW, stride,
       pad](Node<T>& nd) {
        const T* g = nd.grad.data();
        auto gat = [&](int n, int co, int oh, int ow) {
          return g[((std::size_t(n) * Cout + co) * OH + oh) * OW + ow];
        };
        if (px->requires_grad) px->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        if (pb && pb->requires_grad) pb->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int co = 0; co < Cout; ++co)
            for (int oh = 0; oh < OH; ++oh)
              for (int ow = 0; ow < OW; ++ow) {
                const T go = gat(n, co, oh, ow);
                if (go == T(0)) continue;
                if (pb && pb->requires_grad) pb->grad[co] += go;
                for (int ci = 0; ci < Cin; ++ci)
                  for (int i = 0; i < kh; ++i) {
                    const int xi = oh * stride - pad + i;
                    if (xi < 0 || xi >= H) continue;
                    for (int j = 0; j < kw; ++j) {
                      const int xj = ow * stride - pad + j;
                      if (xj < 0 || xj >= W) continue;
                      const std::size_t xi_idx =
                          ((std::size_t(n) * Cin + ci) * H + xi) * W + xj;
                      const std::size_t wi_idx =
                          ((std::size_t(co) * Cin + ci) * kh + i) * kw + j;
                      if (px->requires_grad)
                        px->grad[xi_idx] += go * pw->value[wi_idx];
                      if (pw->requires_grad)
                        pw->grad[wi_idx] += go * px->value[xi_idx];
                    }
                  }
              }
      });
}

/// transposed_conv2d: x [N,Cin,H,W], w [Cin,Cout,kh,kw]; output
/// [(H-1)*stride + kh - 2*pad] square rule. The adjoint of conv2d.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& bias, int stride = 1,
                            int pad = 0) {
  detail::check_rank4(x.shape(), "transposed_conv2d");
  detail::check_rank4(w.shape(), "transposed_conv2d weight");
  const int N = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  const int Cout = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[0] != Cin)
    throw ShapeError("transposed_conv2d: weight " + shape_str(w.shape()) +
                     " does not match input channels of " +
                     shape_str(x.shape()));
  if (bias.defined() &&
      (bias.shape().size() != 1 || bias.shape()[0] != Cout))
    throw ShapeError("transposed_conv2d: bias must be [Cout]");
  if (stride < 1 || pad < 0)
    throw ShapeError("transposed_conv2d: bad stride/pad");
  const int OH = (H - 1) * stride + kh - 2 * pad;
  const int OW = (W - 1) * stride + kw - 2 * pad;
  if (OH <= 0 || OW <= 0)
    throw ShapeError("transposed_conv2d: empty output for " +
                     shape_str(x.shape()));

  std::vector<T> out(std::size_t(N) * Cout * OH * OW, T(0));
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co)
      if (bias.defined()) {
        T* oc = out.data() + (std::size_t(n) * Cout + co) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) oc[i] = bias.value()[co];
      }
    for (int ci = 0; ci < Cin; ++ci)
      for (int h = 0; h < H; ++h)
        for (int wcol = 0; wcol < W; ++wcol) {
          const T xv =
              x.value()[((std::size_t(n) * Cin + ci) * H + h) * W + wcol];
          if (xv == T(0)) continue;
          for (int co = 0; co < Cout; ++co)
            for (int i = 0; i < kh; ++i) {
              const int oi = h * stride - pad + i;
              if (oi < 0 || oi >= OH) continue;
              for (int j = 0; j < kw; ++j) {
                const int oj = wcol * stride - pad + j;
                if (oj < 0 || oj >= OW) continue;
                out[((std::size_t(n) * Cout + co) * OH + oi) * OW + oj] +=
                    xv *
                    w.value()[((std::size_t(ci) * Cout + co) * kh + i) * kw +
                              j];
              }
            }
        }
  }

  std::vector<std::shared_ptr<Node<T>>> parents = {x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto px = x.node();
  auto pw = w.node();
  auto pb = bias.defined() ? bias.node() : nullptr;
  return detail::make_op<T>(
      {N, Cout, OH, OW}, std::move(out), std::move(parents),
      [px, pw, pb, N, Cin, H, W, Cout, kh, kw, OH, OW, stride,
       pad](Node<T>& nd) {
        if (px->requires_grad) px->ensure_grad();
        if (pw->requires_grad) pw->ensure_grad();
        if (pb && pb->requires_grad) {
          pb->ensure_grad();
          for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co) {
              const T* gc =
                  nd.grad.data() + (std::size_t(n) * Cout + co) * OH * OW;
              T s = 0;
              for (int i = 0; i < OH * OW; ++i) s += gc[i];
              pb->grad[co] += s;
            }
        }
        for (int n = 0; n < N; ++n)
          for (int ci = 0; ci < Cin; ++ci)
            for (int h = 0; h < H; ++h)
              for (int wcol = 0; wcol < W; ++wcol) {
                const std::size_t xidx =
                    ((std::size_t(n) * Cin + ci) * H + h) * W + wcol;
                T xg = 0;
                for (int co = 0; co < Cout; ++co)
                  for (int i = 0; i < kh; ++i) {
                    const int oi = h * stride - pad + i;
                    if (oi < 0 || oi >= OH) continue;
                    for (int j = 0; j < kw; ++j) {
                      const int oj = wcol * stride - pad + j;
                      if (oj < 0 || oj >= OW) continue;
                      const T go =
                          nd.grad[((std::size_t(n) * Cout + co) * OH + oi) *
                                      OW +
                                  oj];
                      const std::size_t widx =
                          ((std::size_t(ci) * Cout + co) * kh + i) * kw + j;
                      if (px->requires_grad) xg += go * pw->value[widx];
                      if (pw->requires_grad)
                        pw->grad[widx] += go * px->value[xidx];
                    }
                  }
                if (px->requires_grad) px->grad[xidx] += xg;
              }
      });
}

/// max_pool2d with square window `k` and stride `k` (non-overlapping).
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k) {
  detail::check_rank4(x.shape(), "max_pool2d");
  if (k < 1) throw ShapeError("max_pool2d: window must be >= 1");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  if (H % k != 0 || W % k != 0)
    throw ShapeError("max_pool2d: input " + shape_str(x.shape()) +
                     " not divisible by window " + std::to_string(k));
  const int OH = H / k, OW = W / k;
  std::vector<T> out(std::size_t(N) * C * OH * OW);
  std::vector<std::size_t> arg(out.size());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          std::size_t best_idx =
              ((std::size_t(n) * C + c) * H + oh * k) * W + ow * k;
          T best = x.value()[best_idx];
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const std::size_t idx =
                  ((std::size_t(n) * C + c) * H + oh * k + i) * W + ow * k + j;
              if (x.value()[idx] > best) {
                best = x.value()[idx];
                best_idx = idx;
              }
            }
          const std::size_t oidx =
              ((std::size_t(n) * C + c) * OH + oh) * OW + ow;
          out[oidx] = best;
          arg[oidx] = best_idx;
        }
  auto px = x.node();
  return detail::make_op<T>({N, C, OH, OW}, std::move(out), {px},
                            [px, arg](Node<T>& nd) {
                              px->ensure_grad();
                              for (std::size_t i = 0; i < nd.grad.size(); ++i)
                                px->grad[arg[i]] += nd.grad[i];
                            });
}

/// Nearest-neighbour upsampling by integer factor.
template <typename T>
Tensor<T> nearest_upsample2d(const Tensor<T>& x, int factor) {
  detail::check_rank4(x.shape(), "nearest_upsample2d");
  if (factor < 1) throw ShapeError("nearest_upsample2d: factor must be >= 1");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  const int OH = H * factor, OW = W * factor;
  std::vector<T> out(std::size_t(N) * C * OH * OW);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
          out[((std::size_t(n) * C + c) * OH + oh) * OW + ow] =
              x.value()[((std::size_t(n) * C + c) * H + oh / factor) * W +
                        ow / factor];
  auto px = x.node();
  return detail::make_op<T>(
      {N, C, OH, OW}, std::move(out), {px},
      [px, N, C, H, W, OH, OW, factor](Node<T>& nd) {
        px->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
              for (int ow = 0; ow < OW; ++ow)
                px->grad[((std::size_t(n) * C + c) * H + oh / factor) * W +
                         ow / factor] +=
                    nd.grad[((std::size_t(n) * C + c) * OH + oh) * OW + ow];
      });
}

/// Global average pool [N,C,H,W] -> [N,C,1,1].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::check_rank4(x.shape(), "global_avg_pool");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  const double inv = 1.0 / double(H * W);
  std::vector<T> out(std::size_t(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      T s = 0;
      const T* xc = x.value().data() + (std::size_t(n) * C + c) * H * W;
      for (int i = 0; i < H * W; ++i) s += xc[i];
      out[std::size_t(n) * C + c] = T(s * inv);
    }
  auto px = x.node();
  return detail::make_op<T>({N, C, 1, 1}, std::move(out), {px},
                            [px, N, C, H, W, inv](Node<T>& nd) {
                              px->ensure_grad();
                              for (int n = 0; n < N; ++n)
                                for (int c = 0; c < C; ++c) {
                                  const T g = T(
                                      nd.grad[std::size_t(n) * C + c] * inv);
                                  T* gc = px->grad.data() +
                                          (std::size_t(n) * C + c) * H * W;
                                  for (int i = 0; i < H * W; ++i) gc[i] += g;
                                }
                            });
}

/// Channel-wise multiply: x [N,C,H,W] * s [N,C,1,1].
template <typename T>
Tensor<T> channel_mul(const Tensor<T>& x, const Tensor<T>& s) {
  detail::check_rank4(x.shape(), "channel_mul");
  detail::check_rank4(s.shape(), "channel_mul scale");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  if (s.shape()[0] != N || s.shape()[1] != C || s.shape()[2] != 1 ||
      s.shape()[3] != 1)
    throw ShapeError("channel_mul: scale " + shape_str(s.shape()) +
                     " must be [N,C,1,1] for input " + shape_str(x.shape()));
  std::vector<T> out(x.numel());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T sv = s.value()[std::size_t(n) * C + c];
      const T* xc = x.value().data() + (std::size_t(n) * C + c) * H * W;
      T* oc = out.data() + (std::size_t(n) * C + c) * H * W;
      for (int i = 0; i < H * W; ++i) oc[i] = xc[i] * sv;
    }
  auto px = x.node(), ps = s.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {px, ps}, [px, ps, N, C, H, W](Node<T>& nd) {
        if (px->requires_grad) px->ensure_grad();
        if (ps->requires_grad) ps->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::size_t base = (std::size_t(n) * C + c) * H * W;
            const T sv = ps->value[std::size_t(n) * C + c];
            T sgrad = 0;
            for (int i = 0; i < H * W; ++i) {
              const T g = nd.grad[base + i];
              if (px->requires_grad) px->grad[base + i] += g * sv;
              sgrad += g * px->value[base + i];
            }
            if (ps->requires_grad)
              ps->grad[std::size_t(n) * C + c] += sgrad;
          }
      });
}

/// Spatial multiply: x [N,C,H,W] * m [N,1,H,W] (mask broadcast over channels).
template <typename T>
Tensor<T> spatial_mul(const Tensor<T>& x, const Tensor<T>& m) {
  detail::check_rank4(x.shape(), "spatial_mul");
  detail::check_rank4(m.shape(), "spatial_mul mask");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  if (m.shape()[0] != N || m.shape()[1] != 1 || m.shape()[2] != H ||
      m.shape()[3] != W)
    throw ShapeError("spatial_mul: mask " + shape_str(m.shape()) +
                     " must be [N,1,H,W] for input " + shape_str(x.shape()));
  std::vector<T> out(x.numel());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xc = x.value().data() + (std::size_t(n) * C + c) * H * W;
      const T* mc = m.value().data() + std::size_t(n) * H * W;
      T* oc = out.data() + (std::size_t(n) * C + c) * H * W;
      for (int i = 0; i < H * W; ++i) oc[i] = xc[i] * mc[i];
    }
  auto px = x.node(), pm = m.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {px, pm}, [px, pm, N, C, H, W](Node<T>& nd) {
        if (px->requires_grad) px->ensure_grad();
        if (pm->requires_grad) pm->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::size_t base = (std::size_t(n) * C + c) * H * W;
            const std::size_t mbase = std::size_t(n) * H * W;
            for (int i = 0; i < H * W; ++i) {
              const T g = nd.grad[base + i];
              if (px->requires_grad)
                px->grad[base + i] += g * pm->value[mbase + i];
              if (pm->requires_grad)
                pm->grad[mbase + i] += g * px->value[base + i];
            }
          }
      });
}

/// Instance normalization over each (n, c) spatial slice, with per-channel
/// affine parameters gamma/beta of shape [C].
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                        const Tensor<T>& beta, double eps = 1e-5) {
  detail::check_rank4(x.shape(), "instance_norm");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
            W = x.shape()[3];
  if (gamma.shape() != std::vector<int>{C} ||
      beta.shape() != std::vector<int>{C})
    throw ShapeError("instance_norm: gamma/beta must be [C] for input " +
                     shape_str(x.shape()));
  const int M = H * W;
  std::vector<T> out(x.numel());
  std::vector<T> mu(std::size_t(N) * C), rstd(std::size_t(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (std::size_t(n) * C + c) * M;
      T m = 0;
      for (int i = 0; i < M; ++i) m += x.value()[base + i];
      m /= T(M);
      T var = 0;
      for (int i = 0; i < M; ++i) {
        const T d = x.value()[base + i] - m;
        var += d * d;
      }
      var /= T(M);
      const T r = T(1) / std::sqrt(var + T(eps));
      mu[std::size_t(n) * C + c] = m;
      rstd[std::size_t(n) * C + c] = r;
      const T g = gamma.value()[c], b = beta.value()[c];
      for (int i = 0; i < M; ++i)
        out[base + i] = (x.value()[base + i] - m) * r * g + b;
    }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, N, C, M, mu, rstd](Node<T>& nd) {
        if (px->requires_grad) px->ensure_grad();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const std::size_t base = (std::size_t(n) * C + c) * M;
            const T m = mu[std::size_t(n) * C + c];
            const T r = rstd[std::size_t(n) * C + c];
            const T g = pg->value[c];
            // xhat_i = (x_i - m) r ; dL/dxhat_i = dout_i * g
            T sum_dy = 0, sum_dy_xhat = 0;
            for (int i = 0; i < M; ++i) {
              const T xhat = (px->value[base + i] - m) * r;
              const T dy = nd.grad[base + i];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat;
              if (pg->requires_grad) pg->grad[c] += dy * xhat;
              if (pb->requires_grad) pb->grad[c] += dy;
            }
            if (px->requires_grad) {
              const T invM = T(1) / T(M);
              for (int i = 0; i < M; ++i) {
                const T xhat = (px->value[base + i] - m) * r;
                const T dy = nd.grad[base + i];
                px->grad[base + i] +=
                    g * r * (dy - invM * sum_dy - xhat * invM * sum_dy_xhat);
              }
            }
          }
      });
}

/// Custom-gradient splice: forward is the given precomputed scalar; backward
/// adds upstream x grad_x into x. Used to inject an externally computed loss
/// (e.g. the wave-equation misfit and its adjoint gradient) into the tape.
template <typename T>
Tensor<T> external_scalar(const Tensor<T>& x, double value,
                          std::vector<T> grad_x) {
  if (grad_x.size() != x.numel())
    throw ShapeError("external_scalar: gradient length " +
                     std::to_string(grad_x.size()) +
                     " does not match input " + shape_str(x.shape()));
  auto px = x.node();
  return detail::make_op<T>(
      {1}, {T(value)}, {px}, [px, grad_x = std::move(grad_x)](Node<T>& nd) {
        px->ensure_grad();
        for (std::size_t i = 0; i < grad_x.size(); ++i)
          px->grad[i] += nd.grad[0] * grad_x[i];
      });
}

/// Mean-squared-error loss between two same-shape tensors (scalar output).
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> d = sub(a, b);
  return mean(mul(d, d));
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Compare the tape gradient of a scalar-valued function against central
/// finite differences, coordinate by coordinate, over every requires_grad
/// input. Returns max_i |ad_i - fd_i| / max(max_i |fd_i|, floor).
inline double gradcheck(
    const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  Tensor<double> loss = f(inputs);
  if (loss.numel() != 1) throw ShapeError("gradcheck: f must be scalar");
  backward(loss);

  double fd_scale = 0.0, max_abs_err = 0.0;
  std::vector<double> ad_all, fd_all;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> ad =
        t.grad().empty() ? std::vector<double>(t.numel(), 0.0) : t.grad();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.value()[i];
      t.value()[i] = orig + eps;
      const double fp = f(inputs).value()[0];
      t.value()[i] = orig - eps;
      const double fm = f(inputs).value()[0];
      t.value()[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      fd_scale = std::max(fd_scale, std::abs(fd));
      max_abs_err = std::max(max_abs_err, std::abs(ad[i] - fd));
    }
  }
  return max_abs_err / std::max(fd_scale, 1e-10);
}

}  // namespace ad

}  // namespace ucts

#endif  // UCTS_TENSOR_HPP
