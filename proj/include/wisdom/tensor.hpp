#pragma once

// Dense float64 tensors with a reverse-mode tape.
//
// Every op result records its inputs and a backward rule when at least one
// input requires a gradient (and recording is not disabled with NoGradGuard).
// Nodes carry a creation sequence number; backward() visits the reachable
// nodes in decreasing sequence order, which is a reverse topological order
// because inputs always exist before the ops that consume them.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wisdom/errors.hpp"

namespace wisdom {

using Shape = std::vector<std::size_t>;
using Vec = std::vector<double>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline std::uint64_t next_seq() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace detail

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    if (detail::numel_of(shape) != data.size())
      throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                           shape_str(shape));
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_seq();
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = detail::numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = detail::numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad = false) {
    return Tensor({rows, cols}, std::move(data), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return i < node_->shape.size() ? node_->shape[i] : 1; }
  /// Leading dimension.
  std::size_t rows() const { return node_->shape.empty() ? 1 : node_->shape[0]; }
  /// Product of trailing dimensions.
  std::size_t cols() const { return rows() == 0 ? 0 : numel() / rows(); }

  std::span<const double> data() const { return node_->value; }
  /// Direct write access; only for leaves (parameters, optimizer, init).
  std::span<double> mutable_data() { return node_->value; }
  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }
  bool is_leaf() const { return !node_->backward; }

  /// Deep copy of the values, detached from any tape.
  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), node_->value, requires_grad); }

  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds an op result; records inputs and the backward rule only when needed.
inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = next_seq();
  bool needs = false;
  if (grad_mode())
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(node));
}

inline bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }

}  // namespace detail

inline void Tensor::backward() const {
  if (numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!requires_grad()) return;
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& in : n->inputs)
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq > b->seq; });
  node_->grad_buffer()[0] += 1.0;
  for (auto* n : order)
    if (n->backward && !n->grad.empty()) n->backward(*n);
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& n) {
    auto& in = *n.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(in.value[i], n.value[i]);
  });
}

enum class BinKind { add, sub, mul };

inline Tensor binary(const Tensor& a, const Tensor& b, BinKind kind) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
  if (!same && !a_scalar && !b_scalar)
    throw DimensionError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Shape shape = (same || b_scalar) ? a.shape() : b.shape();
  const std::size_t n = numel_of(shape);
  const std::size_t sa = (a.numel() == n) ? 1 : 0, sb = (b.numel() == n) ? 1 : 0;
  auto av = a.data(), bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[i * sa], y = bv[i * sb];
    out[i] = kind == BinKind::add ? x + y : kind == BinKind::sub ? x - y : x * y;
  }
  return make_result(shape, std::move(out), {a, b}, [kind, sa, sb](Node& nd) {
    const std::size_t n = nd.grad.size();
    auto& A = *nd.inputs[0];
    auto& B = *nd.inputs[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double d = kind == BinKind::mul ? B.value[i * sb] : 1.0;
        g[i * sa] += nd.grad[i] * d;
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        double d = kind == BinKind::mul ? A.value[i * sa] : (kind == BinKind::sub ? -1.0 : 1.0);
        g[i * sb] += nd.grad[i] * d;
      }
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinKind::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinKind::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary(a, b, detail::BinKind::mul); }

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}
inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}
inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}
inline Tensor relu(const Tensor& x) {
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}
/// log(1 + e^x), evaluated without overflow.
inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}
inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}
inline Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}
inline Tensor square(const Tensor& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}
/// Clamps values; the gradient is passed through only strictly inside (lo, hi).
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
                       [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

/// Elementwise minimum of same-shaped tensors; ties route the gradient to `a`.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("minimum shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(av[i], bv[i]);
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto& A = *n.inputs[0];
    auto& B = *n.inputs[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      bool take_a = A.value[i] <= B.value[i];
      if (take_a && A.requires_grad) A.grad_buffer()[i] += n.grad[i];
      if (!take_a && B.requires_grad) B.grad_buffer()[i] += n.grad[i];
    }
  });
}

/// Same values, cut from the tape.
inline Tensor detach(const Tensor& x) { return Tensor(x.shape(), std::vector<double>(x.data().begin(), x.data().end())); }

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  auto v = x.data();
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  return detail::make_result({1}, {s}, {x}, [](detail::Node& n) {
    auto& g = n.inputs[0]->grad_buffer();
    for (auto& e : g) e += n.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Sum over trailing dimensions: [m x n] -> [m x 1].
inline Tensor row_sum(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m, 0.0);
  auto v = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += v[i * n + j];
  return detail::make_result({m, 1}, std::move(out), {x}, [m, n](detail::Node& nd) {
    auto& g = nd.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += nd.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& nd) {
    CMap dc(nd.grad.data(), m, n);
    auto& A = *nd.inputs[0];
    auto& B = *nd.inputs[1];
    if (A.requires_grad)
      MMap(A.grad_buffer().data(), m, k).noalias() += dc * CMap(B.value.data(), k, n).transpose();
    if (B.requires_grad)
      MMap(B.grad_buffer().data(), k, n).noalias() += CMap(A.value.data(), m, k).transpose() * dc;
  });
}

/// x[m x n] + bias broadcast over rows (bias has n elements).
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n)
    throw DimensionError("bias of shape " + shape_str(bias.shape()) + " does not fit " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return detail::make_result(x.shape(), std::move(out), {x, bias}, [m, n](detail::Node& nd) {
    auto& X = *nd.inputs[0];
    auto& B = *nd.inputs[1];
    if (X.requires_grad) {
      auto& g = X.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += nd.grad[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing

/// out.flat[i] = x.flat[index[i]], or 0 where index[i] < 0. Backward scatters.
inline Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index) {
  if (detail::numel_of(out_shape) != index.size())
    throw DimensionError("gather index length does not match " + shape_str(out_shape));
  const auto n = static_cast<std::int64_t>(x.numel());
  std::vector<double> out(index.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw DimensionError("gather index out of range for " + shape_str(x.shape()));
    out[i] = index[i] < 0 ? 0.0 : xv[static_cast<std::size_t>(index[i])];
  }
  auto idx = std::make_shared<const std::vector<std::int64_t>>(std::move(index));
  return detail::make_result(std::move(out_shape), std::move(out), {x}, [idx](detail::Node& nd) {
    auto& g = nd.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx->size(); ++i)
      if ((*idx)[i] >= 0) g[static_cast<std::size_t>((*idx)[i])] += nd.grad[i];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (detail::numel_of(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(std::move(shape), std::move(out), {x}, [](detail::Node& nd) {
    auto& g = nd.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
  });
}

inline Tensor transpose(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<std::int64_t> idx(m * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) idx[j * m + i] = static_cast<std::int64_t>(i * n + j);
  return gather(x, {n, m}, std::move(idx));
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) throw DimensionError("slice_cols out of range for " + shape_str(x.shape()));
  const std::size_t w = end - begin;
  std::vector<std::int64_t> idx(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) idx[i * w + j] = static_cast<std::int64_t>(i * n + begin + j);
  return gather(x, {m, w}, std::move(idx));
}

/// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > m) throw DimensionError("slice_rows out of range for " + shape_str(x.shape()));
  std::vector<std::int64_t> idx((end - begin) * n);
  std::iota(idx.begin(), idx.end(), static_cast<std::int64_t>(begin * n));
  return gather(x, {end - begin, n}, std::move(idx));
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m)
      throw DimensionError("concat_cols row mismatch: " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    off += widths[k];
  }
  return detail::make_result({m, total}, std::move(out), parts, [m, total, widths](detail::Node& nd) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (nd.inputs[k]->requires_grad) {
        auto& g = nd.inputs[k]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += nd.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

// ---------------------------------------------------------------------------
// Causal 1-D convolution

enum class ConvAlign {
  start,  ///< output t reads inputs at t*stride - k*dilation
  end,    ///< shifted so the last output reads the last input
};

namespace detail {
inline std::size_t conv_out_len(std::size_t T, std::size_t stride) { return (T + stride - 1) / stride; }
inline std::int64_t conv_offset(std::size_t T, std::size_t stride, ConvAlign align) {
  if (align == ConvAlign::start) return 0;
  return static_cast<std::int64_t>(T - 1) - static_cast<std::int64_t>((conv_out_len(T, stride) - 1) * stride);
}
}  // namespace detail

/// signal [T x C_in], kernel [K x C_in x C_out] -> [ceil(T/stride) x C_out].
/// out[t][o] = sum_k sum_c kernel[k][c][o] * signal[t*stride + off - k*dilation][c],
/// reading zeros left of index 0.
inline Tensor conv1d_causal(const Tensor& signal, const Tensor& kernel, std::size_t stride, std::size_t dilation,
                            ConvAlign align = ConvAlign::start) {
  if (stride == 0 || dilation == 0) throw ParameterError("conv1d_causal: stride and dilation must be positive");
  const std::size_t T = signal.rows(), C = signal.cols();
  if (kernel.shape().size() != 3 || kernel.dim(1) != C)
    throw DimensionError("conv1d_causal: kernel " + shape_str(kernel.shape()) + " does not fit signal " +
                         shape_str(signal.shape()));
  const std::size_t K = kernel.dim(0), O = kernel.dim(2);
  const std::size_t To = detail::conv_out_len(T, stride);
  const std::int64_t off = detail::conv_offset(T, stride, align);
  auto x = signal.data();
  auto w = kernel.data();
  std::vector<double> out(To * O, 0.0);
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      std::int64_t src = static_cast<std::int64_t>(t * stride) + off - static_cast<std::int64_t>(k * dilation);
      if (src < 0) continue;
      for (std::size_t c = 0; c < C; ++c) {
        double xv = x[static_cast<std::size_t>(src) * C + c];
        for (std::size_t o = 0; o < O; ++o) out[t * O + o] += w[(k * C + c) * O + o] * xv;
      }
    }
  return detail::make_result({To, O}, std::move(out), {signal, kernel},
                             [To, K, C, O, stride, dilation, off](detail::Node& nd) {
                               auto& X = *nd.inputs[0];
                               auto& W = *nd.inputs[1];
                               for (std::size_t t = 0; t < To; ++t)
                                 for (std::size_t k = 0; k < K; ++k) {
                                   std::int64_t src = static_cast<std::int64_t>(t * stride) + off -
                                                      static_cast<std::int64_t>(k * dilation);
                                   if (src < 0) continue;
                                   auto s = static_cast<std::size_t>(src);
                                   for (std::size_t c = 0; c < C; ++c)
                                     for (std::size_t o = 0; o < O; ++o) {
                                       double g = nd.grad[t * O + o];
                                       if (X.requires_grad) X.grad_buffer()[s * C + c] += g * W.value[(k * C + c) * O + o];
                                       if (W.requires_grad) W.grad_buffer()[(k * C + c) * O + o] += g * X.value[s * C + c];
                                     }
                                 }
                             });
}

/// Depthwise variant: one shared kernel [K] applied to every column of signal [T x C].
inline Tensor conv1d_depthwise(const Tensor& signal, const Tensor& kernel, std::size_t stride, std::size_t dilation,
                               ConvAlign align = ConvAlign::start) {
  if (stride == 0 || dilation == 0) throw ParameterError("conv1d_depthwise: stride and dilation must be positive");
  const std::size_t T = signal.rows(), C = signal.cols(), K = kernel.numel();
  const std::size_t To = detail::conv_out_len(T, stride);
  const std::int64_t off = detail::conv_offset(T, stride, align);
  auto x = signal.data();
  auto w = kernel.data();
  std::vector<double> out(To * C, 0.0);
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t k = 0; k < K; ++k) {
      std::int64_t src = static_cast<std::int64_t>(t * stride) + off - static_cast<std::int64_t>(k * dilation);
      if (src < 0) continue;
      const double* xr = x.data() + static_cast<std::size_t>(src) * C;
      double* orow = out.data() + t * C;
      for (std::size_t c = 0; c < C; ++c) orow[c] += w[k] * xr[c];
    }
  return detail::make_result({To, C}, std::move(out), {signal, kernel},
                             [To, K, C, stride, dilation, off](detail::Node& nd) {
                               auto& X = *nd.inputs[0];
                               auto& W = *nd.inputs[1];
                               for (std::size_t t = 0; t < To; ++t)
                                 for (std::size_t k = 0; k < K; ++k) {
                                   std::int64_t src = static_cast<std::int64_t>(t * stride) + off -
                                                      static_cast<std::int64_t>(k * dilation);
                                   if (src < 0) continue;
                                   auto s = static_cast<std::size_t>(src);
                                   const double* g = nd.grad.data() + t * C;
                                   if (X.requires_grad) {
                                     double* gx = X.grad_buffer().data() + s * C;
                                     for (std::size_t c = 0; c < C; ++c) gx[c] += g[c] * W.value[k];
                                   }
                                   if (W.requires_grad) {
                                     double acc = 0.0;
                                     const double* xr = X.value.data() + s * C;
                                     for (std::size_t c = 0; c < C; ++c) acc += g[c] * xr[c];
                                     W.grad_buffer()[k] += acc;
                                   }
                                 }
                             });
}

// ---------------------------------------------------------------------------
// Reparameterised Gaussian sample: mean + exp(log_std) * noise.
// `noise` is treated as a constant.

inline Tensor gaussian_rsample(const Tensor& mean, const Tensor& log_std, const Tensor& noise) {
  if (mean.shape() != log_std.shape() || mean.shape() != noise.shape())
    throw DimensionError("gaussian_rsample shape mismatch: " + shape_str(mean.shape()) + ", " +
                         shape_str(log_std.shape()) + ", " + shape_str(noise.shape()));
  std::vector<double> out(mean.numel());
  auto m = mean.data(), s = log_std.data(), e = noise.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] + std::exp(s[i]) * e[i];
  return detail::make_result(mean.shape(), std::move(out), {mean, log_std, detach(noise)}, [](detail::Node& nd) {
    auto& M = *nd.inputs[0];
    auto& S = *nd.inputs[1];
    auto& E = *nd.inputs[2];
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      if (M.requires_grad) M.grad_buffer()[i] += nd.grad[i];
      if (S.requires_grad) S.grad_buffer()[i] += nd.grad[i] * std::exp(S.value[i]) * E.value[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Operator sugar

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator+(const Tensor& x, double c) { return add_scalar(x, c); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

}  // namespace wisdom
