#pragma once

// Eager, tape-based reverse-mode differentiation over Tensor<T>.
//
// Every operation appends a node holding its forward value and a closure that
// scatters the node's adjoint into its inputs. Nodes are only ever appended,
// so the tape is topologically ordered by construction and backward() is a
// single reverse sweep.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>

#include "modcap/tensor.hpp"

namespace modcap {

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  T item() const { return value().item(); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;
  static constexpr std::size_t kNoParam = std::numeric_limits<std::size_t>::max();

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> variable(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr);
  }
  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to an external parameter slot; see accumulate_param_grads.
  Var<T> parameter(const Tensor<T>& value, std::size_t param_id, bool trainable = true) {
    auto v = push(value, trainable, nullptr);
    nodes_[v.id].param_id = param_id;
    return v;
  }

  Var<T> push(Tensor<T> value, bool requires_grad, Backward bw) {
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, std::move(bw), kNoParam});
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }

  /// Adjoint of v; zeros if backward never reached it.
  Tensor<T> grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id);
    return n.grad ? *n.grad : Tensor<T>(n.value.shape(), T(0));
  }

  /// Adjoint buffer for node id, allocated on first touch.
  Tensor<T>& grad_ref(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.grad) n.grad.emplace(n.value.shape(), T(0));
    return *n.grad;
  }
  const Tensor<T>& upstream(std::size_t id) const { return *nodes_[id].grad; }

  void zero_grad() {
    for (auto& n : nodes_) n.grad.reset();
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("backward: variable belongs to another tape");
    const auto& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1)
      throw ContractError("backward: loss must be a scalar, got shape " + shape_str(lv.shape()));
    grad_ref(loss.id)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.grad || !n.requires_grad || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  /// Adds the adjoints of parameter leaves into sink(param_id, grad).
  template <typename Sink>
  void accumulate_param_grads(Sink&& sink) const {
    for (const auto& n : nodes_)
      if (n.param_id != kNoParam && n.grad) sink(n.param_id, *n.grad);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad;
    Backward backward;
    std::size_t param_id;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <typename T>
Tape<T>* same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return a.tape;
}

template <typename T>
void add_into(Tape<T>& tape, std::size_t target, const Tensor<T>& g) {
  if (!tape.requires_grad(target)) return;
  auto& dst = tape.grad_ref(target);
  T* d = dst.data();
  const T* s = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.size() == 1 && a.rank() <= 1) return Broadcast::kLeftScalar;
  if (b.size() == 1 && b.rank() <= 1) return Broadcast::kRightScalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Unary elementwise op whose derivative is expressed via input x and output y.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, F f, D dfdx) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto* tape = x.tape;
  const std::size_t xi = x.id;
  return tape->push(std::move(out), tape->requires_grad(x), [xi, dfdx](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto& g = t.upstream(self);
    const auto& xv = t.value(xi);
    const auto& yv = t.value(self);
    auto& dst = t.grad_ref(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto* tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto kind = detail::broadcast_kind(av, bv, "add");
  Tensor<T> out(kind == detail::Broadcast::kLeftScalar ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = av[kind == detail::Broadcast::kLeftScalar ? 0 : i] +
             bv[kind == detail::Broadcast::kRightScalar ? 0 : i];
  const std::size_t ai = a.id, bi = b.id;
  const bool rg = tape->requires_grad(a) || tape->requires_grad(b);
  return tape->push(std::move(out), rg, [ai, bi, kind](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    T total = T(0);
    if (kind != detail::Broadcast::kSame)
      for (std::size_t i = 0; i < g.size(); ++i) total += g[i];
    if (t.requires_grad(ai)) {
      if (kind == detail::Broadcast::kLeftScalar) t.grad_ref(ai)[0] += total;
      else detail::add_into(t, ai, g);
    }
    if (t.requires_grad(bi)) {
      if (kind == detail::Broadcast::kRightScalar) t.grad_ref(bi)[0] += total;
      else detail::add_into(t, bi, g);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  return detail::unary(x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> neg(Var<T> x) { return scale(x, T(-1)); }

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) { return add(a, neg(b)); }

/// 1 - x
template <typename T>
Var<T> one_minus(Var<T> x) {
  return detail::unary(x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto* tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto kind = detail::broadcast_kind(av, bv, "mul");
  Tensor<T> out(kind == detail::Broadcast::kLeftScalar ? bv.shape() : av.shape());
  const bool ls = kind == detail::Broadcast::kLeftScalar, rs = kind == detail::Broadcast::kRightScalar;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[ls ? 0 : i] * bv[rs ? 0 : i];
  const std::size_t ai = a.id, bi = b.id;
  const bool rg = tape->requires_grad(a) || tape->requires_grad(b);
  return tape->push(std::move(out), rg, [ai, bi, ls, rs](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    if (t.requires_grad(ai)) {
      auto& da = t.grad_ref(ai);
      for (std::size_t i = 0; i < g.size(); ++i) da[ls ? 0 : i] += g[i] * bv[rs ? 0 : i];
    }
    if (t.requires_grad(bi)) {
      auto& db = t.grad_ref(bi);
      for (std::size_t i = 0; i < g.size(); ++i) db[rs ? 0 : i] += g[i] * av[ls ? 0 : i];
    }
  });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(x, [](T v) { return stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

/// log(max(x, eps)); zero derivative where the clamp is active.
template <typename T>
Var<T> log_clamped(Var<T> x, T eps) {
  return detail::unary(
      x, [eps](T v) { return std::log(v < eps ? eps : v); },
      [eps](T v, T) { return v < eps ? T(0) : T(1) / v; });
}

// ---- reductions and structure ---------------------------------------------

template <typename T>
Var<T> sum(Var<T> x) {
  const auto& xv = x.value();
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  const std::size_t xi = x.id;
  return x.tape->push(Tensor<T>::scalar(s), x.tape->requires_grad(x), [xi](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const T g = t.upstream(self)[0];
    auto& dst = t.grad_ref(xi);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g;
  });
}

/// Sum of a list of scalars (or equal-shaped tensors).
template <typename T>
Var<T> sum_all(std::span<const Var<T>> xs) {
  if (xs.empty()) throw ContractError("sum_all: empty list");
  Var<T> acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto* tape = detail::same_tape(a, b);
  Tensor<T> out = matmul_values(a.value(), b.value());
  const std::size_t ai = a.id, bi = b.id;
  const bool rg = tape->requires_grad(a) || tape->requires_grad(b);
  return tape->push(std::move(out), rg, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    const std::size_t m = av.shape()[0], k = av.shape()[1];
    const std::size_t n = bv.rank() == 2 ? bv.shape()[1] : 1;
    if (t.requires_grad(ai)) {
      // dA = G B^T
      auto& da = t.grad_ref(ai);
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T* brow = bv.data() + p * n;
          T s = T(0);
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          da[i * k + p] += s;
        }
      }
    }
    if (t.requires_grad(bi)) {
      // dB = A^T G
      auto& db = t.grad_ref(bi);
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T a_ip = av[i * k + p];
          if (a_ip == T(0)) continue;
          T* drow = db.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += a_ip * grow[j];
        }
      }
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const std::size_t xi = x.id;
  return x.tape->push(transpose_values(x.value()), x.tape->requires_grad(x),
                      [xi](Tape<T>& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        detail::add_into(t, xi, transpose_values(t.upstream(self)));
                      });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
  const std::size_t xi = x.id;
  if (shape_numel(s) != x.value().size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
  return x.tape->push(x.value().reshaped(std::move(s)), x.tape->requires_grad(x),
                      [xi](Tape<T>& t, std::size_t self) {
                        if (!t.requires_grad(xi)) return;
                        auto& dst = t.grad_ref(xi);
                        const auto& g = t.upstream(self);
                        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                      });
}

/// Concatenation of rank-1 tensors.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  auto* tape = parts[0].tape;
  std::size_t n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape != tape) throw ContractError("concat: operands live on different tapes");
    if (p.value().rank() != 1) throw DimensionError("concat: expected vectors, got " + shape_str(p.shape()));
    n += p.value().size();
    rg = rg || tape->requires_grad(p);
  }
  Tensor<T> out(Shape{n});
  std::vector<std::size_t> ids;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + off);
    off += v.size();
    ids.push_back(p.id);
  }
  return tape->push(std::move(out), rg, [ids = std::move(ids)](Tape<T>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t len = t.value(id).size();
      if (t.requires_grad(id)) {
        auto& dst = t.grad_ref(id);
        for (std::size_t i = 0; i < len; ++i) dst[i] += g[off + i];
      }
      off += len;
    }
  });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Contiguous sub-vector [offset, offset + len).
template <typename T>
Var<T> slice(Var<T> x, std::size_t offset, std::size_t len) {
  const auto& xv = x.value();
  if (xv.rank() != 1 || offset + len > xv.size() || len == 0)
    throw DimensionError("slice: [" + std::to_string(offset) + ", +" + std::to_string(len) + ") out of " +
                         shape_str(xv.shape()));
  Tensor<T> out(Shape{len});
  std::copy(xv.data() + offset, xv.data() + offset + len, out.data());
  const std::size_t xi = x.id;
  return x.tape->push(std::move(out), x.tape->requires_grad(x), [xi, offset](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto& g = t.upstream(self);
    auto& dst = t.grad_ref(xi);
    for (std::size_t i = 0; i < g.size(); ++i) dst[offset + i] += g[i];
  });
}

/// Element i of a flat tensor as a scalar.
template <typename T>
Var<T> at(Var<T> x, std::size_t i) {
  if (i >= x.value().size()) throw DimensionError("at: index out of range for " + shape_str(x.shape()));
  const std::size_t xi = x.id;
  return x.tape->push(Tensor<T>::scalar(x.value()[i]), x.tape->requires_grad(x),
                      [xi, i](Tape<T>& t, std::size_t self) {
                        if (t.requires_grad(xi)) t.grad_ref(xi)[i] += t.upstream(self)[0];
                      });
}

/// Row r of a matrix as a vector (embedding lookup).
template <typename T>
Var<T> row(Var<T> m, std::size_t r) {
  const auto& mv = m.value();
  if (mv.rank() != 2 || r >= mv.shape()[0])
    throw DimensionError("row: index " + std::to_string(r) + " out of " + shape_str(mv.shape()));
  const std::size_t c = mv.shape()[1];
  Tensor<T> out(Shape{c});
  std::copy(mv.data() + r * c, mv.data() + (r + 1) * c, out.data());
  const std::size_t mi = m.id;
  return m.tape->push(std::move(out), m.tape->requires_grad(m), [mi, r, c](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(mi)) return;
    const auto& g = t.upstream(self);
    auto& dst = t.grad_ref(mi);
    for (std::size_t j = 0; j < c; ++j) dst[r * c + j] += g[j];
  });
}

/// M[r x c] + v[r], v broadcast along columns.
template <typename T>
Var<T> add_colwise(Var<T> m, Var<T> v) {
  auto* tape = detail::same_tape(m, v);
  const auto& mv = m.value();
  const auto& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || vv.size() != mv.shape()[0])
    throw DimensionError("add_colwise: incompatible shapes " + shape_str(mv.shape()) + " and " +
                         shape_str(vv.shape()));
  const std::size_t r = mv.shape()[0], c = mv.shape()[1];
  Tensor<T> out = mv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += vv[i];
  const std::size_t mi = m.id, vi = v.id;
  return tape->push(std::move(out), tape->requires_grad(m) || tape->requires_grad(v),
                    [mi, vi, r, c](Tape<T>& t, std::size_t self) {
                      const auto& g = t.upstream(self);
                      detail::add_into(t, mi, g);
                      if (t.requires_grad(vi)) {
                        auto& dv = t.grad_ref(vi);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) dv[i] += g(i, j);
                      }
                    });
}

/// M[r x c] + v[c], v broadcast along rows.
template <typename T>
Var<T> add_rowwise(Var<T> m, Var<T> v) {
  auto* tape = detail::same_tape(m, v);
  const auto& mv = m.value();
  const auto& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || vv.size() != mv.shape()[1])
    throw DimensionError("add_rowwise: incompatible shapes " + shape_str(mv.shape()) + " and " +
                         shape_str(vv.shape()));
  const std::size_t r = mv.shape()[0], c = mv.shape()[1];
  Tensor<T> out = mv;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += vv[j];
  const std::size_t mi = m.id, vi = v.id;
  return tape->push(std::move(out), tape->requires_grad(m) || tape->requires_grad(v),
                    [mi, vi, r, c](Tape<T>& t, std::size_t self) {
                      const auto& g = t.upstream(self);
                      detail::add_into(t, mi, g);
                      if (t.requires_grad(vi)) {
                        auto& dv = t.grad_ref(vi);
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) dv[j] += g(i, j);
                      }
                    });
}

/// Numerically stable softmax of a vector.
template <typename T>
Tensor<T> softmax_values(const Tensor<T>& x) {
  if (x.rank() > 1) throw DimensionError("softmax: expected a vector, got " + shape_str(x.shape()));
  Tensor<T> out(x.shape());
  T mx = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
  T z = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= z;
  return out;
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const std::size_t xi = x.id;
  return x.tape->push(softmax_values(x.value()), x.tape->requires_grad(x), [xi](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const auto& g = t.upstream(self);
    const auto& y = t.value(self);
    T dot = T(0);
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    auto& dst = t.grad_ref(xi);
    for (std::size_t i = 0; i < y.size(); ++i) dst[i] += y[i] * (g[i] - dot);
  });
}

/// Noisy-or pooling over the rows of P[n x d]: out_j = 1 - prod_i (1 - P_ij).
/// Evaluated as 1 - exp(sum_i log1p(-p)) with p clamped to 1 - 1e-12.
inline constexpr double kNoisyOrMaxProb = 1.0 - 1e-12;

template <typename T>
Var<T> noisy_or_pool(Var<T> p) {
  const auto& pv = p.value();
  if (pv.rank() != 2) throw DimensionError("noisy_or: expected [regions x labels], got " + shape_str(pv.shape()));
  const std::size_t n = pv.shape()[0], d = pv.shape()[1];
  Tensor<T> out(Shape{d});
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::log1p(-std::min<double>(pv(i, j), kNoisyOrMaxProb));
    out[j] = T(-std::expm1(acc));
  }
  const std::size_t pi = p.id;
  return p.tape->push(std::move(out), p.tape->requires_grad(p), [pi, n, d](Tape<T>& t, std::size_t self) {
    if (!t.requires_grad(pi)) return;
    const auto& g = t.upstream(self);
    const auto& pv = t.value(pi);
    auto& dst = t.grad_ref(pi);
    // d out_j / d p_ij = prod_{l != i} (1 - p_lj)
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        if (pv(i, j) > kNoisyOrMaxProb) continue;
        double rest = 1.0;
        for (std::size_t l = 0; l < n; ++l)
          if (l != i) rest *= 1.0 - std::min<double>(pv(l, j), kNoisyOrMaxProb);
        dst(i, j) += g[j] * T(rest);
      }
    }
  });
}

/// Summed binary cross-entropy  -sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)],
/// p clamped to [eps, 1 - eps]; zero derivative where the clamp is active.
template <typename T>
Var<T> binary_cross_entropy(Var<T> p, const Tensor<T>& target, T eps = T(1e-12)) {
  const auto& pv = p.value();
  if (pv.size() != target.size())
    throw DimensionError("binary_cross_entropy: prediction " + shape_str(pv.shape()) + " vs target " +
                         shape_str(target.shape()));
  T loss = T(0);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T q = std::clamp(pv[i], eps, T(1) - eps);
    loss -= target[i] * std::log(q) + (T(1) - target[i]) * std::log1p(-q);
  }
  const std::size_t pi = p.id;
  return p.tape->push(Tensor<T>::scalar(loss), p.tape->requires_grad(p),
                      [pi, target, eps](Tape<T>& t, std::size_t self) {
                        if (!t.requires_grad(pi)) return;
                        const T g = t.upstream(self)[0];
                        const auto& pv = t.value(pi);
                        auto& dst = t.grad_ref(pi);
                        for (std::size_t i = 0; i < pv.size(); ++i) {
                          const T q = pv[i];
                          if (q < eps || q > T(1) - eps) continue;
                          dst[i] += g * (-target[i] / q + (T(1) - target[i]) / (T(1) - q));
                        }
                      });
}

/// -log p[index], with p clamped below at eps.
template <typename T>
Var<T> nll(Var<T> p, std::size_t index, T eps = T(1e-12)) {
  return neg(log_clamped(at(p, index), eps));
}

}  // namespace modcap
