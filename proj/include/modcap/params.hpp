#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "modcap/autodiff.hpp"

namespace modcap {

/// Named learnable tensors. Ids follow insertion order; iteration by name is
/// available through names_sorted() for serialization.
template <typename T>
class ParamStore {
 public:
  std::size_t add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_[name] = values_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& operator[](std::size_t i) { return values_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return values_[i]; }
  Tensor<T>& at(const std::string& name) { return values_[id(name)]; }
  const Tensor<T>& at(const std::string& name) const { return values_[id(name)]; }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  std::vector<std::size_t> ids_sorted_by_name() const {
    std::vector<std::size_t> out;
    for (const auto& [n, i] : index_) out.push_back(i);
    return out;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
};

/// One gradient buffer per parameter, same ids as the store.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore<T>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) grads_.emplace_back(params[i].shape(), T(0));
  }

  Tensor<T>& operator[](std::size_t i) { return grads_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero() {
    for (auto& g : grads_) g.fill(T(0));
  }

  void accumulate(std::size_t id, const Tensor<T>& g) {
    auto& dst = grads_.at(id);
    if (dst.size() != g.size())
      throw DimensionError("gradient for parameter " + std::to_string(id) + " has shape " + shape_str(g.shape()) +
                           ", expected " + shape_str(dst.shape()));
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < grads_.size(); ++i) accumulate(i, other[i]);
  }

  void collect(const Tape<T>& tape) {
    tape.accumulate_param_grads([this](std::size_t id, const Tensor<T>& g) { accumulate(id, g); });
  }

  double global_norm() const {
    double s = 0.0;
    for (const auto& g : grads_)
      for (std::size_t i = 0; i < g.size(); ++i) s += double(g[i]) * double(g[i]);
    return std::sqrt(s);
  }

  /// Rescales so the global L2 norm is at most max_norm; returns the norm before clipping.
  double clip_global_norm(double max_norm) {
    const double n = global_norm();
    if (n > max_norm && n > 0.0) {
      const T f = T(max_norm / n);
      for (auto& g : grads_)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f;
    }
    return n;
  }

 private:
  std::vector<Tensor<T>> grads_;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.8;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 5e-4;

  AdamState() = default;
  explicit AdamState(const ParamStore<T>& params, double lr = 5e-4, double b1 = 0.8, double b2 = 0.999,
                     double eps = 1e-8)
      : beta1(b1), beta2(b2), epsilon(eps), learning_rate(lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_moment.emplace_back(params[i].shape(), T(0));
      second_moment.emplace_back(params[i].shape(), T(0));
    }
  }
};

/// Bias-corrected Adam update. Parameters with frozen[i] == true are left
/// untouched (their moments too). The learning rate comes from the state.
template <typename T>
void adam_step(ParamStore<T>& params, const Gradients<T>& grads, AdamState<T>& state,
               const std::vector<bool>& frozen = {}) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw ContractError("adam_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i].shape() || state.first_moment[i].shape() != params[i].shape())
      throw ContractError("adam_step: shape mismatch on parameter '" + params.name(i) + "'");

  ++state.step_count;
  const double t = double(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!frozen.empty() && frozen[i]) continue;
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = T(mj);
      v[j] = T(vj);
      const double mhat = mj / c1;
      const double vhat = vj / c2;
      p[j] = T(double(p[j]) - state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

/// Uniform(-range, range) initialization from a seeded engine.
template <typename T>
Tensor<T> uniform_tensor(Shape shape, double range, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(-range, range);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(dist(rng));
  return t;
}

}  // namespace modcap
