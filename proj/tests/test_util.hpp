#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "modcap/modcap.hpp"

namespace modcap::testing {

using Fn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> d(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline double eval_scalar(const Fn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  return f(tape, vars).value().item();
}

/// Largest |analytic - central difference| / max(|analytic|, |numeric|, floor).
inline double max_rel_grad_error(const Fn& f, std::vector<Tensor<double>> inputs, double h = 1e-5,
                                 double floor = 1e-4) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  auto out = f(tape, vars);
  tape.backward(out);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto g = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + h;
      const double up = eval_scalar(f, inputs);
      inputs[k][i] = keep - h;
      const double down = eval_scalar(f, inputs);
      inputs[k][i] = keep;
      const double num = (up - down) / (2 * h);
      const double den = std::max({std::abs(g[i]), std::abs(num), floor});
      worst = std::max(worst, std::abs(g[i] - num) / den);
    }
  }
  return worst;
}

/// Sum of w_i * y_i with fixed random weights, so every output entry matters.
inline Var<double> weighted_sum(Tape<double>& tape, Var<double> y, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  auto w = tape.constant(random_tensor(y.value().shape(), rng));
  return sum(mul(y, w));
}

inline double sum_values(const Tensor<double>& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

/// Desk lexicon, small scenes, small model.
inline SceneConfig small_scene_config(double sigma = 0.1) {
  SceneConfig c;
  c.noise_sigma = sigma;
  return c;
}

inline ModelConfig tiny_model_config(std::size_t hidden = 8) {
  ModelConfig c;
  c.embed_dim = hidden;
  c.hidden_dim = hidden;
  c.attention_dim = hidden;
  return c;
}

/// Desk-sized config with small widths for the default lexicon.
inline ModelConfig tiny_desk_config(std::size_t vocab_size, std::size_t width = 4) {
  auto c = ModelConfig::desk(vocab_size, default_lexicon());
  c.embed_dim = width;
  c.hidden_dim = width;
  c.attention_dim = width;
  c.init_range = 0.3;
  return c;
}

using ModelLoss = std::function<Var<double>(Tape<double>&, const BoundParams<double>&)>;

inline Gradients<double> model_gradients(const Model<double>& m, const ModelLoss& f) {
  Tape<double> tape;
  auto b = m.bind(tape);
  tape.backward(f(tape, b));
  Gradients<double> g(m.params());
  g.collect(tape);
  return g;
}

inline double model_loss(const Model<double>& m, const ModelLoss& f) {
  Tape<double> tape;
  auto b = m.bind(tape);
  return f(tape, b).value().item();
}

/// Central-difference check on `samples` random parameter entries (all when 0).
inline double model_rel_grad_error(Model<double>& m, const ModelLoss& f, std::size_t samples, std::uint64_t seed = 3,
                                   double h = 1e-5, double floor = 1e-4) {
  const auto g = model_gradients(m, f);
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t p = 0; p < m.params().size(); ++p)
    for (std::size_t i = 0; i < m.params()[p].size(); ++i) entries.emplace_back(p, i);
  if (samples && samples < entries.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(samples);
  }
  double worst = 0.0;
  for (auto [p, i] : entries) {
    auto& x = m.params()[p][i];
    const double keep = x;
    x = keep + h;
    const double up = model_loss(m, f);
    x = keep - h;
    const double down = model_loss(m, f);
    x = keep;
    const double num = (up - down) / (2 * h);
    const double den = std::max({std::abs(g[p][i]), std::abs(num), floor});
    worst = std::max(worst, std::abs(g[p][i] - num) / den);
  }
  return worst;
}

}  // namespace modcap::testing
