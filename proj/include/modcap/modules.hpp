#pragma once

// Attribute modules (color, count, size, spatial, semantic) and the adaptive
// module attention that composes their word vectors with the visual
// initial estimate.

#include <array>

#include "modcap/autodiff.hpp"
#include "modcap/lexicon.hpp"

namespace modcap {

template <typename T>
struct AttributeModuleVars {
  Var<T> w1;     // [D_mid x (D_v + D_h + D_e)]
  Var<T> b1;     // [D_mid]
  Var<T> w2;     // [labels x D_mid]
  Var<T> b2;     // [labels]
  Var<T> embed;  // [D_e x labels]
};

template <typename T>
struct ModuleAttentionVars {
  Var<T> w_z;  // [1 x D_att]
  Var<T> w_m;  // [D_att x D_e]
  Var<T> w_g;  // [D_att x D_h]
  Var<T> w_i;  // [D_att x D_e]
};

template <typename T>
Var<T> module_hidden_input(Var<T> attended, Var<T> prev_semantic_hidden, Var<T> object_word) {
  return concat({attended, prev_semantic_hidden, object_word});
}

/// Distribution over one module's labels from [v~_t; h^s_{t-1}; w^obj_t].
template <typename T>
Var<T> module_predict(const AttributeModuleVars<T>& m, Var<T> module_input) {
  auto hidden = tanh(add(matmul(m.w1, module_input), m.b1));
  return softmax(add(matmul(m.w2, hidden), m.b2));
}

template <typename T>
Var<T> module_predict(const std::array<AttributeModuleVars<T>, kNumModules>& mods, std::size_t module,
                      Var<T> attended, Var<T> prev_semantic_hidden, Var<T> object_word) {
  if (module >= kNumModules) throw ContractError("unknown attribute module " + std::to_string(module));
  return module_predict(mods[module], module_hidden_input(attended, prev_semantic_hidden, object_word));
}

/// Expected label embedding E_m P.
template <typename T>
Var<T> module_word_vector(const AttributeModuleVars<T>& m, Var<T> probs) {
  return matmul(m.embed, probs);
}

template <typename T>
struct ModuleAttentionResult {
  Var<T> scores;      // [k + 1] pre-softmax
  Var<T> alpha_hat;   // [k + 1]
  Var<T> alpha;       // [k], softmax over module slots only
  Var<T> beta;        // scalar, alpha_hat[k]
  Var<T> composed;    // [D_e]
};

/// z_m = w_z . tanh(W_m w^m + W_g h), z_init = w_z . tanh(W_i w^init + W_g h);
/// alpha = softmax(z), alpha_hat = softmax([z; z_init]), beta = alpha_hat[k],
/// c = sum_m alpha_m w^m, c_hat = beta w^init + (1 - beta) c.
template <typename T>
ModuleAttentionResult<T> module_attention(const ModuleAttentionVars<T>& a, std::span<const Var<T>> module_words,
                                          Var<T> init_word, Var<T> prev_semantic_hidden) {
  if (module_words.empty()) throw DimensionError("module_attention: no module word vectors");
  auto context = matmul(a.w_g, prev_semantic_hidden);
  std::vector<Var<T>> scores;
  for (const auto& w : module_words) scores.push_back(matmul(a.w_z, tanh(add(matmul(a.w_m, w), context))));
  auto z = concat(std::span<const Var<T>>(scores));
  scores.push_back(matmul(a.w_z, tanh(add(matmul(a.w_i, init_word), context))));
  auto z_hat = concat(std::span<const Var<T>>(scores));

  ModuleAttentionResult<T> r;
  r.scores = z_hat;
  r.alpha_hat = softmax(z_hat);
  r.alpha = softmax(z);
  r.beta = at(r.alpha_hat, module_words.size());
  Var<T> c = mul(at(r.alpha, 0), module_words[0]);
  for (std::size_t i = 1; i < module_words.size(); ++i) c = add(c, mul(at(r.alpha, i), module_words[i]));
  r.composed = add(mul(r.beta, init_word), mul(one_minus(r.beta), c));
  return r;
}

}  // namespace modcap
