#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "modcap/model.hpp"
#include "modcap/supervision.hpp"

namespace modcap {

inline constexpr double kProbEps = 1e-12;

/// -sum_t log p_t[target_t]
template <typename T>
Var<T> sentence_loss(std::span<const Var<T>> distributions, std::span<const std::size_t> targets) {
  if (distributions.size() != targets.size())
    throw ContractError("sentence_loss: " + std::to_string(distributions.size()) + " distributions for " +
                        std::to_string(targets.size()) + " targets");
  if (distributions.empty()) throw ContractError("sentence_loss: empty sequence");
  std::vector<Var<T>> terms;
  for (std::size_t t = 0; t < targets.size(); ++t) terms.push_back(nll(distributions[t], targets[t], T(kProbEps)));
  return sum_all(std::span<const Var<T>>(terms));
}

/// Summed sigmoid cross-entropy against a multi-hot object vector.
template <typename T>
Var<T> mil_loss(Var<T> probs, const std::vector<double>& present) {
  Tensor<T> y(Shape{present.size()});
  for (std::size_t i = 0; i < present.size(); ++i) y[i] = T(present[i]);
  return binary_cross_entropy(probs, y, T(kProbEps));
}

template <typename T>
Var<T> zero_scalar(Tape<T>& tape) {
  return tape.constant(Tensor<T>::scalar(T(0)));
}

template <typename T>
Tensor<T> one_hot(std::size_t n, std::size_t hot) {
  Tensor<T> t(Shape{n});
  t[hot] = T(1);
  return t;
}

/// sum_t M^m_t * BCE(P^m_t, onehot(label_t)) for one module.
template <typename T>
Var<T> attribute_module_loss(Tape<T>& tape, std::span<const Var<T>> module_probs, std::size_t module,
                             const WordSupervision& sup) {
  if (module_probs.size() != sup.size())
    throw ContractError("attribute_module_loss: " + std::to_string(module_probs.size()) + " steps vs " +
                        std::to_string(sup.size()) + " labels");
  std::vector<Var<T>> terms;
  for (std::size_t t = 0; t < sup.size(); ++t) {
    if (!sup.module_masks[t][module]) continue;
    const auto n = module_probs[t].value().size();
    const int label = sup.module_labels[t];
    if (label < 0 || std::size_t(label) >= n)
      throw ContractError("attribute_module_loss: label " + std::to_string(label) + " outside module '" +
                          kModuleNames[module] + "' with " + std::to_string(n) + " labels");
    terms.push_back(binary_cross_entropy(module_probs[t], one_hot<T>(n, std::size_t(label)), T(kProbEps)));
  }
  if (terms.empty()) return zero_scalar(tape);
  return sum_all(std::span<const Var<T>>(terms));
}

/// sum_t M_t * BCE(alpha_hat_t, y_{m,t}).
template <typename T>
Var<T> composition_loss(Tape<T>& tape, std::span<const Var<T>> alpha_hats, const WordSupervision& sup) {
  if (alpha_hats.size() != sup.size())
    throw ContractError("composition_loss: " + std::to_string(alpha_hats.size()) + " steps vs " +
                        std::to_string(sup.size()) + " labels");
  std::vector<Var<T>> terms;
  for (std::size_t t = 0; t < sup.size(); ++t) {
    if (!sup.any_attribute(t)) continue;
    terms.push_back(binary_cross_entropy(alpha_hats[t], one_hot<T>(kNumModules + 1, sup.active_module[t]), T(kProbEps)));
  }
  if (terms.empty()) return zero_scalar(tape);
  return sum_all(std::span<const Var<T>>(terms));
}

inline constexpr std::size_t kNumLossTerms = 4 + kNumModules + 1;

inline const std::array<std::string, kNumLossTerms>& loss_term_names() {
  static const std::array<std::string, kNumLossTerms> names = {
      "loss_v", "loss_s", "loss_mil_att", "loss_mil_or", "loss_color", "loss_count",
      "loss_size", "loss_spatial", "loss_semantic", "loss_comp"};
  return names;
}

template <typename T>
struct LossTerms {
  std::array<Var<T>, kNumLossTerms> terms;  // order of loss_term_names()
  Var<T> total;

  std::array<double, kNumLossTerms> values() const {
    std::array<double, kNumLossTerms> v{};
    for (std::size_t i = 0; i < kNumLossTerms; ++i) v[i] = double(terms[i].item());
    return v;
  }
};

/// Unweighted sum of all terms.
template <typename T>
Var<T> total_loss(std::span<const Var<T>> terms) {
  return sum_all(terms);
}

/// Assembles every loss term for one teacher-forced caption. Terms switched
/// off by the ablation or by `include_mil == false` are constant zeros.
template <typename T>
LossTerms<T> compute_losses(Tape<T>& tape, const ModelConfig& cfg, const SceneContext<T>& ctx,
                            const std::vector<StepOutputs<T>>& steps, const CaptionExample& ex, bool include_mil) {
  if (steps.size() != ex.length()) throw ContractError("compute_losses: step count differs from caption length");
  std::vector<Var<T>> init, word, alphas;
  for (const auto& s : steps) {
    init.push_back(s.init_probs);
    word.push_back(s.word_probs);
    alphas.push_back(s.alpha_hat);
  }
  LossTerms<T> L;
  L.terms[0] = sentence_loss(std::span<const Var<T>>(init), std::span<const std::size_t>(ex.targets));
  L.terms[1] = sentence_loss(std::span<const Var<T>>(word), std::span<const std::size_t>(ex.targets));
  const bool mil = include_mil && !cfg.ablation.no_mil;
  L.terms[2] = mil && ctx.p_att ? mil_loss(*ctx.p_att, ex.object_targets) : zero_scalar(tape);
  L.terms[3] = mil ? mil_loss(*ctx.p_or, ex.object_targets) : zero_scalar(tape);
  for (std::size_t m = 0; m < kNumModules; ++m) {
    if (cfg.ablation.no_mod) {
      L.terms[4 + m] = zero_scalar(tape);
      continue;
    }
    std::vector<Var<T>> pm;
    for (const auto& s : steps) pm.push_back(s.module_probs[m]);
    L.terms[4 + m] = attribute_module_loss(tape, std::span<const Var<T>>(pm), m, ex.supervision);
  }
  L.terms[4 + kNumModules] =
      cfg.ablation.no_mod ? zero_scalar(tape) : composition_loss(tape, std::span<const Var<T>>(alphas), ex.supervision);
  L.total = total_loss(std::span<const Var<T>>(L.terms));
  return L;
}

}  // namespace modcap
