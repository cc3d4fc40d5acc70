#pragma once

#include <array>
#include <vector>

#include "modcap/scene.hpp"

namespace modcap {

/// Per-timestep word-level targets derived from a caption.
struct WordSupervision {
  std::vector<std::array<bool, kNumModules>> module_masks;  // M_t^m
  std::vector<int> module_labels;                           // label index in the active module, -1 if none
  std::vector<std::size_t> active_module;                   // slot in [0, kNumModules], kInitSlot if none

  std::size_t size() const { return active_module.size(); }
  /// M_t: any attribute module active at t.
  bool any_attribute(std::size_t t) const {
    for (bool b : module_masks[t])
      if (b) return true;
    return false;
  }
};

/// Sets are disjoint, so each token selects at most one module.
inline WordSupervision derive_supervision(const TokenSeq& tokens, const SubcategoryLexicon& lex) {
  WordSupervision sup;
  for (const auto& tok : tokens) {
    std::array<bool, kNumModules> mask{};
    int label = -1;
    std::size_t slot = kInitSlot;
    for (std::size_t m = 0; m < kNumModules; ++m) {
      if (auto idx = lex.label_index(m, tok)) {
        mask[m] = true;
        label = int(*idx);
        slot = m;
        break;
      }
    }
    sup.module_masks.push_back(mask);
    sup.module_labels.push_back(label);
    sup.active_module.push_back(slot);
  }
  return sup;
}

/// One teacher-forced training example.
struct CaptionExample {
  std::size_t scene_index = 0;
  std::string scene_id;
  std::vector<std::size_t> inputs;   // <bos> y_1 .. y_T
  std::vector<std::size_t> targets;  // y_1 .. y_T <eos>
  WordSupervision supervision;       // aligned with targets
  std::vector<double> object_targets;  // multi-hot over base objects

  std::size_t length() const { return targets.size(); }
};

inline CaptionExample make_example(const Scene& scene, std::size_t scene_index, const TokenSeq& caption,
                                   const Vocabulary& vocab, const SubcategoryLexicon& lex) {
  CaptionExample ex;
  ex.scene_index = scene_index;
  ex.scene_id = scene.id;
  TokenSeq target_tokens;
  for (const auto& t : caption) target_tokens.push_back(to_lower(t));
  ex.inputs.push_back(kBos);
  for (const auto& t : target_tokens) {
    const auto id = vocab.lookup(t);
    ex.targets.push_back(id);
    ex.inputs.push_back(id);
  }
  ex.targets.push_back(kEos);
  target_tokens.push_back(kReservedTokens[kEos]);
  // Out-of-vocabulary words carry no attribute supervision.
  for (auto& t : target_tokens)
    if (!vocab.contains(t)) t = kReservedTokens[kUnk];
  ex.supervision = derive_supervision(target_tokens, lex);
  ex.object_targets.assign(lex.num_objects(), 0.0);
  for (const auto& o : scene.gt_objects)
    if (auto i = lex.object_index(o)) ex.object_targets[*i] = 1.0;
  return ex;
}

}  // namespace modcap
