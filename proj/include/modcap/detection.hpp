#pragma once

// Stacked noisy-or multiple-instance object detection with a per-timestep
// relu gate. Region detector and attention-MIL detector are combined by a
// second noisy-or; the result is gated by the language state and projected
// into word-embedding space.

#include "modcap/autodiff.hpp"

namespace modcap {

template <typename T>
struct DetectorVars {
  Var<T> region_w;  // [D_v x D_obj]
  Var<T> region_b;  // [D_obj]
  Var<T> att_w1;    // [D_mid x D_v]
  Var<T> att_b1;    // [D_mid]
  Var<T> att_w2;    // [D_obj x D_mid]
  Var<T> att_b2;    // [D_obj]
  Var<T> gate_wh;   // [D_obj x D_h]
  Var<T> gate_wv;   // [D_obj x D_v]
  Var<T> embed;     // [D_e x D_obj]
};

/// Per-region object probabilities, [regions x D_obj], entries in (0, 1).
template <typename T>
Var<T> region_object_probs(const DetectorVars<T>& d, Var<T> regions) {
  return sigmoid(add_rowwise(matmul(regions, d.region_w), d.region_b));
}

/// Image-level probability per object: 1 - prod over regions of (1 - p).
template <typename T>
Var<T> noisy_or(Var<T> region_probs) {
  return noisy_or_pool(region_probs);
}

/// Attention-MIL branch on the mean-pooled feature.
template <typename T>
Var<T> attention_mil(const DetectorVars<T>& d, Var<T> mean_feature) {
  auto hidden = tanh(add(matmul(d.att_w1, mean_feature), d.att_b1));
  return sigmoid(add(matmul(d.att_w2, hidden), d.att_b2));
}

/// 1 - (1 - a)(1 - b)
template <typename T>
Var<T> stack_noisy_or(Var<T> p_or, Var<T> p_att) {
  return one_minus(mul(one_minus(p_or), one_minus(p_att)));
}

/// relu(W_h h + W_v v) * P_I. Unbounded above; not a distribution.
template <typename T>
Var<T> gate_detections(const DetectorVars<T>& d, Var<T> prev_semantic_hidden, Var<T> attended, Var<T> image_probs) {
  auto gate = relu(add(matmul(d.gate_wh, prev_semantic_hidden), matmul(d.gate_wv, attended)));
  return mul(gate, image_probs);
}

template <typename T>
Var<T> object_word_vector(const DetectorVars<T>& d, Var<T> gated_probs) {
  return matmul(d.embed, gated_probs);
}

}  // namespace modcap
