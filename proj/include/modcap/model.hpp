#pragma once

// The captioner: attention / visual / semantic LSTMs, region attention, and
// the per-timestep wiring through object detection and attribute modules.

#include <array>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "modcap/detection.hpp"
#include "modcap/modules.hpp"
#include "modcap/params.hpp"
#include "modcap/scene.hpp"

namespace modcap {

/// Which parts of the full model are switched off (ablation variants).
struct Ablation {
  bool no_mod = false;   // c_hat := w^init, no attribute losses
  bool no_mil = false;   // w^obj := 0, no MIL losses
  bool no_amil = false;  // P_I := P_or, no attention-MIL branch

  std::string label() const {
    if (!no_mod && !no_mil && !no_amil) return "complete";
    std::string s;
    auto add = [&](const char* n) { s += s.empty() ? n : std::string("+") + n; };
    if (no_mod) add("no_mod");
    if (no_mil) add("no_mil");
    if (no_amil) add("no_amil");
    return s;
  }
  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t feature_dim = 64;
  std::size_t attention_dim = 32;
  std::size_t num_objects = 0;
  std::array<std::size_t, kNumModules> module_labels{};
  // vocabulary ids of each module's labels; when set, E_m reuses those embedding rows
  std::array<std::vector<std::size_t>, kNumModules> module_word_ids{};
  double init_range = 0.08;
  Ablation ablation;

  /// Widths of the two-layer detector / module networks.
  std::size_t mid_dim() const { return hidden_dim; }

  static ModelConfig desk(std::size_t vocab_size, const SubcategoryLexicon& lex, std::size_t feature_dim = 64) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.feature_dim = feature_dim;
    c.num_objects = lex.num_objects();
    for (std::size_t m = 0; m < kNumModules; ++m) c.module_labels[m] = lex.num_labels(m);
    return c;
  }

  static ModelConfig paper(std::size_t vocab_size, const SubcategoryLexicon& lex) {
    auto c = desk(vocab_size, lex, 2048);
    c.embed_dim = 300;
    c.hidden_dim = 512;
    c.attention_dim = 512;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size},   {"embed_dim", embed_dim},
            {"hidden_dim", hidden_dim},   {"feature_dim", feature_dim},
            {"attention_dim", attention_dim}, {"num_objects", num_objects},
            {"module_labels", module_labels}, {"init_range", init_range},
            {"no_mod", ablation.no_mod},  {"no_mil", ablation.no_mil},
            {"no_amil", ablation.no_amil}, {"module_word_ids", module_word_ids}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size");
    c.embed_dim = j.at("embed_dim");
    c.hidden_dim = j.at("hidden_dim");
    c.feature_dim = j.at("feature_dim");
    c.attention_dim = j.at("attention_dim");
    c.num_objects = j.at("num_objects");
    c.module_labels = j.at("module_labels").get<std::array<std::size_t, kNumModules>>();
    c.init_range = j.at("init_range");
    c.ablation.no_mod = j.at("no_mod");
    c.ablation.no_mil = j.at("no_mil");
    c.ablation.no_amil = j.at("no_amil");
    if (j.contains("module_word_ids"))
      c.module_word_ids = j.at("module_word_ids").get<std::array<std::vector<std::size_t>, kNumModules>>();
    return c;
  }
};

template <typename T>
struct LstmVars {
  Var<T> w;  // [4H x (input + H)], gate rows ordered input, forget, output, cell
  Var<T> b;  // [4H]
};

/// Standard LSTM update; h' = o * tanh(c').
template <typename T>
std::pair<Var<T>, Var<T>> lstm_cell_step(const LstmVars<T>& block, Var<T> x, Var<T> h, Var<T> c) {
  const std::size_t hidden = h.value().size();
  if (c.value().size() != hidden || block.w.shape()[0] != 4 * hidden ||
      block.w.shape()[1] != x.value().size() + hidden)
    throw DimensionError("lstm_cell_step: weight " + shape_str(block.w.shape()) + " does not fit input " +
                         shape_str(x.shape()) + " and hidden " + shape_str(h.shape()));
  auto gates = add(matmul(block.w, concat({x, h})), block.b);
  auto i = sigmoid(slice(gates, 0, hidden));
  auto f = sigmoid(slice(gates, hidden, hidden));
  auto o = sigmoid(slice(gates, 2 * hidden, hidden));
  auto g = tanh(slice(gates, 3 * hidden, hidden));
  auto c_next = add(mul(f, c), mul(i, g));
  auto h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

template <typename T>
struct TrioState {
  Var<T> h_a, c_a, h_v, c_v, h_s, c_s;
};

template <typename T>
struct StepOutputs {
  Var<T> region_attention;   // a_t [D_r]
  Var<T> attended;           // v~_t [D_v]
  Var<T> init_probs;         // y^init_t [D_voc]
  Var<T> init_word;          // w^init_t [D_e]
  std::optional<Var<T>> object_scores;  // P_{I,t} [D_obj]; absent under no_mil
  Var<T> object_word;        // w^obj_t [D_e]
  std::vector<Var<T>> module_probs;     // P^m_t, empty under no_mod
  std::vector<Var<T>> module_words;     // w^m_t
  Var<T> alpha_hat;          // [k + 1]
  Var<T> beta;               // scalar
  Var<T> composed;           // c_hat_t [D_e]
  Var<T> word_probs;         // p(y_t) [D_voc]
};

/// All parameters bound as leaves of one tape.
template <typename T>
struct BoundParams {
  Var<T> embed;    // [D_voc x D_e]
  Var<T> embed_t;  // [D_e x D_voc]
  LstmVars<T> lstm_a, lstm_v, lstm_s;
  Var<T> att_wv, att_wo, att_wb;
  Var<T> init_w, init_b, word_w, word_b;
  DetectorVars<T> detector;
  std::array<AttributeModuleVars<T>, kNumModules> modules;
  ModuleAttentionVars<T> module_attention;
};

/// Scene-level quantities computed once per caption.
template <typename T>
struct SceneContext {
  Var<T> regions;         // [D_r x D_v]
  Var<T> regions_t;       // V, [D_v x D_r]
  Var<T> mean_feature;    // v_bar [D_v]
  Var<T> projected;       // W_v V, [D_att x D_r]
  std::optional<Var<T>> region_probs;  // [D_r x D_obj]
  std::optional<Var<T>> p_or;
  std::optional<Var<T>> p_att;
  std::optional<Var<T>> p_image;       // P_I
};

template <typename T = double>
class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    if (cfg_.vocab_size <= kReservedTokens.size() || cfg_.num_objects == 0)
      throw ConfigError("model config needs a vocabulary and an object set");
    std::mt19937_64 rng(seed);
    const auto V = cfg_.vocab_size, E = cfg_.embed_dim, H = cfg_.hidden_dim, D = cfg_.feature_dim,
               A = cfg_.attention_dim, O = cfg_.num_objects, M = cfg_.mid_dim();
    auto u = [&](const std::string& name, Shape s) { params_.add(name, uniform_tensor<T>(std::move(s), cfg_.init_range, rng)); };
    auto lstm = [&](const std::string& name, std::size_t input) {
      u(name + ".w", {4 * H, input + H});
      u(name + ".b", {4 * H});
      auto& b = params_.at(name + ".b");
      for (std::size_t i = H; i < 2 * H; ++i) b[i] = T(1);
    };
    u("embed", {V, E});
    lstm("lstm_a", H + D + E);
    lstm("lstm_v", D + H);
    lstm("lstm_s", H + E + E);
    u("att.w_v", {A, D});
    u("att.w_o", {A, H});
    u("att.w_b", {1, A});
    u("init_out.w", {V, H});
    u("init_out.b", {V});
    u("word_out.w", {V, H});
    u("word_out.b", {V});
    u("det.region.w", {D, O});
    u("det.region.b", {O});
    u("det.att.w1", {M, D});
    u("det.att.b1", {M});
    u("det.att.w2", {O, M});
    u("det.att.b2", {O});
    u("det.gate.w_h", {O, H});
    u("det.gate.w_v", {O, D});
    u("det.embed", {E, O});
    for (std::size_t m = 0; m < kNumModules; ++m) {
      const auto p = "mod." + kModuleNames[m];
      const auto L = cfg_.module_labels[m];
      if (L == 0) throw ConfigError("attribute module '" + kModuleNames[m] + "' has no labels");
      const auto& ids = cfg_.module_word_ids[m];
      if (!ids.empty() && ids.size() != L) throw ConfigError("module '" + kModuleNames[m] + "' word ids do not match labels");
      for (auto id : ids)
        if (id >= V) throw ConfigError("module '" + kModuleNames[m] + "' word id out of vocabulary");
      u(p + ".w1", {M, D + H + E});
      u(p + ".b1", {M});
      u(p + ".w2", {L, M});
      u(p + ".b2", {L});
      if (cfg_.module_word_ids[m].empty()) u(p + ".embed", {E, L});
    }
    u("modatt.w_z", {1, A});
    u("modatt.w_m", {A, E});
    u("modatt.w_g", {A, H});
    u("modatt.w_i", {A, E});
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// Parameters of the two MIL detectors (frozen after the joint phase).
  std::vector<bool> detector_mask() const {
    std::vector<bool> mask(params_.size(), false);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& n = params_.name(i);
      mask[i] = n.rfind("det.region.", 0) == 0 || n.rfind("det.att.", 0) == 0;
    }
    return mask;
  }

  BoundParams<T> bind(Tape<T>& tape, const std::vector<bool>& frozen = {}) const {
    auto p = [&](const std::string& name) {
      const auto i = params_.id(name);
      return tape.parameter(params_[i], i, frozen.empty() || !frozen[i]);
    };
    BoundParams<T> b;
    b.embed = p("embed");
    b.embed_t = transpose(b.embed);
    b.lstm_a = {p("lstm_a.w"), p("lstm_a.b")};
    b.lstm_v = {p("lstm_v.w"), p("lstm_v.b")};
    b.lstm_s = {p("lstm_s.w"), p("lstm_s.b")};
    b.att_wv = p("att.w_v");
    b.att_wo = p("att.w_o");
    b.att_wb = p("att.w_b");
    b.init_w = p("init_out.w");
    b.init_b = p("init_out.b");
    b.word_w = p("word_out.w");
    b.word_b = p("word_out.b");
    b.detector = {p("det.region.w"), p("det.region.b"), p("det.att.w1"), p("det.att.b1"), p("det.att.w2"),
                  p("det.att.b2"), p("det.gate.w_h"), p("det.gate.w_v"), p("det.embed")};
    for (std::size_t m = 0; m < kNumModules; ++m) {
      const auto n = "mod." + kModuleNames[m];
      const auto& ids = cfg_.module_word_ids[m];
      Var<T> e;
      if (ids.empty()) {
        e = p(n + ".embed");
      } else {
        Tensor<T> sel(Shape{cfg_.vocab_size, ids.size()});
        for (std::size_t j = 0; j < ids.size(); ++j) sel(ids[j], j) = T(1);
        e = matmul(b.embed_t, tape.constant(std::move(sel)));
      }
      b.modules[m] = {p(n + ".w1"), p(n + ".b1"), p(n + ".w2"), p(n + ".b2"), e};
    }
    b.module_attention = {p("modatt.w_z"), p("modatt.w_m"), p("modatt.w_g"), p("modatt.w_i")};
    return b;
  }

  SceneContext<T> scene_context(Tape<T>& tape, const BoundParams<T>& b, const Tensor<double>& features) const {
    if (features.rank() != 2 || features.shape()[1] != cfg_.feature_dim)
      throw DimensionError("scene features " + shape_str(features.shape()) + " do not match feature_dim " +
                           std::to_string(cfg_.feature_dim));
    const std::size_t R = features.shape()[0];
    SceneContext<T> ctx;
    const auto f = features.cast<T>();
    Tensor<T> mean(Shape{cfg_.feature_dim});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < cfg_.feature_dim; ++j) mean[j] += f(r, j);
    for (std::size_t j = 0; j < cfg_.feature_dim; ++j) mean[j] /= T(R);
    ctx.regions = tape.constant(f);
    ctx.regions_t = tape.constant(transpose_values(f));
    ctx.mean_feature = tape.constant(std::move(mean));
    ctx.projected = matmul(b.att_wv, ctx.regions_t);
    if (!cfg_.ablation.no_mil) {
      ctx.region_probs = region_object_probs(b.detector, ctx.regions);
      ctx.p_or = noisy_or(*ctx.region_probs);
      if (cfg_.ablation.no_amil) {
        ctx.p_image = ctx.p_or;
      } else {
        ctx.p_att = attention_mil(b.detector, ctx.mean_feature);
        ctx.p_image = stack_noisy_or(*ctx.p_or, *ctx.p_att);
      }
    }
    return ctx;
  }

  TrioState<T> initial_state(Tape<T>& tape) const {
    const Tensor<T> z(Shape{cfg_.hidden_dim});
    return {tape.constant(z), tape.constant(z), tape.constant(z),
            tape.constant(z), tape.constant(z), tape.constant(z)};
  }

  /// A-LSTM over [h^s_{t-1}; v_bar; E[prev]].
  Var<T> attention_lstm_step(const BoundParams<T>& b, TrioState<T>& st, Var<T> mean_feature, Var<T> prev_embedding) const {
    auto [h, c] = lstm_cell_step(b.lstm_a, concat({st.h_s, mean_feature, prev_embedding}), st.h_a, st.c_a);
    st.h_a = h;
    st.c_a = c;
    return h;
  }

  /// a_t = softmax(w_b tanh(W_v V + W_o h^a_t)), v~_t = V a_t.
  std::pair<Var<T>, Var<T>> region_attention(const BoundParams<T>& b, const SceneContext<T>& ctx, Var<T> query) const {
    auto hidden = tanh(add_colwise(ctx.projected, matmul(b.att_wo, query)));
    auto logits = matmul(b.att_wb, hidden);
    auto a = softmax(reshape(logits, Shape{logits.value().size()}));
    return {a, matmul(ctx.regions_t, a)};
  }

  /// V-LSTM over [v~_t; h^a_t]; returns (y^init_t, w^init_t = E^T y^init_t).
  std::pair<Var<T>, Var<T>> visual_lstm_step(const BoundParams<T>& b, TrioState<T>& st, Var<T> attended, Var<T> h_a) const {
    auto [h, c] = lstm_cell_step(b.lstm_v, concat({attended, h_a}), st.h_v, st.c_v);
    st.h_v = h;
    st.c_v = c;
    auto probs = softmax(add(matmul(b.init_w, h), b.init_b));
    return {probs, matmul(b.embed_t, probs)};
  }

  /// S-LSTM over [h^v_t; w^obj_t; c_hat_t]; returns p(y_t).
  Var<T> semantic_lstm_step(const BoundParams<T>& b, TrioState<T>& st, Var<T> object_word, Var<T> composed) const {
    auto [h, c] = lstm_cell_step(b.lstm_s, concat({st.h_v, object_word, composed}), st.h_s, st.c_s);
    st.h_s = h;
    st.c_s = c;
    return softmax(add(matmul(b.word_w, h), b.word_b));
  }

  StepOutputs<T> forward_step(Tape<T>& tape, const BoundParams<T>& b, const SceneContext<T>& ctx,
                              std::size_t prev_token, TrioState<T>& st) const {
    if (prev_token >= cfg_.vocab_size) throw ContractError("token id " + std::to_string(prev_token) + " out of vocabulary");
    StepOutputs<T> out;
    const auto h_s_prev = st.h_s;
    auto h_a = attention_lstm_step(b, st, ctx.mean_feature, row(b.embed, prev_token));
    std::tie(out.region_attention, out.attended) = region_attention(b, ctx, h_a);
    std::tie(out.init_probs, out.init_word) = visual_lstm_step(b, st, out.attended, h_a);

    if (cfg_.ablation.no_mil) {
      out.object_word = tape.constant(Tensor<T>(Shape{cfg_.embed_dim}));
    } else {
      out.object_scores = gate_detections(b.detector, h_s_prev, out.attended, *ctx.p_image);
      out.object_word = object_word_vector(b.detector, *out.object_scores);
    }

    if (cfg_.ablation.no_mod) {
      Tensor<T> one_hot(Shape{kNumModules + 1});
      one_hot[kInitSlot] = T(1);
      out.alpha_hat = tape.constant(std::move(one_hot));
      out.beta = tape.constant(Tensor<T>::scalar(T(1)));
      out.composed = out.init_word;
    } else {
      auto input = module_hidden_input(out.attended, h_s_prev, out.object_word);
      for (std::size_t m = 0; m < kNumModules; ++m) {
        out.module_probs.push_back(module_predict(b.modules[m], input));
        out.module_words.push_back(module_word_vector(b.modules[m], out.module_probs.back()));
      }
      auto att = module_attention(b.module_attention, std::span<const Var<T>>(out.module_words), out.init_word, h_s_prev);
      out.alpha_hat = att.alpha_hat;
      out.beta = att.beta;
      out.composed = att.composed;
    }
    out.word_probs = semantic_lstm_step(b, st, out.object_word, out.composed);
    return out;
  }

  /// Teacher-forced pass: one StepOutputs per input token.
  std::vector<StepOutputs<T>> forward_sequence(Tape<T>& tape, const BoundParams<T>& b, const SceneContext<T>& ctx,
                                               const std::vector<std::size_t>& inputs) const {
    auto st = initial_state(tape);
    std::vector<StepOutputs<T>> out;
    out.reserve(inputs.size());
    for (auto tok : inputs) out.push_back(forward_step(tape, b, ctx, tok, st));
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
};

}  // namespace modcap
