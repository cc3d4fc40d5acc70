#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <thread>

#include "modcap/bundle.hpp"
#include "modcap/losses.hpp"

namespace modcap {

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate_initial = 5e-4;
  double learning_rate_final = 2.5e-4;
  std::size_t anneal_start_epoch = 20;
  double beta1 = 0.8;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t mil_joint_epochs = 5;
  std::size_t epochs = 30;
  std::size_t max_iterations = 0;  // 0: no limit
  double clip_norm = 5.0;
  std::size_t references_per_scene = 1;  // leading references used as training captions
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Small model, small data: a larger step size with the same halving.
  static TrainConfig desk() {
    TrainConfig c;
    c.learning_rate_initial = 2e-2;
    c.learning_rate_final = 1e-2;
    return c;
  }

  static TrainConfig paper() {
    TrainConfig c;
    c.batch_size = 128;
    return c;
  }

  void validate() const {
    if (!(learning_rate_final > 0) || learning_rate_final > learning_rate_initial)
      throw ConfigError("need 0 < learning_rate_final <= learning_rate_initial");
    if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
    if (references_per_scene == 0) throw ConfigError("references_per_scene must be positive");
  }

  nlohmann::json to_json() const {
    return {{"learning_rate_initial", learning_rate_initial}, {"learning_rate_final", learning_rate_final},
            {"anneal_start_epoch", anneal_start_epoch},       {"beta1", beta1},
            {"beta2", beta2},                                 {"epsilon", epsilon},
            {"batch_size", batch_size},                       {"mil_joint_epochs", mil_joint_epochs},
            {"epochs", epochs},                               {"max_iterations", max_iterations},
            {"clip_norm", clip_norm},                         {"references_per_scene", references_per_scene},
            {"seed", seed}};
  }
};

/// Learning rate for a 1-based epoch: constant before anneal_start_epoch,
/// then linear down to learning_rate_final at the last epoch.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch <= cfg.anneal_start_epoch || cfg.epochs <= cfg.anneal_start_epoch) return cfg.learning_rate_initial;
  const double frac = double(epoch - cfg.anneal_start_epoch) / double(cfg.epochs - cfg.anneal_start_epoch);
  return cfg.learning_rate_initial + (cfg.learning_rate_final - cfg.learning_rate_initial) * std::min(1.0, frac);
}

struct IterationRecord {
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  std::array<double, kNumLossTerms> terms{};  // batch means
  double total = 0.0;
  double learning_rate = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::array<double, kNumLossTerms> terms{};  // means over examples
  double total = 0.0;
  double learning_rate = 0.0;
};

inline std::string csv_header() {
  std::string h = "epoch,iteration";
  for (const auto& n : loss_term_names()) h += "," + n;
  return h + ",loss_total,learning_rate";
}

inline std::string csv_row(const IterationRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.epoch << ',' << r.iteration;
  for (double v : r.terms) os << ',' << v;
  os << ',' << r.total << ',' << r.learning_rate;
  return os.str();
}

/// Teacher-forced examples from the leading references of each scene.
inline std::vector<CaptionExample> make_examples(const std::vector<Scene>& scenes, const Vocabulary& vocab,
                                                 const SubcategoryLexicon& lex, std::size_t refs_per_scene) {
  std::vector<CaptionExample> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto n = std::min(refs_per_scene, scenes[i].references.size());
    for (std::size_t r = 0; r < n; ++r) out.push_back(make_example(scenes[i], i, scenes[i].references[r], vocab, lex));
  }
  return out;
}

/// Forward + backward for one caption; gradients are added into `grads`.
template <typename T>
std::array<double, kNumLossTerms> accumulate_example(const Model<T>& model, const Scene& scene,
                                                     const CaptionExample& ex, bool include_mil,
                                                     const std::vector<bool>& frozen, Gradients<T>& grads) {
  Tape<T> tape;
  auto b = model.bind(tape, frozen);
  auto ctx = model.scene_context(tape, b, scene.features);
  auto steps = model.forward_sequence(tape, b, ctx, ex.inputs);
  auto L = compute_losses(tape, model.config(), ctx, steps, ex, include_mil);
  tape.backward(L.total);
  grads.collect(tape);
  return L.values();
}

/// Loss terms without gradients (evaluation).
template <typename T>
std::array<double, kNumLossTerms> example_losses(const Model<T>& model, const Scene& scene, const CaptionExample& ex,
                                                 bool include_mil = true) {
  Tape<T> tape;
  auto b = model.bind(tape, std::vector<bool>(model.params().size(), true));
  auto ctx = model.scene_context(tape, b, scene.features);
  auto steps = model.forward_sequence(tape, b, ctx, ex.inputs);
  return compute_losses(tape, model.config(), ctx, steps, ex, include_mil).values();
}

template <typename T>
class Trainer {
 public:
  using IterationHook = std::function<void(const IterationRecord&)>;
  using EpochHook = std::function<void(const EpochRecord&)>;

  Trainer(Captioner<T>& cap, const std::vector<Scene>& scenes, TrainConfig cfg)
      : cap_(cap), scenes_(scenes), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (scenes_.empty()) throw ConfigError("training needs a non-empty dataset");
    examples_ = make_examples(scenes_, cap_.vocab, cap_.lexicon, cfg_.references_per_scene);
    adam_ = AdamState<T>(cap_.model.params(), cfg_.learning_rate_initial, cfg_.beta1, cfg_.beta2, cfg_.epsilon);
  }

  std::size_t epochs_done() const { return epoch_; }
  std::size_t iterations_done() const { return iteration_; }
  const AdamState<T>& optimizer() const { return adam_; }
  const std::vector<CaptionExample>& examples() const { return examples_; }
  const TrainConfig& config() const { return cfg_; }

  bool finished() const {
    return epoch_ >= cfg_.epochs || (cfg_.max_iterations && iteration_ >= cfg_.max_iterations);
  }

  /// Runs remaining epochs (or until max_iterations).
  std::vector<EpochRecord> run(const IterationHook& on_iteration = {}, const EpochHook& on_epoch = {}) {
    std::vector<EpochRecord> out;
    while (!finished()) out.push_back(run_epoch(on_iteration, on_epoch));
    return out;
  }

  EpochRecord run_epoch(const IterationHook& on_iteration = {}, const EpochHook& on_epoch = {}) {
    const std::size_t epoch = epoch_ + 1;
    const bool include_mil = epoch <= cfg_.mil_joint_epochs;
    const auto frozen = include_mil ? std::vector<bool>(cap_.model.params().size(), false) : cap_.model.detector_mask();
    adam_.learning_rate = learning_rate_at(cfg_, epoch);

    std::vector<std::size_t> order(examples_.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg_.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = adam_.learning_rate;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      if (cfg_.max_iterations && iteration_ >= cfg_.max_iterations) break;
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      auto it = train_batch(std::span<const std::size_t>(order.data() + start, end - start), include_mil, frozen);
      it.epoch = epoch;
      for (std::size_t k = 0; k < kNumLossTerms; ++k) rec.terms[k] += it.terms[k] * double(end - start);
      rec.total += it.total * double(end - start);
      seen += end - start;
      if (on_iteration) on_iteration(it);
    }
    if (seen) {
      for (auto& v : rec.terms) v /= double(seen);
      rec.total /= double(seen);
    }
    epoch_ = epoch;
    if (on_epoch) on_epoch(rec);
    return rec;
  }

  /// Optimizer state in checkpoint form ("adam.m/<name>", "adam.v/<name>",
  /// "adam.step", "train.epoch", "train.iteration").
  ParamStore<double> optimizer_state() const {
    ParamStore<double> s;
    const auto& p = cap_.model.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.add("adam.m/" + p.name(i), adam_.first_moment[i].template cast<double>());
      s.add("adam.v/" + p.name(i), adam_.second_moment[i].template cast<double>());
    }
    s.add("adam.step", Tensor<double>::vector({double(adam_.step_count)}));
    s.add("train.epoch", Tensor<double>::vector({double(epoch_)}));
    s.add("train.iteration", Tensor<double>::vector({double(iteration_)}));
    return s;
  }

  void restore_optimizer_state(const ParamStore<double>& s) {
    const auto& p = cap_.model.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& m = s.at("adam.m/" + p.name(i));
      const auto& v = s.at("adam.v/" + p.name(i));
      if (m.shape() != p[i].shape() || v.shape() != p[i].shape())
        throw CheckpointError("optimizer state shape mismatch for '" + p.name(i) + "'");
      adam_.first_moment[i] = m.template cast<T>();
      adam_.second_moment[i] = v.template cast<T>();
    }
    adam_.step_count = std::uint64_t(s.at("adam.step")[0]);
    epoch_ = std::size_t(s.at("train.epoch")[0]);
    iteration_ = std::size_t(s.at("train.iteration")[0]);
  }

 private:
  IterationRecord train_batch(std::span<const std::size_t> batch, bool include_mil, const std::vector<bool>& frozen) {
    const auto& model = cap_.model;
    std::vector<Gradients<T>> item_grads(batch.size(), Gradients<T>(model.params()));
    std::vector<std::array<double, kNumLossTerms>> item_terms(batch.size());
    std::vector<std::exception_ptr> errors(batch.size());

    auto work = [&](std::size_t k) {
      try {
        const auto& ex = examples_[batch[k]];
        item_terms[k] = accumulate_example(model, scenes_[ex.scene_index], ex, include_mil, frozen, item_grads[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    };
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(cfg_.threads, batch.size()));
    if (nthreads == 1) {
      for (std::size_t k = 0; k < batch.size(); ++k) work(k);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < nthreads; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t k = w; k < batch.size(); k += nthreads) work(k);
        });
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    IterationRecord rec;
    rec.iteration = ++iteration_;
    rec.learning_rate = adam_.learning_rate;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      for (std::size_t j = 0; j < kNumLossTerms; ++j) {
        if (!std::isfinite(item_terms[k][j]))
          throw TrainingDiverged("loss term '" + loss_term_names()[j] + "' is not finite at iteration " +
                                 std::to_string(iteration_) + " (scene " + examples_[batch[k]].scene_id + ")");
        rec.terms[j] += item_terms[k][j];
      }
    }
    for (auto& v : rec.terms) v /= double(batch.size());
    for (double v : rec.terms) rec.total += v;

    // Summation in batch order keeps the result independent of thread count.
    Gradients<T> grads(model.params());
    for (const auto& g : item_grads) grads.add(g);
    grads.clip_global_norm(cfg_.clip_norm);
    adam_step(cap_.model.params(), grads, adam_, frozen);
    return rec;
  }

  Captioner<T>& cap_;
  const std::vector<Scene>& scenes_;
  TrainConfig cfg_;
  std::vector<CaptionExample> examples_;
  AdamState<T> adam_;
  std::size_t epoch_ = 0;
  std::size_t iteration_ = 0;
};

}  // namespace modcap
