#pragma once

// A trained captioner on disk: the parameter checkpoint at `path` plus a JSON
// sidecar `path + ".meta.json"` carrying the model config, vocabulary and
// lexicon needed to rebuild it.

#include <filesystem>
#include <fstream>

#include "modcap/checkpoint.hpp"
#include "modcap/dataset.hpp"
#include "modcap/model.hpp"

namespace modcap {

template <typename T>
struct Captioner {
  Vocabulary vocab;
  SubcategoryLexicon lexicon;
  Model<T> model;
};

inline std::string meta_path(const std::string& checkpoint) { return checkpoint + ".meta.json"; }

/// Corpus words seen at least min_count times, plus every lexicon token so
/// the module label sets keep their full size.
inline Vocabulary vocabulary_for(const std::vector<Scene>& scenes, const SubcategoryLexicon& lex,
                                 std::size_t min_count) {
  std::vector<TokenSeq> corpus;
  for (const auto& s : scenes)
    for (const auto& r : s.references) corpus.push_back(r);
  auto base = build_vocabulary(corpus, min_count);
  auto words = base.words();
  for (const auto& t : lex.all_tokens())
    if (!base.contains(t)) words.push_back(t);
  Vocabulary v(words);
  lex.check_in(v);
  return v;
}

template <typename T>
Captioner<T> make_captioner(const std::vector<Scene>& scenes, const SubcategoryLexicon& lex, ModelConfig base,
                            std::size_t min_count, std::uint64_t seed) {
  auto vocab = vocabulary_for(scenes, lex, min_count);
  base.vocab_size = vocab.size();
  base.num_objects = lex.num_objects();
  for (std::size_t m = 0; m < kNumModules; ++m) {
    base.module_labels[m] = lex.num_labels(m);
    base.module_word_ids[m].clear();
    for (const auto& w : lex.labels(m)) base.module_word_ids[m].push_back(vocab.lookup(w));
  }
  if (!scenes.empty()) base.feature_dim = scenes.front().feature_dim();
  return Captioner<T>{std::move(vocab), lex, Model<T>(base, seed)};
}

template <typename T>
void save_captioner(const std::string& path, const Captioner<T>& c, const nlohmann::json& extra = {}) {
  save_checkpoint(path, c.model.params());
  nlohmann::json meta;
  meta["model"] = c.model.config().to_json();
  meta["vocabulary"] = c.vocab.words();
  meta["lexicon"] = c.lexicon.to_json();
  if (!extra.is_null()) meta["extra"] = extra;
  std::ofstream os(meta_path(path), std::ios::trunc);
  if (!os) throw CheckpointError("cannot write '" + meta_path(path) + "'");
  os << meta.dump(2) << '\n';
}

inline nlohmann::json load_meta(const std::string& path) {
  std::ifstream is(meta_path(path));
  if (!is) throw CheckpointError("missing checkpoint metadata '" + meta_path(path) + "'");
  return nlohmann::json::parse(is);
}

template <typename T>
Captioner<T> load_captioner(const std::string& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint '" + path + "' does not exist");
  const auto meta = load_meta(path);
  Vocabulary vocab(meta.at("vocabulary").get<std::vector<std::string>>());
  auto lex = SubcategoryLexicon::from_json(meta.at("lexicon"));
  Model<T> model(ModelConfig::from_json(meta.at("model")));
  assign_from(model.params(), load_checkpoint(path));
  return Captioner<T>{std::move(vocab), std::move(lex), std::move(model)};
}

}  // namespace modcap
