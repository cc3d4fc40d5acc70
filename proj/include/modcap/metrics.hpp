#pragma once

// Caption metrics: BLEU (sentence and corpus), ROUGE-L, CIDEr, and the
// subcategory tuple f-score computed against annotated scene tuples.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "modcap/scene.hpp"

namespace modcap {

using NgramCounts = std::map<TokenSeq, std::size_t>;

inline NgramCounts ngram_counts(const TokenSeq& s, std::size_t n) {
  NgramCounts c;
  if (n == 0 || s.size() < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[TokenSeq(s.begin() + std::ptrdiff_t(i), s.begin() + std::ptrdiff_t(i + n))];
  return c;
}

/// Matched (clipped) and total n-gram counts of a candidate against references.
struct ClippedCount {
  std::size_t matched = 0;
  std::size_t total = 0;
};

inline ClippedCount clipped_ngrams(const TokenSeq& cand, const std::vector<TokenSeq>& refs, std::size_t n) {
  ClippedCount out;
  const auto cc = ngram_counts(cand, n);
  NgramCounts max_ref;
  for (const auto& r : refs)
    for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
  for (const auto& [g, k] : cc) {
    out.total += k;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) out.matched += std::min(k, it->second);
  }
  return out;
}

/// Length of the reference closest to c (shorter wins ties).
inline std::size_t closest_ref_length(std::size_t c, const std::vector<TokenSeq>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = r.size() > c ? r.size() - c : c - r.size();
    const auto bd = best > c ? best - c : c - best;
    if (d < bd || (d == bd && r.size() < best)) best = r.size();
  }
  return best;
}

inline double brevity_penalty(std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len > ref_len) return 1.0;
  return std::exp(1.0 - double(ref_len) / double(cand_len));
}

namespace detail {
inline double bleu_from_counts(const std::vector<ClippedCount>& per_order, std::size_t cand_len, std::size_t ref_len) {
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (const auto& c : per_order) {
    if (c.matched == 0 || c.total == 0) return 0.0;
    log_sum += std::log(double(c.matched) / double(c.total));
  }
  return brevity_penalty(cand_len, ref_len) * std::exp(log_sum / double(per_order.size()));
}
}  // namespace detail

/// Sentence BLEU-n: geometric mean of clipped precisions 1..n times brevity penalty.
inline double bleu_n(const TokenSeq& cand, const std::vector<TokenSeq>& refs, std::size_t n) {
  if (n < 1 || n > 4) throw ContractError("bleu_n: n must be in 1..4");
  if (refs.empty()) throw ContractError("bleu_n: no references");
  std::vector<ClippedCount> orders;
  for (std::size_t k = 1; k <= n; ++k) orders.push_back(clipped_ngrams(cand, refs, k));
  return detail::bleu_from_counts(orders, cand.size(), closest_ref_length(cand.size(), refs));
}

/// Corpus BLEU-n: counts and lengths summed over the corpus before the ratio.
inline double corpus_bleu(const std::vector<TokenSeq>& cands, const std::vector<std::vector<TokenSeq>>& refs,
                          std::size_t n) {
  if (n < 1 || n > 4) throw ContractError("corpus_bleu: n must be in 1..4");
  if (cands.size() != refs.size()) throw ContractError("corpus_bleu: candidate/reference count mismatch");
  std::vector<ClippedCount> orders(n);
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (refs[i].empty()) throw ContractError("corpus_bleu: scene without references");
    for (std::size_t k = 1; k <= n; ++k) {
      const auto cc = clipped_ngrams(cands[i], refs[i], k);
      orders[k - 1].matched += cc.matched;
      orders[k - 1].total += cc.total;
    }
    c += cands[i].size();
    r += closest_ref_length(cands[i].size(), refs[i]);
  }
  return detail::bleu_from_counts(orders, c, r);
}

inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS F-measure with beta = 1.2, maximized over references.
inline double rouge_l(const TokenSeq& cand, const std::vector<TokenSeq>& refs, double beta = 1.2) {
  if (refs.empty()) throw ContractError("rouge_l: no references");
  double best = 0.0;
  for (const auto& r : refs) {
    if (cand.empty() || r.empty()) continue;
    const double lcs = double(lcs_length(cand, r));
    if (lcs == 0) continue;
    const double p = lcs / double(cand.size());
    const double rec = lcs / double(r.size());
    const double f = (1 + beta * beta) * p * rec / (rec + beta * beta * p);
    best = std::max(best, f);
  }
  return best;
}

struct CiderResult {
  double score = 0.0;               // corpus mean
  std::vector<double> per_scene;
};

/// Plain CIDEr (no length penalty, no clipping): 10 x mean over n = 1..4 of
/// the mean cosine similarity between tf-idf n-gram vectors of the candidate
/// and each reference. Document frequency counts scenes, floored at 1.
inline CiderResult cider(const std::vector<TokenSeq>& cands, const std::vector<std::vector<TokenSeq>>& refs) {
  if (cands.size() != refs.size()) throw ContractError("cider: candidate/reference count mismatch");
  CiderResult out;
  if (cands.empty()) return out;
  constexpr std::size_t kMaxN = 4;
  std::map<TokenSeq, double> df;
  for (const auto& scene_refs : refs) {
    std::set<TokenSeq> seen;
    for (const auto& r : scene_refs)
      for (std::size_t n = 1; n <= kMaxN; ++n)
        for (const auto& [g, k] : ngram_counts(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_docs = std::log(double(refs.size()));
  auto vectorize = [&](const TokenSeq& s, std::size_t n) {
    std::map<TokenSeq, double> v;
    for (const auto& [g, k] : ngram_counts(s, n)) {
      auto it = df.find(g);
      const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
      v[g] = double(k) * (log_docs - std::log(d));
    }
    return v;
  };
  auto norm = [](const std::map<TokenSeq, double>& v) {
    double s = 0.0;
    for (const auto& [g, x] : v) s += x * x;
    return std::sqrt(s);
  };
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (refs[i].empty()) throw ContractError("cider: scene without references");
    double total = 0.0;
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto vc = vectorize(cands[i], n);
      const double nc = norm(vc);
      double acc = 0.0;
      for (const auto& r : refs[i]) {
        const auto vr = vectorize(r, n);
        const double nr = norm(vr);
        if (nc == 0.0 || nr == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) dot += x * it->second;
        }
        acc += dot / (nc * nr);
      }
      total += acc / double(refs[i].size());
    }
    out.per_scene.push_back(10.0 * total / double(kMaxN));
  }
  for (double s : out.per_scene) out.score += s;
  out.score /= double(out.per_scene.size());
  return out;
}

// ---- subcategory tuple f-score ---------------------------------------------

/// Tuples read off a caption. Color/count/size words attach to an object word
/// at most `window` tokens after them; spatial/semantic words attach to the
/// nearest preceding object word.
inline std::vector<AttributeTuple> extract_tuples(const TokenSeq& caption, const SubcategoryLexicon& lex,
                                                  std::size_t window = 2) {
  std::set<AttributeTuple> out;
  for (std::size_t i = 0; i < caption.size(); ++i) {
    const auto cat = lex.category_of(caption[i]);
    if (!cat || *cat == Category::kObject) continue;
    const auto name = category_name(*cat);
    if (*cat == Category::kSpatial || *cat == Category::kSemantic) {
      for (std::size_t j = i; j-- > 0;)
        if (auto o = lex.object_index(caption[j])) {
          out.insert({name, lex.objects()[*o], caption[i]});
          break;
        }
      continue;
    }
    for (std::size_t j = i + 1; j < caption.size() && j <= i + window; ++j)
      if (auto o = lex.object_index(caption[j])) {
        out.insert({name, lex.objects()[*o], caption[i]});
        break;
      }
  }
  return {out.begin(), out.end()};
}

inline std::vector<std::string> extract_objects(const TokenSeq& caption, const SubcategoryLexicon& lex) {
  std::set<std::string> out;
  for (const auto& t : caption)
    if (auto o = lex.object_index(t)) out.insert(lex.objects()[*o]);
  return {out.begin(), out.end()};
}

/// Matched / predicted / annotated counts for one category.
struct TupleCounts {
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t annotated = 0;

  TupleCounts& operator+=(const TupleCounts& o) {
    matched += o.matched;
    predicted += o.predicted;
    annotated += o.annotated;
    return *this;
  }
  /// Empty-vs-empty counts as perfect agreement.
  double precision() const { return predicted ? double(matched) / double(predicted) : (annotated ? 0.0 : 1.0); }
  double recall() const { return annotated ? double(matched) / double(annotated) : (predicted ? 0.0 : 1.0); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
};

inline const std::vector<std::string>& fscore_categories() {
  static const std::vector<std::string> c = {"object", "attribute", "relation", "color", "count", "size", "spatial",
                                             "semantic"};
  return c;
}

/// Per-category counts for one decoded caption against annotated tuples.
inline std::map<std::string, TupleCounts> subcategory_counts(const TokenSeq& decoded,
                                                             const std::vector<std::string>& gt_objects,
                                                             const std::vector<AttributeTuple>& gt_tuples,
                                                             const SubcategoryLexicon& lex, std::size_t window = 2) {
  std::map<std::string, TupleCounts> out;
  for (const auto& c : fscore_categories()) out[c] = {};
  auto match = [](const auto& pred, const auto& gold) {
    TupleCounts tc;
    tc.predicted = pred.size();
    tc.annotated = gold.size();
    for (const auto& p : pred)
      if (std::find(gold.begin(), gold.end(), p) != gold.end()) ++tc.matched;
    return tc;
  };
  std::set<std::string> gold_obj(gt_objects.begin(), gt_objects.end());
  out["object"] = match(extract_objects(decoded, lex), std::vector<std::string>(gold_obj.begin(), gold_obj.end()));

  const auto pred = extract_tuples(decoded, lex, window);
  std::set<AttributeTuple> gold_set(gt_tuples.begin(), gt_tuples.end());
  for (const std::string c : {"color", "count", "size", "spatial", "semantic"}) {
    std::vector<AttributeTuple> p, g;
    for (const auto& t : pred)
      if (t.category == c) p.push_back(t);
    for (const auto& t : gold_set)
      if (t.category == c) g.push_back(t);
    out[c] = match(p, g);
  }
  out["attribute"] = out["color"];
  out["attribute"] += out["count"];
  out["attribute"] += out["size"];
  out["relation"] = out["spatial"];
  out["relation"] += out["semantic"];
  return out;
}

/// Per-category f1 for a single caption.
inline std::map<std::string, double> subcategory_fscore(const TokenSeq& decoded, const Scene& scene,
                                                        const SubcategoryLexicon& lex, std::size_t window = 2) {
  std::map<std::string, double> out;
  for (const auto& [c, tc] : subcategory_counts(decoded, scene.gt_objects, scene.gt_tuples, lex, window))
    out[c] = tc.f1();
  return out;
}

struct MetricReport {
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0.0;
  double cider = 0.0;
  std::map<std::string, double> fscore;  // corpus-level (pooled counts)
  std::size_t num_scenes = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["bleu1"] = bleu[0];
    j["bleu2"] = bleu[1];
    j["bleu3"] = bleu[2];
    j["bleu4"] = bleu[3];
    j["rouge_l"] = rouge_l;
    j["cider"] = cider;
    j["fscore"] = fscore;
    j["num_scenes"] = num_scenes;
    return j;
  }

  static std::vector<std::string> csv_columns() {
    std::vector<std::string> c = {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider"};
    for (const auto& f : fscore_categories()) c.push_back("f_" + f);
    return c;
  }

  std::vector<double> csv_values() const {
    std::vector<double> v = {bleu[0], bleu[1], bleu[2], bleu[3], rouge_l, cider};
    for (const auto& f : fscore_categories()) v.push_back(fscore.at(f));
    return v;
  }
};

/// Corpus metrics of decoded captions against scene references and tuples.
inline MetricReport evaluate_captions(const std::vector<TokenSeq>& decoded, const std::vector<Scene>& scenes,
                                      const SubcategoryLexicon& lex, std::size_t window = 2) {
  if (decoded.size() != scenes.size()) throw ContractError("evaluate_captions: caption/scene count mismatch");
  MetricReport rep;
  rep.num_scenes = scenes.size();
  std::vector<std::vector<TokenSeq>> refs;
  for (const auto& s : scenes) refs.push_back(s.references);
  for (std::size_t n = 1; n <= 4; ++n) rep.bleu[n - 1] = scenes.empty() ? 0.0 : corpus_bleu(decoded, refs, n);
  std::map<std::string, TupleCounts> pooled;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    rep.rouge_l += rouge_l(decoded[i], refs[i]);
    for (const auto& [c, tc] : subcategory_counts(decoded[i], scenes[i].gt_objects, scenes[i].gt_tuples, lex, window))
      pooled[c] += tc;
  }
  if (!scenes.empty()) rep.rouge_l /= double(scenes.size());
  rep.cider = cider(decoded, refs).score;
  for (const auto& c : fscore_categories()) rep.fscore[c] = pooled[c].f1();
  return rep;
}

}  // namespace modcap
