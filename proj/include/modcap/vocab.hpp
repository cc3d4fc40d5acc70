#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "modcap/tensor.hpp"

namespace modcap {

inline constexpr std::size_t kBos = 0;
inline constexpr std::size_t kEos = 1;
inline constexpr std::size_t kUnk = 2;
inline constexpr std::size_t kPad = 3;
inline const std::vector<std::string> kReservedTokens = {"<bos>", "<eos>", "<unk>", "<pad>"};

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

using TokenSeq = std::vector<std::string>;

class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Reserved tokens are prepended; `words` must not repeat or contain them.
  explicit Vocabulary(const std::vector<std::string>& words) {
    for (const auto& r : kReservedTokens) insert(r);
    for (const auto& w : words) {
      if (index_.count(w)) throw ContractError("vocabulary: duplicate token '" + w + "'");
      insert(w);
    }
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

  /// Index of tok, or <unk>.
  std::size_t lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }
  std::optional<std::size_t> find(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& token(std::size_t i) const {
    if (i >= tokens_.size()) throw ContractError("vocabulary: index " + std::to_string(i) + " out of range");
    return tokens_[i];
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Lowercases and maps to ids; no <bos>/<eos> added.
  std::vector<std::size_t> encode(const TokenSeq& seq) const {
    std::vector<std::size_t> out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(lookup(to_lower(t)));
    return out;
  }

  TokenSeq decode(const std::vector<std::size_t>& ids) const {
    TokenSeq out;
    for (auto i : ids) out.push_back(token(i));
    return out;
  }

  /// Words after the reserved block, in index order.
  std::vector<std::string> words() const { return {tokens_.begin() + kReservedTokens.size(), tokens_.end()}; }

 private:
  void insert(const std::string& t) {
    index_[t] = tokens_.size();
    tokens_.push_back(t);
  }
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Keeps lowercased tokens seen at least min_count times, ordered by
/// descending frequency, ties alphabetical.
inline Vocabulary build_vocabulary(const std::vector<TokenSeq>& corpus, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocabulary: min_count must be >= 1");
  if (corpus.empty()) throw ContractError("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : corpus)
    for (const auto& t : seq) ++counts[to_lower(t)];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, c] : counts) {
    if (c < min_count) continue;
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end()) continue;
    kept.emplace_back(tok, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (auto& [t, c] : kept) words.push_back(t);
  return Vocabulary(words);
}

}  // namespace modcap
