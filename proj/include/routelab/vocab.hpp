#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "routelab/errors.hpp"
#include "routelab/rng.hpp"
#include "routelab/route.hpp"

namespace routelab {

/// Closed word-level vocabulary. Tokens are whole words of the description
/// grammar and prompt templates, single digits, single punctuation marks,
/// option letters, the reasoning delimiters, and the specials. Token ids
/// equal list positions and never change for a given build.
class Vocab {
 public:
  Vocab() {
    add("<pad>");
    add("<bos>");
    add("<eos>");
    add("<think>");
    add("</think>");
    add("<answer>");
    add("</answer>");
    for (const char* w : {"A", "B", "C", "D"}) add(w);
    for (char d = '0'; d <= '9'; ++d) add(std::string(1, d));
    for (char c : std::string(kPunct)) add(std::string(1, c));
    for (const char* w :
         {"go",        "straight", "for",      "steps",     "past",
          "the",       "and",      "turn",     "left",      "right",
          "at",        "you",      "walked",   "following", "route",
          "in",        "order",    "of",       "travel",    "reverse",
          "what",      "is",       "sequence", "direction", "changes",
          "landmarks", "passed",   "actions",  "performed", "options",
          "describe"})
      add(w);
    for (SceneKind scene : {SceneKind::IndoorSingle, SceneKind::IndoorMulti,
                            SceneKind::Outdoor}) {
      for (const auto& name : landmark_vocab(scene)) add_words(name);
      for (const auto& name : action_vocab(scene)) add_words(name);
    }
    std::string joined;
    for (const auto& t : tokens_) {
      joined += t;
      joined += '\n';
    }
    hash_ = fnv1a64(joined.data(), joined.size());
  }

  size_t size() const { return tokens_.size(); }
  uint64_t hash() const { return hash_; }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw OovError(token);
    return it->second;
  }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
      throw DataError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
  }

  int pad() const { return 0; }
  int bos() const { return 1; }
  int eos() const { return 2; }

  /// Whitespace-and-punctuation tokenization. Digit strings split into
  /// single digits; trailing/leading punctuation splits off; anything not
  /// in the vocabulary raises OovError with the offending word.
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    while (in >> word) encode_word(word, ids);
    return ids;
  }

  /// Inverse of encode up to whitespace normalization: punctuation attaches
  /// to the preceding token and adjacent digits concatenate.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    bool prev_digit = false;
    for (int id : ids) {
      const std::string& t = token(id);
      bool is_punct = t.size() == 1 && is_punct_char(t[0]);
      bool is_digit = t.size() == 1 && std::isdigit(
                                           static_cast<unsigned char>(t[0]));
      if (out.empty()) {
        out += t;
      } else if (is_punct || (is_digit && prev_digit)) {
        out += t;
      } else {
        out += ' ';
        out += t;
      }
      prev_digit = is_digit;
    }
    return out;
  }

 private:
  static constexpr const char* kPunct = ".;,:?)";

  static bool is_punct_char(char c) {
    for (const char* p = kPunct; *p; ++p)
      if (*p == c) return true;
    return false;
  }

  void add(const std::string& token) {
    if (index_.count(token)) return;
    index_[token] = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
  }

  void add_words(const std::string& phrase) {
    std::istringstream in(phrase);
    std::string w;
    while (in >> w) add(w);
  }

  void encode_word(const std::string& word, std::vector<int>& ids) const {
    auto it = index_.find(word);
    if (it != index_.end()) {
      ids.push_back(it->second);
      return;
    }
    size_t begin = 0, end = word.size();
    std::vector<int> leading, trailing;
    while (begin < end && is_punct_char(word[begin]))
      leading.push_back(id(std::string(1, word[begin++])));
    while (end > begin && is_punct_char(word[end - 1]))
      trailing.push_back(id(std::string(1, word[--end])));
    const std::string core = word.substr(begin, end - begin);
    ids.insert(ids.end(), leading.begin(), leading.end());
    if (!core.empty()) {
      auto found = index_.find(core);
      if (found != index_.end()) {
        ids.push_back(found->second);
      } else if (std::all_of(core.begin(), core.end(), [](char c) {
                   return std::isdigit(static_cast<unsigned char>(c));
                 })) {
        for (char c : core) ids.push_back(id(std::string(1, c)));
      } else {
        throw OovError(core);
      }
    }
    ids.insert(ids.end(), trailing.rbegin(), trailing.rend());
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  uint64_t hash_ = 0;
};

inline const Vocab& default_vocab() {
  static const Vocab vocab;
  return vocab;
}

}  // namespace routelab
