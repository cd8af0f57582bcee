#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ph/errors.hpp"

namespace ph {

// Whitespace/punctuation tokenizer: lowercase, alphanumeric runs become
// tokens, each punctuation character becomes its own token. Bytes outside
// ASCII are treated as word characters so UTF-8 sequences stay intact.
inline std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  };
  for (const char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && !std::isalnum(u)) {
      flush();
      out.push_back(std::string(1, ch));
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return out;
}

// Token table with fixed reserved ids and dense ids in [0, size).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kReservedCount = 5;

  Vocab() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) add(t);
  }

  // Reserved tokens first, then the corpus tokens in sorted order so the
  // id assignment is independent of corpus line order.
  static Vocab build(const std::vector<std::string>& corpus) {
    std::set<std::string> unique;
    for (const std::string& line : corpus) {
      for (std::string& tok : split_tokens(line)) unique.insert(std::move(tok));
    }
    Vocab v;
    for (const std::string& tok : unique) {
      if (v.ids_.find(tok) == v.ids_.end()) v.add(tok);
    }
    return v;
  }

  int id(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  int size() const { return static_cast<int>(tokens_.size()); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Used by deserialization; tokens must arrive in id order.
  void add(std::string token) {
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Lowercased word/punctuation ids; no [CLS]/[SEP] framing here.
inline std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> out;
  for (const std::string& tok : split_tokens(text)) out.push_back(vocab.id(tok));
  return out;
}

}  // namespace ph
