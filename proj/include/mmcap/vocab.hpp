#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mmcap/common.hpp"

namespace mmcap {

// Shared tokenization used by training, decoding and metrics: lowercase,
// strip punctuation characters, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();  // reserved tokens only
  explicit Vocabulary(const std::vector<std::string>& tokens_in_id_order);

  int add(const std::string& token);  // id of existing or newly appended token
  int id(const std::string& token) const;  // kUnk for unknown tokens
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mmcap
