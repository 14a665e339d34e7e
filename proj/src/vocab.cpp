#include "mmcap/vocab.hpp"

#include <array>
#include <cctype>

namespace mmcap {

namespace {

const std::array<const char*, 4> kReserved = {"<pad>", "<sos>", "<eos>", "<unk>"};

bool is_punct_to_strip(char c) {
  static const std::string strip = "!\"#$%&'()*+,-./:;=?@[\\]^`{|}~";
  return strip.find(c) != std::string::npos;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      continue;
    }
    if (is_punct_to_strip(raw)) continue;
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReserved) {
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens_in_id_order) {
  if (tokens_in_id_order.size() < kReserved.size())
    throw VocabularyError("vocabulary must start with the four reserved tokens");
  for (size_t i = 0; i < kReserved.size(); ++i)
    if (tokens_in_id_order[i] != kReserved[i])
      throw VocabularyError("vocabulary id " + std::to_string(i) + " must be " +
                            kReserved[i] + ", got '" + tokens_in_id_order[i] + "'");
  for (const std::string& t : tokens_in_id_order) {
    if (index_.count(t))
      throw VocabularyError("duplicate token '" + t + "' in vocabulary");
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  int new_id = static_cast<int>(tokens_.size());
  index_[token] = new_id;
  tokens_.push_back(token);
  return new_id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw VocabularyError("token id " + std::to_string(id) + " out of range, vocabulary has " +
                          std::to_string(size()) + " entries");
  return tokens_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) > 0; }

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

}  // namespace mmcap
