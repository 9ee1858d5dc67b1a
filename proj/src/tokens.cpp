#include "mtb/tokens.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "mtb/common.hpp"

namespace mtb {

Vocabulary::Vocabulary() {
  for (std::string_view tok : kReservedTokens) {
    ids_.emplace(std::string(tok), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(tok);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> stream, int min_count) {
  if (min_count < 1) throw Error("min_count must be >= 1");
  if (stream.empty()) throw Error("empty corpus");

  std::unordered_map<std::string, long> counts;
  for (const auto& tok : stream) ++counts[tok];

  std::vector<std::pair<std::string, long>> kept;
  Vocabulary vocab;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && !vocab.contains(tok)) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (auto& [tok, n] : kept) {
    vocab.ids_.emplace(tok, static_cast<TokenId>(vocab.tokens_.size()));
    vocab.tokens_.push_back(std::move(tok));
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedTokens.size()) throw Error("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kReservedTokens.size(); ++i) {
    if (tokens[i] != kReservedTokens[i]) {
      throw Error("vocabulary line " + std::to_string(i + 1) + ": expected reserved token " +
                  std::string(kReservedTokens[i]));
    }
  }
  Vocabulary vocab;
  for (std::size_t i = kReservedTokens.size(); i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw Error("vocabulary line " + std::to_string(i + 1) + ": empty token");
    auto [it, inserted] = vocab.ids_.emplace(tokens[i], static_cast<TokenId>(i));
    if (!inserted) throw Error("vocabulary line " + std::to_string(i + 1) + ": duplicate token '" + tokens[i] + "'");
    vocab.tokens_.push_back(std::move(tokens[i]));
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? reserved::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw Error("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id_of(tok));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (TokenId id : ids) tokens.push_back(token_of(id));
  return tokens;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("");
  for (const auto& tok : tokens_) h = fnv1a(tok + '\n', h);
  return h;
}

namespace {

bool is_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '"': case '\'': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// Length in bytes of the whitespace code point starting at text[i], or 0.
std::size_t whitespace_length(std::string_view text, std::size_t i) {
  auto byte = [&](std::size_t k) -> unsigned char {
    return k < text.size() ? static_cast<unsigned char>(text[k]) : 0;
  };
  unsigned char c = byte(i);
  if (c == ' ' || (c >= '\t' && c <= '\r')) return 1;
  if (c == 0xC2 && (byte(i + 1) == 0x85 || byte(i + 1) == 0xA0)) return 2;  // NEL, NBSP
  if (c == 0xE1 && byte(i + 1) == 0x9A && byte(i + 2) == 0x80) return 3;    // U+1680
  if (c == 0xE2 && byte(i + 1) == 0x80) {
    unsigned char d = byte(i + 2);
    if ((d >= 0x80 && d <= 0x8A) || d == 0xA8 || d == 0xA9 || d == 0xAF) return 3;  // U+2000..200A, 2028, 2029, 202F
  }
  if (c == 0xE2 && byte(i + 1) == 0x81 && byte(i + 2) == 0x9F) return 3;  // U+205F
  if (c == 0xE3 && byte(i + 1) == 0x80 && byte(i + 2) == 0x80) return 3;  // U+3000
  return 0;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::size_t ws = whitespace_length(text, i); ws > 0) {
      flush();
      i += ws;
      continue;
    }
    char c = text[i];
    if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      current.push_back(c);
    }
    ++i;
  }
  flush();
  return out;
}

}  // namespace mtb
