#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtb {

using TokenId = std::int32_t;

namespace reserved {
inline constexpr TokenId kCls = 0;
inline constexpr TokenId kSep = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kBlank = 5;
inline constexpr TokenId kE1Start = 6;
inline constexpr TokenId kE1End = 7;
inline constexpr TokenId kE2Start = 8;
inline constexpr TokenId kE2End = 9;
inline constexpr TokenId kCount = 10;
}  // namespace reserved

inline constexpr std::array<std::string_view, reserved::kCount> kReservedTokens{
    "[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]", "[BLANK]", "[E1start]", "[E1end]", "[E2start]", "[E2end]"};

inline bool is_reserved(TokenId id) { return id >= 0 && id < reserved::kCount; }

/// Dense token <-> id mapping. The ten reserved symbols always occupy ids 0..9.
/// Immutable after construction.
class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();

  /// Tokens with frequency >= min_count, most frequent first, ties broken
  /// lexicographically. Throws on an empty stream.
  static Vocabulary build(std::span<const std::string> stream, int min_count);

  /// From an explicit id-ordered token list, which must start with the reserved block.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  /// One token per line, line number = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  /// FNV-1a over the newline-joined token list; checkpoints record it.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> ids_;
};

/// Whitespace + punctuation tokenizer. Splits on Unicode whitespace, emits
/// . , ; : " ' ( ) as standalone tokens and lowercases ASCII letters.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace mtb
