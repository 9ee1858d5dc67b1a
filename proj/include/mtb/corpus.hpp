#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtb/common.hpp"
#include "mtb/tokens.hpp"

namespace mtb {

struct Mention {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  std::string entity_id;

  Span span() const { return {start, end}; }
};

/// Tokenized passage with entity-linked mention spans, sorted by start.
struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;
};

/// Throws if a mention is out of bounds, empty, or mentions are not sorted by start.
void validate_document(const Document& doc);

struct StatementSource {
  std::string doc_id;
  int window_offset = 0;

  auto operator<=>(const StatementSource&) const = default;
};

/// A token window wrapped in [CLS] ... [SEP] with two delimited entity mentions.
/// Span indices are positions in `x`; s1 precedes s2 in the source text.
struct RelationStatement {
  std::vector<TokenId> x;
  Span s1;
  Span s2;
  std::string e1;
  std::string e2;
  StatementSource source;

  /// Index of the trailing [SEP].
  int sep_index() const { return static_cast<int>(x.size()) - 1; }
};

/// Throws Error describing the first violated invariant:
/// x = [CLS] ... [SEP] and 0 < s1.start < s1.end <= s2.start < s2.end <= sep_index().
void validate_statement(const RelationStatement& statement);

/// One statement per position-ordered, non-overlapping mention pair whose
/// combined extent fits in `window` tokens. The window is centered on the
/// pair and clipped to the document. Output is sorted by
/// (window offset, s1.start, s2.start).
std::vector<RelationStatement> extract_statements(const Document& doc, const Vocabulary& vocab, int window = 40);

/// Extracts every document and returns statements ordered by
/// (doc_id, window offset, s1.start, s2.start), independent of `threads`.
std::vector<RelationStatement> extract_corpus(std::span<const Document> docs, const Vocabulary& vocab,
                                              int window = 40, int threads = 1);

/// Keeps at most `cap` statements per entity id (e1 and e2 slots both count).
/// Statements get seeded random priorities and are admitted greedily in
/// priority order; survivors keep their input order.
std::vector<RelationStatement> cap_by_entity(std::span<const RelationStatement> statements, int cap,
                                             std::uint64_t seed);

/// All document tokens in document order; input to Vocabulary::build.
std::vector<std::string> corpus_tokens(std::span<const Document> docs);

}  // namespace mtb
