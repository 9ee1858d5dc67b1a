#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtb/common.hpp"
#include "mtb/corpus.hpp"

namespace mtb {

/// A relation statement whose mention spans may each have been collapsed
/// into a single [BLANK] token.
struct BlankedStatement {
  std::size_t statement_id = 0;  // index of the base statement in its corpus
  std::string e1;
  std::string e2;
  std::string doc_id;
  bool blank1 = false;
  bool blank2 = false;
  std::vector<TokenId> x;
  Span s1;
  Span s2;
};

/// Unblanked view of a statement, so encoders accept both kinds uniformly.
BlankedStatement as_blanked(const RelationStatement& statement, std::size_t statement_id = 0);

/// Keeps each span with probability `alpha`, otherwise replaces it with one
/// [BLANK]. Consumes exactly two uniform draws, s1 first.
BlankedStatement blank(const RelationStatement& statement, std::size_t statement_id, double alpha, Rng& rng);

/// Reinserts the original mention tokens; equals base.x.
std::vector<TokenId> unblank(const BlankedStatement& blanked, const RelationStatement& base);

enum class PairKind { kPositive, kHardNegative, kUniformNegative };

const char* to_string(PairKind kind);
PairKind pair_kind_from_string(const std::string& name);

struct StatementPair {
  BlankedStatement a;
  BlankedStatement b;
  int label = 0;
  PairKind kind = PairKind::kUniformNegative;
};

/// 1 iff both entity slots match.
inline int same_pair_label(const std::string& a1, const std::string& a2, const std::string& b1,
                           const std::string& b2) {
  return a1 == b1 && a2 == b2 ? 1 : 0;
}

struct PairGenConfig {
  double alpha = 0.7;
  double pos_fraction = 0.5;
  double hard_fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_pairs = 0;
  bool exclude_same_doc = false;

  void validate() const;
};

using IdPair = std::pair<std::size_t, std::size_t>;

/// Lookup tables over a statement corpus keyed by entity slots.
class PairIndex {
 public:
  explicit PairIndex(std::span<const RelationStatement> statements);

  std::size_t size() const { return e1_.size(); }
  bool empty() const { return e1_.empty(); }

  /// Statement ids whose (e1, e2) equals the given ordered pair, ascending.
  std::vector<std::size_t> with_pair(const std::string& e1, const std::string& e2) const;

  /// Statements sharing exactly one slot with `id` (e1 xor e2), ascending.
  std::vector<std::size_t> hard_negative_candidates(std::size_t id) const;
  std::size_t hard_negative_count(std::size_t id) const;
  /// k-th candidate in internal slot order, for k < hard_negative_count(id); a
  /// permutation of hard_negative_candidates(id).
  std::size_t hard_negative_at(std::size_t id, std::size_t k) const;

  /// All unordered id pairs (i < j) with matching slots, lexicographic order.
  std::vector<IdPair> positive_pairs() const;
  /// All unordered id pairs (i < j) sharing exactly one slot.
  std::vector<IdPair> hard_negative_pairs() const;

  int label(std::size_t i, std::size_t j) const { return e1_[i] == e1_[j] && e2_[i] == e2_[j] ? 1 : 0; }

  /// Ids grouped by (e1, e2), groups with >= 2 members only.
  const std::vector<std::vector<std::size_t>>& positive_groups() const { return groups_; }

 private:
  struct Block {
    std::size_t begin = 0;
    std::size_t end = 0;
  };
  Block e2_block_in_e1(std::size_t id) const;
  Block e1_block_in_e2(std::size_t id) const;

  std::vector<int> e1_;  // interned entity ids per statement
  std::vector<int> e2_;
  std::map<std::string, int> entity_ids_;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_pair_;
  std::vector<std::vector<std::size_t>> by_e1_;  // per entity: ids with that e1, sorted by (e2, id)
  std::vector<std::vector<std::size_t>> by_e2_;  // per entity: ids with that e2, sorted by (e1, id)
  std::vector<std::vector<std::size_t>> groups_;
};

PairIndex index_by_pair(std::span<const RelationStatement> statements);

/// Samples up to max_pairs statement pairs: round(max_pairs * pos_fraction)
/// positives drawn uniformly from matching unordered pairs, and the rest split
/// hard_fraction : (1 - hard_fraction) between single-shared-entity pairs and
/// uniform non-matching pairs. Each side is blanked independently. The kind
/// sequence is shuffled; output is a pure function of the inputs and seed.
std::vector<StatementPair> generate_pairs(std::span<const RelationStatement> statements, const PairGenConfig& config);

}  // namespace mtb
