#include "mtb/pairgen.hpp"

#include <algorithm>
#include <cmath>

namespace mtb {

BlankedStatement as_blanked(const RelationStatement& st, std::size_t statement_id) {
  BlankedStatement out;
  out.statement_id = statement_id;
  out.e1 = st.e1;
  out.e2 = st.e2;
  out.doc_id = st.source.doc_id;
  out.x = st.x;
  out.s1 = st.s1;
  out.s2 = st.s2;
  return out;
}

BlankedStatement blank(const RelationStatement& st, std::size_t statement_id, double alpha, Rng& rng) {
  const bool keep1 = uniform01(rng) < alpha;
  const bool keep2 = uniform01(rng) < alpha;

  BlankedStatement out = as_blanked(st, statement_id);
  out.blank1 = !keep1;
  out.blank2 = !keep2;
  if (keep1 && keep2) return out;

  const auto& x = st.x;
  std::vector<TokenId> y;
  y.reserve(x.size());
  y.insert(y.end(), x.begin(), x.begin() + st.s1.start);
  out.s1.start = static_cast<int>(y.size());
  if (keep1) {
    y.insert(y.end(), x.begin() + st.s1.start, x.begin() + st.s1.end);
  } else {
    y.push_back(reserved::kBlank);
  }
  out.s1.end = static_cast<int>(y.size());
  y.insert(y.end(), x.begin() + st.s1.end, x.begin() + st.s2.start);
  out.s2.start = static_cast<int>(y.size());
  if (keep2) {
    y.insert(y.end(), x.begin() + st.s2.start, x.begin() + st.s2.end);
  } else {
    y.push_back(reserved::kBlank);
  }
  out.s2.end = static_cast<int>(y.size());
  y.insert(y.end(), x.begin() + st.s2.end, x.end());
  out.x = std::move(y);
  return out;
}

std::vector<TokenId> unblank(const BlankedStatement& bl, const RelationStatement& base) {
  const auto& y = bl.x;
  std::vector<TokenId> x(y.begin(), y.begin() + bl.s1.start);
  if (bl.blank1) {
    x.insert(x.end(), base.x.begin() + base.s1.start, base.x.begin() + base.s1.end);
  } else {
    x.insert(x.end(), y.begin() + bl.s1.start, y.begin() + bl.s1.end);
  }
  x.insert(x.end(), y.begin() + bl.s1.end, y.begin() + bl.s2.start);
  if (bl.blank2) {
    x.insert(x.end(), base.x.begin() + base.s2.start, base.x.begin() + base.s2.end);
  } else {
    x.insert(x.end(), y.begin() + bl.s2.start, y.begin() + bl.s2.end);
  }
  x.insert(x.end(), y.begin() + bl.s2.end, y.end());
  return x;
}

const char* to_string(PairKind kind) {
  switch (kind) {
    case PairKind::kPositive: return "positive";
    case PairKind::kHardNegative: return "hard_negative";
    case PairKind::kUniformNegative: return "uniform_negative";
  }
  return "unknown";
}

PairKind pair_kind_from_string(const std::string& name) {
  if (name == "positive") return PairKind::kPositive;
  if (name == "hard_negative") return PairKind::kHardNegative;
  if (name == "uniform_negative") return PairKind::kUniformNegative;
  throw Error("unknown pair kind '" + name + "'");
}

void PairGenConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must be in [0, 1]");
  if (!(pos_fraction >= 0.0 && pos_fraction <= 1.0)) throw Error("pos_fraction must be in [0, 1]");
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) throw Error("hard_fraction must be in [0, 1]");
}

PairIndex::PairIndex(std::span<const RelationStatement> statements) {
  for (const auto& st : statements) {
    entity_ids_.emplace(st.e1, 0);
    entity_ids_.emplace(st.e2, 0);
  }
  int next = 0;
  for (auto& [name, id] : entity_ids_) id = next++;

  e1_.reserve(statements.size());
  e2_.reserve(statements.size());
  by_e1_.resize(entity_ids_.size());
  by_e2_.resize(entity_ids_.size());
  for (std::size_t i = 0; i < statements.size(); ++i) {
    const int a = entity_ids_.at(statements[i].e1);
    const int b = entity_ids_.at(statements[i].e2);
    e1_.push_back(a);
    e2_.push_back(b);
    by_pair_[{a, b}].push_back(i);
    by_e1_[static_cast<std::size_t>(a)].push_back(i);
    by_e2_[static_cast<std::size_t>(b)].push_back(i);
  }
  for (auto& ids : by_e1_) {
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t l, std::size_t r) { return e2_[l] < e2_[r]; });
  }
  for (auto& ids : by_e2_) {
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t l, std::size_t r) { return e1_[l] < e1_[r]; });
  }
  for (const auto& [key, ids] : by_pair_) {
    if (ids.size() >= 2) groups_.push_back(ids);
  }
}

std::vector<std::size_t> PairIndex::with_pair(const std::string& e1, const std::string& e2) const {
  auto a = entity_ids_.find(e1);
  auto b = entity_ids_.find(e2);
  if (a == entity_ids_.end() || b == entity_ids_.end()) return {};
  auto it = by_pair_.find({a->second, b->second});
  return it == by_pair_.end() ? std::vector<std::size_t>{} : it->second;
}

PairIndex::Block PairIndex::e2_block_in_e1(std::size_t id) const {
  const auto& ids = by_e1_[static_cast<std::size_t>(e1_[id])];
  const int key = e2_[id];
  auto lo = std::partition_point(ids.begin(), ids.end(), [&](std::size_t s) { return e2_[s] < key; });
  auto hi = std::partition_point(lo, ids.end(), [&](std::size_t s) { return e2_[s] == key; });
  return {static_cast<std::size_t>(lo - ids.begin()), static_cast<std::size_t>(hi - ids.begin())};
}

PairIndex::Block PairIndex::e1_block_in_e2(std::size_t id) const {
  const auto& ids = by_e2_[static_cast<std::size_t>(e2_[id])];
  const int key = e1_[id];
  auto lo = std::partition_point(ids.begin(), ids.end(), [&](std::size_t s) { return e1_[s] < key; });
  auto hi = std::partition_point(lo, ids.end(), [&](std::size_t s) { return e1_[s] == key; });
  return {static_cast<std::size_t>(lo - ids.begin()), static_cast<std::size_t>(hi - ids.begin())};
}

std::size_t PairIndex::hard_negative_count(std::size_t id) const {
  const Block first = e2_block_in_e1(id);
  const Block second = e1_block_in_e2(id);
  return by_e1_[static_cast<std::size_t>(e1_[id])].size() - (first.end - first.begin) +
         by_e2_[static_cast<std::size_t>(e2_[id])].size() - (second.end - second.begin);
}

std::size_t PairIndex::hard_negative_at(std::size_t id, std::size_t k) const {
  const auto& side1 = by_e1_[static_cast<std::size_t>(e1_[id])];
  const Block block1 = e2_block_in_e1(id);
  const std::size_t count1 = side1.size() - (block1.end - block1.begin);
  if (k < count1) return side1[k < block1.begin ? k : k + (block1.end - block1.begin)];
  k -= count1;
  const auto& side2 = by_e2_[static_cast<std::size_t>(e2_[id])];
  const Block block2 = e1_block_in_e2(id);
  if (k >= side2.size() - (block2.end - block2.begin)) throw Error("hard negative index out of range");
  return side2[k < block2.begin ? k : k + (block2.end - block2.begin)];
}

std::vector<std::size_t> PairIndex::hard_negative_candidates(std::size_t id) const {
  const std::size_t count = hard_negative_count(id);
  std::vector<std::size_t> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(hard_negative_at(id, k));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<IdPair> PairIndex::positive_pairs() const {
  std::vector<IdPair> out;
  for (const auto& ids : groups_) {
    for (std::size_t a = 0; a < ids.size(); ++a) {
      for (std::size_t b = a + 1; b < ids.size(); ++b) out.emplace_back(ids[a], ids[b]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<IdPair> PairIndex::hard_negative_pairs() const {
  std::vector<IdPair> out;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t c : hard_negative_candidates(i)) {
      if (c > i) out.emplace_back(i, c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PairIndex index_by_pair(std::span<const RelationStatement> statements) { return PairIndex(statements); }

namespace {

std::uint64_t choose2(std::uint64_t n) { return n * (n - 1) / 2; }

IdPair ordered(std::size_t i, std::size_t j) { return i < j ? IdPair{i, j} : IdPair{j, i}; }

class PositiveSampler {
 public:
  PositiveSampler(const PairIndex& index, std::span<const RelationStatement> statements, bool exclude_same_doc)
      : index_(index), statements_(statements), exclude_same_doc_(exclude_same_doc) {
    std::uint64_t total = 0;
    for (const auto& ids : index.positive_groups()) {
      total += choose2(ids.size());
      cumulative_.push_back(total);
    }
    eligible_ = total;
    if (exclude_same_doc) {
      eligible_ = 0;
      for (const auto& ids : index.positive_groups()) {
        for (std::size_t a = 0; a < ids.size(); ++a) {
          for (std::size_t b = a + 1; b < ids.size(); ++b) eligible_ += !same_doc(ids[a], ids[b]);
        }
      }
    }
  }

  std::uint64_t eligible() const { return eligible_; }

  IdPair draw(Rng& rng) const {
    for (;;) {
      const std::uint64_t r = uniform_index(rng, cumulative_.back());
      const std::size_t g =
          static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), r) - cumulative_.begin());
      std::uint64_t offset = r - (g == 0 ? 0 : cumulative_[g - 1]);
      const auto& ids = index_.positive_groups()[g];
      std::size_t a = 0;
      while (offset >= ids.size() - 1 - a) {
        offset -= ids.size() - 1 - a;
        ++a;
      }
      const std::size_t b = a + 1 + static_cast<std::size_t>(offset);
      if (exclude_same_doc_ && same_doc(ids[a], ids[b])) continue;
      return {ids[a], ids[b]};
    }
  }

 private:
  bool same_doc(std::size_t i, std::size_t j) const {
    return statements_[i].source.doc_id == statements_[j].source.doc_id;
  }

  const PairIndex& index_;
  std::span<const RelationStatement> statements_;
  bool exclude_same_doc_;
  std::vector<std::uint64_t> cumulative_;
  std::uint64_t eligible_ = 0;
};

class HardNegativeSampler {
 public:
  explicit HardNegativeSampler(const PairIndex& index) : index_(index) {
    std::uint64_t total = 0;
    cumulative_.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
      total += index.hard_negative_count(i);
      cumulative_.push_back(total);
    }
  }

  std::uint64_t total() const { return cumulative_.empty() ? 0 : cumulative_.back(); }

  // Uniform over ordered (i, candidate) pairs, hence uniform over unordered pairs.
  IdPair draw(Rng& rng) const {
    const std::uint64_t r = uniform_index(rng, total());
    const std::size_t i =
        static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), r) - cumulative_.begin());
    const std::uint64_t k = r - (i == 0 ? 0 : cumulative_[i - 1]);
    return ordered(i, index_.hard_negative_at(i, static_cast<std::size_t>(k)));
  }

 private:
  const PairIndex& index_;
  std::vector<std::uint64_t> cumulative_;
};

}  // namespace

std::vector<StatementPair> generate_pairs(std::span<const RelationStatement> statements, const PairGenConfig& config) {
  config.validate();
  if (config.max_pairs == 0) return {};
  if (statements.size() < 2) throw Error("pair generation needs at least 2 statements");

  const std::size_t n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(config.max_pairs) * config.pos_fraction));
  const std::size_t n_neg = config.max_pairs - n_pos;
  const std::size_t n_hard = static_cast<std::size_t>(std::llround(static_cast<double>(n_neg) * config.hard_fraction));
  const std::size_t n_uniform = n_neg - n_hard;

  const PairIndex index(statements);
  const PositiveSampler positives(index, statements, config.exclude_same_doc);
  const HardNegativeSampler hard(index);

  if (n_pos > 0 && positives.eligible() == 0) {
    throw Error(config.exclude_same_doc ? "no entity pair occurs twice across documents; cannot sample positives"
                                        : "no entity pair occurs twice; cannot sample positives");
  }
  if (n_hard > 0 && hard.total() == 0) throw Error("no statement pairs share exactly one entity");
  if (n_uniform > 0) {
    std::uint64_t matching = 0;
    for (const auto& ids : index.positive_groups()) matching += choose2(ids.size());
    if (choose2(statements.size()) == matching) throw Error("every statement pair matches; no negatives exist");
  }

  Rng rng(config.seed);
  std::vector<PairKind> kinds;
  kinds.reserve(config.max_pairs);
  kinds.insert(kinds.end(), n_pos, PairKind::kPositive);
  kinds.insert(kinds.end(), n_hard, PairKind::kHardNegative);
  kinds.insert(kinds.end(), n_uniform, PairKind::kUniformNegative);
  std::shuffle(kinds.begin(), kinds.end(), rng);

  std::vector<StatementPair> out;
  out.reserve(kinds.size());
  for (PairKind kind : kinds) {
    IdPair ids;
    switch (kind) {
      case PairKind::kPositive:
        ids = positives.draw(rng);
        break;
      case PairKind::kHardNegative:
        ids = hard.draw(rng);
        break;
      case PairKind::kUniformNegative:
        for (;;) {
          const std::size_t i = uniform_index(rng, statements.size());
          std::size_t j = uniform_index(rng, statements.size() - 1);
          if (j >= i) ++j;
          if (index.label(i, j) == 0) {
            ids = ordered(i, j);
            break;
          }
        }
        break;
    }
    StatementPair pair;
    pair.a = blank(statements[ids.first], ids.first, config.alpha, rng);
    pair.b = blank(statements[ids.second], ids.second, config.alpha, rng);
    pair.label = index.label(ids.first, ids.second);
    pair.kind = kind;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace mtb
