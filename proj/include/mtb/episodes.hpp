#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtb/corpus.hpp"

namespace mtb {

/// A relation statement with a gold relation type. `group` optionally names a
/// surface-form family (e.g. the template that produced it); -1 when unknown.
struct LabeledStatement {
  RelationStatement statement;
  int relation = 0;
  int group = -1;
};

struct LabeledSet {
  std::vector<LabeledStatement> items;
  std::vector<std::string> relation_names;

  /// Throws if the name is not in relation_names.
  int relation_id(const std::string& name) const;
};

/// One N-way K-shot instance. support[c] holds K statement indices of
/// relation classes[c]; the query belongs to classes[true_class].
struct Episode {
  int n_way = 0;
  int k_shot = 0;
  std::vector<int> classes;
  std::vector<std::vector<std::size_t>> support;
  std::size_t query = 0;
  int true_class = 0;
};

struct EpisodeOptions {
  /// Query never shares a group with the supports of its own class.
  bool distinct_query_group = false;
  /// Used in error messages when non-empty.
  std::vector<std::string> relation_names;
};

/// Samples `count` episodes whose classes are drawn from eval_types only.
/// Within an episode, statements are drawn without replacement.
std::vector<Episode> build_episodes(std::span<const LabeledStatement> statements, std::span<const int> eval_types,
                                    int n_way, int k_shot, std::size_t count, std::uint64_t seed,
                                    const EpisodeOptions& options = {});

/// Distinct relation ids present in the statements, ascending.
std::vector<int> relation_types(std::span<const LabeledStatement> statements);

}  // namespace mtb
