#include "mtb/episodes.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace mtb {

int LabeledSet::relation_id(const std::string& name) const {
  auto it = std::find(relation_names.begin(), relation_names.end(), name);
  if (it == relation_names.end()) throw Error("unknown relation '" + name + "'");
  return static_cast<int>(it - relation_names.begin());
}

std::vector<int> relation_types(std::span<const LabeledStatement> statements) {
  std::set<int> types;
  for (const auto& s : statements) types.insert(s.relation);
  return {types.begin(), types.end()};
}

namespace {

std::string type_name(int type, const EpisodeOptions& options) {
  if (type >= 0 && static_cast<std::size_t>(type) < options.relation_names.size()) {
    return options.relation_names[static_cast<std::size_t>(type)];
  }
  return "relation " + std::to_string(type);
}

// k distinct elements of `pool`, uniformly.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<Episode> build_episodes(std::span<const LabeledStatement> statements, std::span<const int> eval_types,
                                    int n_way, int k_shot, std::size_t count, std::uint64_t seed,
                                    const EpisodeOptions& options) {
  if (n_way < 2) throw Error("episodes need at least 2 classes");
  if (k_shot < 1) throw Error("episodes need at least 1 shot");
  const std::set<int> types(eval_types.begin(), eval_types.end());
  if (types.size() < static_cast<std::size_t>(n_way)) {
    throw Error("need " + std::to_string(n_way) + " relation types for " + std::to_string(n_way) + "-way episodes, have " +
                std::to_string(types.size()));
  }

  std::map<int, std::vector<std::size_t>> by_type;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    if (types.count(statements[i].relation)) by_type[statements[i].relation].push_back(i);
  }
  for (int t : types) {
    const std::size_t have = by_type[t].size();
    if (have < static_cast<std::size_t>(k_shot) + 1) {
      throw Error("relation type '" + type_name(t, options) + "' has " + std::to_string(have) + " statements, need " +
                  std::to_string(k_shot + 1));
    }
  }
  const std::vector<int> type_list(types.begin(), types.end());

  Rng rng(seed);
  std::vector<Episode> episodes;
  episodes.reserve(count);
  std::vector<std::size_t> type_slots(type_list.size());
  for (std::size_t i = 0; i < type_slots.size(); ++i) type_slots[i] = i;

  for (std::size_t e = 0; e < count; ++e) {
    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    for (std::size_t slot : sample_without_replacement(type_slots, static_cast<std::size_t>(n_way), rng)) {
      ep.classes.push_back(type_list[slot]);
    }
    ep.true_class = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_way)));
    ep.support.resize(static_cast<std::size_t>(n_way));
    for (int c = 0; c < n_way; ++c) {
      const int type = ep.classes[static_cast<std::size_t>(c)];
      const auto& pool = by_type[type];
      if (c != ep.true_class) {
        ep.support[static_cast<std::size_t>(c)] = sample_without_replacement(pool, static_cast<std::size_t>(k_shot), rng);
        continue;
      }
      bool placed = false;
      for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
        const std::size_t query = pool[uniform_index(rng, pool.size())];
        std::vector<std::size_t> rest;
        for (std::size_t id : pool) {
          if (id == query) continue;
          if (options.distinct_query_group && statements[id].group >= 0 &&
              statements[id].group == statements[query].group) {
            continue;
          }
          rest.push_back(id);
        }
        if (rest.size() < static_cast<std::size_t>(k_shot)) continue;
        ep.query = query;
        ep.support[static_cast<std::size_t>(c)] = sample_without_replacement(std::move(rest), static_cast<std::size_t>(k_shot), rng);
        placed = true;
      }
      if (!placed) {
        throw Error("relation type '" + type_name(type, options) + "' lacks " + std::to_string(k_shot) +
                    " supports outside the query's group");
      }
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace mtb
