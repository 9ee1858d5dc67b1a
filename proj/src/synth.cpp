#include "mtb/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>

namespace mtb {

void SynthConfig::validate() const {
  if (num_relations < 2) throw Error("num_relations must be at least 2");
  if (templates_per_relation < 1) throw Error("templates_per_relation must be at least 1");
  if (entities < 4) throw Error("entities must be at least 4");
  if (docs < 1) throw Error("docs must be at least 1");
  if (max_sentences_per_doc < 1) throw Error("max_sentences_per_doc must be at least 1");
  if (min_mentions_per_fact < 2 || max_mentions_per_fact < min_mentions_per_fact) {
    throw Error("need 2 <= min_mentions_per_fact <= max_mentions_per_fact");
  }
  if (!(filler_prob >= 0.0 && filler_prob < 1.0)) throw Error("filler_prob must be in [0, 1)");
}

namespace {

constexpr std::string_view kOnsets = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make(int syllables) {
    for (;;) {
      std::string w;
      for (int i = 0; i < syllables; ++i) {
        w += kOnsets[uniform_index(rng_, kOnsets.size())];
        w += kVowels[uniform_index(rng_, kVowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> make_many(std::size_t n, int min_syl, int max_syl) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(make(min_syl + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(max_syl - min_syl + 1)))));
    }
    return out;
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string pad(const char* prefix, int value, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

std::pair<int, int> random_pair(Rng& rng, int n) {
  const int a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
  int b = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n - 1)));
  if (b >= a) ++b;
  return {a, b};
}

}  // namespace

SynthWorld::SynthWorld(const SynthConfig& config) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(config_.seed, 1));
  WordMaker words(rng);
  // One-syllable filler words, shared by every template.
  filler_ = words.make_many(8, 1, 1);
  for (int r = 0; r < config_.num_relations; ++r) {
    relation_names_.push_back(pad("rel", r, 2));
    for (int t = 0; t < config_.templates_per_relation; ++t) {
      SynthTemplate tpl;
      tpl.relation = r;
      if (config_.uniform_shape) {
        tpl.prefix = words.make_many(1, 2, 3);
        tpl.middle = words.make_many(2, 2, 3);
      } else {
        tpl.prefix = words.make_many(uniform_index(rng, 2), 2, 3);
        tpl.middle = words.make_many(2 + uniform_index(rng, 2), 2, 3);
        tpl.suffix = words.make_many(uniform_index(rng, 2), 2, 3);
      }
      templates_.push_back(std::move(tpl));
    }
  }
  for (int e = 0; e < config_.entities; ++e) {
    SynthEntity ent;
    ent.id = pad("Q", e, 4);
    ent.tokens = words.make_many(1 + uniform_index(rng, 2), 3, 3);
    entities_.push_back(std::move(ent));
  }
}

std::vector<int> SynthWorld::templates_of(int relation) const {
  std::vector<int> out;
  for (std::size_t t = 0; t < templates_.size(); ++t) {
    if (templates_[t].relation == relation) out.push_back(static_cast<int>(t));
  }
  return out;
}

SynthSentence SynthWorld::render(int template_id, int e1, int e2, Rng& rng) const {
  const SynthTemplate& tpl = templates_.at(static_cast<std::size_t>(template_id));
  SynthSentence s;
  auto words = [&](const std::vector<std::string>& ws) {
    for (const auto& w : ws) {
      s.tokens.push_back(w);
      if (uniform01(rng) < config_.filler_prob) s.tokens.push_back(filler_[uniform_index(rng, filler_.size())]);
    }
  };
  auto entity = [&](int e) {
    const auto& toks = entities_.at(static_cast<std::size_t>(e)).tokens;
    const int start = static_cast<int>(s.tokens.size());
    s.tokens.insert(s.tokens.end(), toks.begin(), toks.end());
    return Span{start, static_cast<int>(s.tokens.size())};
  };
  words(tpl.prefix);
  s.s1 = entity(e1);
  words(tpl.middle);
  s.s2 = entity(e2);
  words(tpl.suffix);
  s.tokens.push_back(".");
  return s;
}

SynthCorpus synth_corpus(const SynthWorld& world) {
  const SynthConfig& cfg = world.config();
  Rng rng(mix_seed(cfg.seed, 2));

  std::vector<int> doc_sentences(static_cast<std::size_t>(cfg.docs));
  std::size_t total = 0;
  for (auto& n : doc_sentences) {
    n = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.max_sentences_per_doc)));
    total += static_cast<std::size_t>(n);
  }
  const auto min_m = static_cast<std::size_t>(cfg.min_mentions_per_fact);
  const auto max_m = static_cast<std::size_t>(cfg.max_mentions_per_fact);
  if (total < min_m) {
    doc_sentences[0] += static_cast<int>(min_m - total);
    total = min_m;
  }

  const std::size_t max_facts = static_cast<std::size_t>(cfg.entities) * static_cast<std::size_t>(cfg.entities - 1);
  SynthCorpus corpus;
  std::set<std::pair<int, int>> seen;
  std::vector<std::size_t> slots;
  std::size_t remaining = total;
  while (remaining > 0) {
    std::size_t m = min_m + uniform_index(rng, max_m - min_m + 1);
    if (m > remaining || remaining - m < min_m) m = remaining;
    if (corpus.facts.size() == max_facts) throw Error("too few entities for the requested number of facts");
    std::pair<int, int> p;
    do {
      p = random_pair(rng, cfg.entities);
    } while (!seen.insert(p).second);
    const int relation = static_cast<int>(corpus.facts.size() % static_cast<std::size_t>(cfg.num_relations));
    corpus.facts.push_back({p.first, p.second, relation});
    slots.insert(slots.end(), m, corpus.facts.size() - 1);
    remaining -= m;
  }
  std::shuffle(slots.begin(), slots.end(), rng);

  std::vector<std::vector<int>> by_relation(static_cast<std::size_t>(cfg.num_relations));
  for (int r = 0; r < cfg.num_relations; ++r) by_relation[static_cast<std::size_t>(r)] = world.templates_of(r);

  std::size_t next = 0;
  for (int d = 0; d < cfg.docs; ++d) {
    Document doc;
    doc.doc_id = pad("doc", d, 6);
    for (int k = 0; k < doc_sentences[static_cast<std::size_t>(d)]; ++k) {
      const SynthFact& fact = corpus.facts[slots[next++]];
      const auto& tpls = by_relation[static_cast<std::size_t>(fact.relation)];
      const int tpl = tpls[uniform_index(rng, tpls.size())];
      SynthSentence s = world.render(tpl, fact.e1, fact.e2, rng);
      const int off = static_cast<int>(doc.tokens.size());
      const Span s1{s.s1.start + off, s.s1.end + off};
      const Span s2{s.s2.start + off, s.s2.end + off};
      const auto& e1 = world.entities()[static_cast<std::size_t>(fact.e1)].id;
      const auto& e2 = world.entities()[static_cast<std::size_t>(fact.e2)].id;
      doc.tokens.insert(doc.tokens.end(), s.tokens.begin(), s.tokens.end());
      doc.mentions.push_back({s1.start, s1.end, e1});
      doc.mentions.push_back({s2.start, s2.end, e2});
      corpus.gold.push_back(
          {doc.doc_id, k, s1, s2, e1, e2, world.relation_names()[static_cast<std::size_t>(fact.relation)], tpl});
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

std::vector<LabeledRecord> synth_labeled(const SynthWorld& world, const std::vector<int>& relations, int per_relation,
                                         std::uint64_t seed) {
  Rng rng(mix_seed(seed, 3));
  std::vector<LabeledRecord> out;
  for (int r : relations) {
    if (r < 0 || r >= world.config().num_relations) throw Error("relation id out of range: " + std::to_string(r));
    const auto tpls = world.templates_of(r);
    for (int i = 0; i < per_relation; ++i) {
      const int tpl = tpls[uniform_index(rng, tpls.size())];
      const auto [a, b] = random_pair(rng, world.config().entities);
      SynthSentence s = world.render(tpl, a, b, rng);
      out.push_back({std::move(s.tokens), s.s1, s.s2, world.relation_names()[static_cast<std::size_t>(r)], tpl,
                     world.entities()[static_cast<std::size_t>(a)].id,
                     world.entities()[static_cast<std::size_t>(b)].id});
    }
  }
  return out;
}

std::vector<LabeledRecord> synth_two_clause(const SynthWorld& world, int count, double nil_fraction,
                                            std::uint64_t seed) {
  if (!(nil_fraction >= 0.0 && nil_fraction <= 1.0)) throw Error("nil_fraction must be in [0, 1]");
  const int num_rel = world.config().num_relations;
  const int num_ent = world.config().entities;
  Rng rng(mix_seed(seed, 4));
  std::vector<LabeledRecord> out;
  for (int i = 0; i < count; ++i) {
    const auto [r1, r2] = random_pair(rng, num_rel);
    const auto t1s = world.templates_of(r1);
    const auto t2s = world.templates_of(r2);
    const int t1 = t1s[uniform_index(rng, t1s.size())];
    const int t2 = t2s[uniform_index(rng, t2s.size())];
    std::array<int, 4> ents{};
    for (std::size_t k = 0; k < ents.size(); ++k) {
      bool fresh = false;
      while (!fresh) {
        ents[k] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(num_ent)));
        fresh = std::find(ents.begin(), ents.begin() + static_cast<std::ptrdiff_t>(k), ents[k]) ==
                ents.begin() + static_cast<std::ptrdiff_t>(k);
      }
    }
    SynthSentence c1 = world.render(t1, ents[0], ents[1], rng);
    SynthSentence c2 = world.render(t2, ents[2], ents[3], rng);
    c1.tokens.back() = ",";
    const int off = static_cast<int>(c1.tokens.size());
    std::array<Span, 4> spans{c1.s1, c1.s2, Span{c2.s1.start + off, c2.s1.end + off},
                              Span{c2.s2.start + off, c2.s2.end + off}};

    LabeledRecord rec;
    rec.tokens = std::move(c1.tokens);
    rec.tokens.insert(rec.tokens.end(), c2.tokens.begin(), c2.tokens.end());
    int first = 0, second = 1;
    if (uniform01(rng) < nil_fraction) {
      static constexpr std::array<std::pair<int, int>, 4> kCross{{{0, 2}, {0, 3}, {1, 2}, {1, 3}}};
      std::tie(first, second) = kCross[uniform_index(rng, kCross.size())];
      rec.relation = kNoRelation;
    } else if (uniform01(rng) < 0.5) {
      rec.relation = world.relation_names()[static_cast<std::size_t>(r1)];
      rec.group = t1;
    } else {
      first = 2;
      second = 3;
      rec.relation = world.relation_names()[static_cast<std::size_t>(r2)];
      rec.group = t2;
    }
    rec.s1 = spans[static_cast<std::size_t>(first)];
    rec.s2 = spans[static_cast<std::size_t>(second)];
    rec.e1 = world.entities()[static_cast<std::size_t>(ents[static_cast<std::size_t>(first)])].id;
    rec.e2 = world.entities()[static_cast<std::size_t>(ents[static_cast<std::size_t>(second)])].id;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_gold(const std::filesystem::path& path, std::span<const GoldRecord> gold) {
  using nlohmann::json;
  std::string text = json{{"format", "mtb.gold"}, {"version", kFormatVersion}}.dump() + "\n";
  for (const auto& g : gold) {
    text += json{{"doc_id", g.doc_id},
                 {"sentence", g.sentence},
                 {"s1", {g.s1.start, g.s1.end}},
                 {"s2", {g.s2.start, g.s2.end}},
                 {"e1", g.e1},
                 {"e2", g.e2},
                 {"relation", g.relation},
                 {"template", g.template_id}}
                .dump();
    text += '\n';
  }
  write_file(path, text);
}

}  // namespace mtb
