#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtb/corpus.hpp"
#include "mtb/io.hpp"

namespace mtb {

/// Parameters of a templated synthetic relation world.
struct SynthConfig {
  int num_relations = 12;
  int templates_per_relation = 6;
  int entities = 1000;
  int docs = 6000;
  int max_sentences_per_doc = 1;
  int min_mentions_per_fact = 2;
  int max_mentions_per_fact = 4;
  double filler_prob = 0.25;  // chance of a filler word after each template word
  bool uniform_shape = false;  // every template is "w A w w B ." so word counts carry no label
  std::uint64_t seed = 0;

  void validate() const;
};

/// A sentence pattern "prefix A middle B suffix ." for one relation. Words of
/// different templates never overlap.
struct SynthTemplate {
  int relation = 0;
  std::vector<std::string> prefix;
  std::vector<std::string> middle;
  std::vector<std::string> suffix;
};

struct SynthEntity {
  std::string id;
  std::vector<std::string> tokens;
};

struct SynthFact {
  int e1 = 0;
  int e2 = 0;
  int relation = 0;
};

/// One rendered sentence: tokens plus the spans of its two entities.
struct SynthSentence {
  std::vector<std::string> tokens;
  Span s1;
  Span s2;
};

class SynthWorld {
 public:
  explicit SynthWorld(const SynthConfig& config);

  const SynthConfig& config() const { return config_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  const std::vector<SynthTemplate>& templates() const { return templates_; }
  const std::vector<SynthEntity>& entities() const { return entities_; }
  /// Template ids of one relation, ascending.
  std::vector<int> templates_of(int relation) const;
  std::vector<std::string> filler() const { return filler_; }

  SynthSentence render(int template_id, int e1, int e2, Rng& rng) const;

 private:
  SynthConfig config_;
  std::vector<std::string> relation_names_;
  std::vector<SynthTemplate> templates_;
  std::vector<SynthEntity> entities_;
  std::vector<std::string> filler_;
};

/// Latent relation of one sentence in a synthetic document.
struct GoldRecord {
  std::string doc_id;
  int sentence = 0;
  Span s1;  // document token coordinates
  Span s2;
  std::string e1;
  std::string e2;
  std::string relation;
  int template_id = 0;
};

struct SynthCorpus {
  std::vector<Document> docs;
  std::vector<GoldRecord> gold;
  std::vector<SynthFact> facts;
};

/// Documents of 1..max_sentences_per_doc sentences. Every fact (a unique
/// ordered entity pair with a relation) is mentioned at least
/// min_mentions_per_fact times, each time with a random template of its relation.
SynthCorpus synth_corpus(const SynthWorld& world);

/// `per_relation` single-sentence labeled statements for each listed relation,
/// over random entity pairs. group = template id.
std::vector<LabeledRecord> synth_labeled(const SynthWorld& world, const std::vector<int>& relations, int per_relation,
                                         std::uint64_t seed);

inline constexpr const char* kNoRelation = "no_relation";

/// Two-clause sentences "A r B , C r' D ." where the marked pair is either one
/// clause (labeled with its relation) or a cross-clause pair (labeled
/// no_relation). Relation names are world.relation_names() plus no_relation last.
std::vector<LabeledRecord> synth_two_clause(const SynthWorld& world, int count, double nil_fraction,
                                            std::uint64_t seed);

void write_gold(const std::filesystem::path& path, std::span<const GoldRecord> gold);

}  // namespace mtb
