#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtb/encoder.hpp"
#include "mtb/episodes.hpp"
#include "mtb/objectives.hpp"
#include "mtb/training.hpp"

namespace mtb {

/// How K > 1 support scores combine into a class score.
enum class ShotAggregation { kMax, kMean };

const char* to_string(ShotAggregation a);
ShotAggregation shot_aggregation_from_string(const std::string& name);

struct BinomialInterval {
  double low = 0;
  double high = 0;
};

/// Wilson score interval for a binomial proportion.
BinomialInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct FewShotReport {
  int n_way = 0;
  int k_shot = 0;
  ShotAggregation aggregation = ShotAggregation::kMax;
  std::size_t episodes = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  BinomialInterval ci95;
  std::vector<std::size_t> per_class_total;    // indexed by relation id of the query
  std::vector<std::size_t> per_class_correct;
  std::vector<std::vector<std::size_t>> confusion;  // [true relation][predicted relation]
};

/// Scores episodes from precomputed representations (one per statement).
template <class T>
FewShotReport score_episodes(std::span<const RowVector<T>> reps, std::span<const LabeledStatement> statements,
                             std::span<const Episode> episodes, ShotAggregation aggregation = ShotAggregation::kMax);

/// Relation representation for every statement, computed in index order.
template <class T>
std::vector<RowVector<T>> represent_all(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                                        int threads = 1);

template <class T>
FewShotReport evaluate_fewshot(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                               std::span<const Episode> episodes, ShotAggregation aggregation = ShotAggregation::kMax,
                               int threads = 1);

struct ClassScore {
  std::size_t support = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct SupervisedReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  // Micro-averaged over every class except nil_index.
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::optional<int> nil_index;
  std::vector<ClassScore> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
};

SupervisedReport score_predictions(std::span<const int> predictions, std::span<const int> gold, int num_classes,
                                   std::optional<int> nil_index = {});

template <class T>
SupervisedReport evaluate_supervised(const Encoder<T>& model, const ClassifierHead<T>& head,
                                     std::span<const LabeledStatement> data, int threads = 1);

enum class GridKind { kExamplesPerType, kTypesCount, kFraction };
enum class SweepProtocol { kSupervised, kFewShot };

const char* to_string(GridKind g);
const char* to_string(SweepProtocol p);
GridKind grid_kind_from_string(const std::string& name);
SweepProtocol sweep_protocol_from_string(const std::string& name);

struct SweepConfig {
  GridKind grid = GridKind::kExamplesPerType;
  std::vector<double> values;
  SweepProtocol protocol = SweepProtocol::kFewShot;
  TrainConfig finetune;  // mode is overridden per protocol
  int num_relations = 0;
  std::optional<int> nil_index;
  int n_way = 5;
  int k_shot = 1;
  std::size_t episodes = 1000;
  ShotAggregation aggregation = ShotAggregation::kMax;
  bool distinct_query_group = false;
  std::uint64_t seed = 0;
};

struct SweepRow {
  double grid_value = 0;
  std::size_t train_examples = 0;
  bool zero_shot = false;  // evaluated without fine-tuning
  double accuracy = 0;
  double f1 = 0;
};

/// Subsamples train_set at every grid point (seeded), fine-tunes a fresh model
/// from the factory, and evaluates on eval_set. A grid value of 0 is the
/// task-agnostic point: few-shot evaluation of the untuned model. Infeasible
/// points are reported through `warn` and skipped.
std::vector<SweepRow> ablation_sweep(const std::function<Encoder<float>()>& model_factory,
                                     std::span<const LabeledStatement> train_set, const SweepConfig& config,
                                     std::span<const LabeledStatement> eval_set,
                                     const std::function<void(const std::string&)>& warn = {});

/// Seeded subset used by ablation_sweep for one grid point; throws if infeasible.
std::vector<LabeledStatement> subsample(std::span<const LabeledStatement> data, GridKind grid, double value,
                                        std::uint64_t seed);

std::string render_table(std::span<const SweepRow> rows);
std::string render_report(const SupervisedReport& report, std::span<const std::string> relation_names = {});
std::string render_report(const FewShotReport& report);

}  // namespace mtb
