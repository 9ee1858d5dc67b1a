#include "mtb/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace mtb {

const char* to_string(ShotAggregation a) { return a == ShotAggregation::kMax ? "max" : "mean"; }

ShotAggregation shot_aggregation_from_string(const std::string& name) {
  if (name == "max") return ShotAggregation::kMax;
  if (name == "mean") return ShotAggregation::kMean;
  throw Error("unknown shot aggregation '" + name + "'");
}

const char* to_string(GridKind g) {
  switch (g) {
    case GridKind::kExamplesPerType: return "examples_per_type";
    case GridKind::kTypesCount: return "types_count";
    case GridKind::kFraction: return "fraction";
  }
  return "unknown";
}

const char* to_string(SweepProtocol p) { return p == SweepProtocol::kSupervised ? "supervised" : "fewshot"; }

GridKind grid_kind_from_string(const std::string& name) {
  if (name == "examples_per_type") return GridKind::kExamplesPerType;
  if (name == "types_count") return GridKind::kTypesCount;
  if (name == "fraction") return GridKind::kFraction;
  throw Error("unknown grid kind '" + name + "'");
}

SweepProtocol sweep_protocol_from_string(const std::string& name) {
  if (name == "supervised") return SweepProtocol::kSupervised;
  if (name == "fewshot") return SweepProtocol::kFewShot;
  throw Error("unknown sweep protocol '" + name + "'");
}

BinomialInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

template <class T>
FewShotReport score_episodes(std::span<const RowVector<T>> reps, std::span<const LabeledStatement> statements,
                             std::span<const Episode> episodes, ShotAggregation aggregation) {
  if (reps.size() != statements.size()) throw Error("one representation per statement required");
  int num_relations = 0;
  for (const auto& s : statements) num_relations = std::max(num_relations, s.relation + 1);

  FewShotReport report;
  report.aggregation = aggregation;
  report.per_class_total.assign(static_cast<std::size_t>(num_relations), 0);
  report.per_class_correct.assign(static_cast<std::size_t>(num_relations), 0);
  report.confusion.assign(static_cast<std::size_t>(num_relations),
                          std::vector<std::size_t>(static_cast<std::size_t>(num_relations), 0));

  std::vector<T> class_scores;
  for (const Episode& ep : episodes) {
    report.n_way = ep.n_way;
    report.k_shot = ep.k_shot;
    const RowVector<T>& query = reps[ep.query];
    class_scores.clear();
    for (const auto& shots : ep.support) {
      T agg = aggregation == ShotAggregation::kMax ? -std::numeric_limits<T>::infinity() : T(0);
      for (std::size_t id : shots) {
        const T s = query.dot(reps[id]);
        agg = aggregation == ShotAggregation::kMax ? std::max(agg, s) : agg + s;
      }
      if (aggregation == ShotAggregation::kMean) agg /= static_cast<T>(shots.size());
      class_scores.push_back(agg);
    }
    const int predicted = argmax<T>(class_scores);
    const auto truth = static_cast<std::size_t>(ep.classes[static_cast<std::size_t>(ep.true_class)]);
    const auto guess = static_cast<std::size_t>(ep.classes[static_cast<std::size_t>(predicted)]);
    ++report.episodes;
    ++report.per_class_total[truth];
    ++report.confusion[truth][guess];
    if (predicted == ep.true_class) {
      ++report.correct;
      ++report.per_class_correct[truth];
    }
  }
  report.accuracy = report.episodes ? static_cast<double>(report.correct) / static_cast<double>(report.episodes) : 0.0;
  report.ci95 = wilson_interval(report.correct, report.episodes);
  return report;
}

template <class T>
std::vector<RowVector<T>> represent_all(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                                        int threads) {
  std::vector<RowVector<T>> reps(statements.size());
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                      std::max<std::size_t>(statements.size(), 1));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < statements.size(); i += workers) {
      reps[i] = model.represent(model.prepare(statements[i].statement));
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return reps;
}

template <class T>
FewShotReport evaluate_fewshot(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                               std::span<const Episode> episodes, ShotAggregation aggregation, int threads) {
  const auto reps = represent_all(model, statements, threads);
  return score_episodes<T>(reps, statements, episodes, aggregation);
}

SupervisedReport score_predictions(std::span<const int> predictions, std::span<const int> gold, int num_classes,
                                   std::optional<int> nil_index) {
  if (predictions.size() != gold.size()) throw Error("prediction and gold counts differ");
  if (num_classes < 1) throw Error("num_classes must be positive");
  const auto k = static_cast<std::size_t>(num_classes);
  SupervisedReport r;
  r.nil_index = nil_index;
  r.per_class.assign(k, ClassScore{});
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i];
    const int p = predictions[i];
    if (g < 0 || g >= num_classes) throw Error("unseen label id " + std::to_string(g));
    if (p < 0 || p >= num_classes) throw Error("unseen label id " + std::to_string(p));
    ++r.total;
    ++r.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
    ++r.per_class[static_cast<std::size_t>(g)].support;
    if (g == p) {
      ++r.correct;
      ++r.per_class[static_cast<std::size_t>(g)].tp;
    } else {
      ++r.per_class[static_cast<std::size_t>(g)].fn;
      ++r.per_class[static_cast<std::size_t>(p)].fp;
    }
  }
  auto prf = [](std::size_t tp, std::size_t fp, std::size_t fn, double& p, double& rc, double& f) {
    p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    rc = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  };
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassScore& s = r.per_class[c];
    prf(s.tp, s.fp, s.fn, s.precision, s.recall, s.f1);
    if (nil_index && static_cast<std::size_t>(*nil_index) == c) continue;
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
  }
  prf(tp, fp, fn, r.precision, r.recall, r.f1);
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

template <class T>
SupervisedReport evaluate_supervised(const Encoder<T>& model, const ClassifierHead<T>& head,
                                     std::span<const LabeledStatement> data, int threads) {
  const auto reps = represent_all(model, data, threads);
  std::vector<int> predictions, gold;
  predictions.reserve(data.size());
  gold.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    predictions.push_back(predict_class(head, reps[i]));
    gold.push_back(data[i].relation);
  }
  return score_predictions(predictions, gold, head.num_classes(), head.nil_index);
}

std::vector<LabeledStatement> subsample(std::span<const LabeledStatement> data, GridKind grid, double value,
                                        std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_type;
  for (std::size_t i = 0; i < data.size(); ++i) by_type[data[i].relation].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> keep;

  auto as_count = [&](double v) {
    if (v < 0 || std::floor(v) != v) throw Error(std::string(to_string(grid)) + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  };

  switch (grid) {
    case GridKind::kExamplesPerType: {
      const std::size_t per = as_count(value);
      for (auto& [type, ids] : by_type) {
        if (ids.size() < per) {
          throw Error("relation " + std::to_string(type) + " has only " + std::to_string(ids.size()) + " examples");
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        keep.insert(keep.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(per));
      }
      break;
    }
    case GridKind::kTypesCount: {
      const std::size_t count = as_count(value);
      if (count > by_type.size()) {
        throw Error("requested " + std::to_string(count) + " types, data has " + std::to_string(by_type.size()));
      }
      std::vector<int> types;
      for (const auto& [type, ids] : by_type) types.push_back(type);
      std::shuffle(types.begin(), types.end(), rng);
      for (std::size_t t = 0; t < count; ++t) {
        const auto& ids = by_type[types[t]];
        keep.insert(keep.end(), ids.begin(), ids.end());
      }
      break;
    }
    case GridKind::kFraction: {
      if (!(value > 0.0 && value <= 1.0)) throw Error("fraction must be in (0, 1]");
      for (auto& [type, ids] : by_type) {
        const auto per = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(value * static_cast<double>(ids.size()))));
        std::shuffle(ids.begin(), ids.end(), rng);
        keep.insert(keep.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(per, ids.size())));
      }
      break;
    }
  }
  std::sort(keep.begin(), keep.end());
  std::vector<LabeledStatement> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(data[i]);
  return out;
}

std::vector<SweepRow> ablation_sweep(const std::function<Encoder<float>()>& model_factory,
                                     std::span<const LabeledStatement> train_set, const SweepConfig& config,
                                     std::span<const LabeledStatement> eval_set,
                                     const std::function<void(const std::string&)>& warn) {
  auto warning = [&](const std::string& msg) {
    if (warn) warn(msg);
  };

  std::vector<Episode> episodes;
  bool have_episodes = false;
  auto eval_episodes = [&]() -> const std::vector<Episode>& {
    if (!have_episodes) {
      EpisodeOptions opts;
      opts.distinct_query_group = config.distinct_query_group;
      episodes = build_episodes(eval_set, relation_types(eval_set), config.n_way, config.k_shot, config.episodes,
                                mix_seed(config.seed, 0x5eed), opts);
      have_episodes = true;
    }
    return episodes;
  };

  std::vector<SweepRow> rows;
  for (double value : config.values) {
    SweepRow row;
    row.grid_value = value;
    try {
      if (value == 0.0) {
        const Encoder<float> model = model_factory();
        const auto report = evaluate_fewshot(model, eval_set, eval_episodes(), config.aggregation, config.finetune.threads);
        row.zero_shot = true;
        row.accuracy = report.accuracy;
        row.f1 = report.accuracy;
        rows.push_back(row);
        continue;
      }

      const auto subset = subsample(train_set, config.grid, value, config.seed);
      row.train_examples = subset.size();
      Encoder<float> model = model_factory();
      TrainConfig tc = config.finetune;
      if (config.protocol == SweepProtocol::kSupervised) {
        tc.mode = TrainMode::kSupervisedFinetune;
        auto head = ClassifierHead<float>::init(config.num_relations, model.config().rep_dim(),
                                                mix_seed(tc.seed, 0x4ead), config.nil_index);
        finetune_supervised(model, head, subset, tc);
        const auto report = evaluate_supervised(model, head, eval_set, tc.threads);
        row.accuracy = report.accuracy;
        row.f1 = report.f1;
      } else {
        tc.mode = TrainMode::kFewshotFinetune;
        finetune_fewshot(model, subset, tc);
        const auto report = evaluate_fewshot(model, eval_set, eval_episodes(), config.aggregation, tc.threads);
        row.accuracy = report.accuracy;
        row.f1 = report.accuracy;
      }
      rows.push_back(row);
    } catch (const Error& e) {
      warning("skipping grid point " + std::to_string(value) + ": " + e.what());
    }
  }
  return rows;
}

std::string render_table(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "grid_value  train_examples  zero_shot  accuracy  f1\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%10g  %14zu  %9s  %8.4f  %6.4f\n", r.grid_value, r.train_examples,
                  r.zero_shot ? "yes" : "no", r.accuracy, r.f1);
    out << buf;
  }
  return out.str();
}

std::string render_report(const SupervisedReport& r, std::span<const std::string> names) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "instances %zu  accuracy %.4f  micro P %.4f  R %.4f  F1 %.4f%s\n", r.total,
                r.accuracy, r.precision, r.recall, r.f1, r.nil_index ? "  (nil excluded)" : "");
  out << buf;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    std::snprintf(buf, sizeof(buf), "  %-20s support %5zu  P %.4f  R %.4f  F1 %.4f\n", name.c_str(), s.support,
                  s.precision, s.recall, s.f1);
    out << buf;
  }
  return out.str();
}

std::string render_report(const FewShotReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d-way %d-shot  episodes %zu  accuracy %.4f  95%% CI [%.4f, %.4f]  (%s)\n", r.n_way,
                r.k_shot, r.episodes, r.accuracy, r.ci95.low, r.ci95.high, to_string(r.aggregation));
  return buf;
}

#define MTB_INSTANTIATE(T)                                                                                        \
  template FewShotReport score_episodes(std::span<const RowVector<T>>, std::span<const LabeledStatement>,         \
                                        std::span<const Episode>, ShotAggregation);                               \
  template std::vector<RowVector<T>> represent_all(const Encoder<T>&, std::span<const LabeledStatement>, int);    \
  template FewShotReport evaluate_fewshot(const Encoder<T>&, std::span<const LabeledStatement>,                   \
                                          std::span<const Episode>, ShotAggregation, int);                        \
  template SupervisedReport evaluate_supervised(const Encoder<T>&, const ClassifierHead<T>&,                      \
                                                std::span<const LabeledStatement>, int);

MTB_INSTANTIATE(float)
MTB_INSTANTIATE(double)

#undef MTB_INSTANTIATE

}  // namespace mtb
