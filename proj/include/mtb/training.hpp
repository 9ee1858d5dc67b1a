#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtb/encoder.hpp"
#include "mtb/episodes.hpp"
#include "mtb/objectives.hpp"
#include "mtb/pairgen.hpp"

namespace mtb {

enum class TrainMode { kMtbPretrain, kSupervisedFinetune, kFewshotFinetune };
enum class OptimizerKind { kAdam, kSgd };
/// How MLM and MTB losses share steps: summed within every batch, or alternating steps.
enum class MlmSchedule { kSummed, kAlternating };

const char* to_string(TrainMode mode);
const char* to_string(OptimizerKind kind);
const char* to_string(MlmSchedule schedule);
TrainMode train_mode_from_string(const std::string& name);
OptimizerKind optimizer_from_string(const std::string& name);
MlmSchedule mlm_schedule_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kMtbPretrain;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 64;
  int steps = 2000;
  std::uint64_t seed = 0;
  double lambda_mlm = 1.0;
  double mlm_prob = 0.15;
  MlmSchedule mlm_schedule = MlmSchedule::kSummed;
  int warmup_steps = 0;
  int checkpoint_every = 0;
  int log_every = 50;
  int threads = 1;
  int fewshot_n = 5;  // episode width for fewshot_finetune
  int fewshot_k = 1;

  void validate() const;

  /// `key = value` lines; '#' starts a comment. Unknown keys are errors.
  static TrainConfig parse(std::string_view text);
  std::string to_text() const;
  bool operator==(const TrainConfig&) const = default;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

void sgd_step(std::span<float> params, std::span<const float> grads, double lr);
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; `step` is 1-based.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long step,
               const AdamHyper& hyper);

/// Flat views over every trainable tensor, encoder first then head.
template <class T>
std::vector<Matrix<T>*> tensor_list(EncoderParams<T>& params, ClassifierHead<T>* head = nullptr);

template <class T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, const AdamHyper& hyper) : kind_(kind), hyper_(hyper) {}

  /// Applies one update with learning rate `lr` (overrides hyper.lr).
  void step(const std::vector<Matrix<T>*>& params, const std::vector<Matrix<T>*>& grads, double lr);
  long steps_taken() const { return steps_; }

 private:
  OptimizerKind kind_;
  AdamHyper hyper_;
  long steps_ = 0;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
};

struct MetricsRecord {
  long step = 0;
  double loss = 0;
  double mtb_loss = 0;
  double mlm_loss = 0;
  double task_loss = 0;
  double accuracy = 0;  // batch accuracy for supervised/few-shot, pair accuracy for MTB
  double lr = 0;
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_log;
  std::function<void(long step)> on_checkpoint;
};

struct TrainResult {
  std::vector<MetricsRecord> log;
  double first_loss = 0;
  double final_loss = 0;
  long steps = 0;
};

/// Loss components of one gradient computation (means over its units).
struct LossParts {
  double total = 0;
  double mtb = 0;
  double mlm = 0;
  double task = 0;
  double correct = 0;  // fraction of units predicted correctly
};

/// Mean MTB (+ lambda * MLM) loss over `pairs` and its gradient, written into
/// `grads` (overwritten). MLM masks for pair i are drawn from
/// mix_seed(mask_seed, first_unit + i), so splitting a batch into micro-batches
/// reproduces the same per-pair terms.
template <class T>
LossParts mtb_batch_gradient(const Encoder<T>& model, std::span<const StatementPair> pairs, const TrainConfig& config,
                             std::uint64_t mask_seed, std::size_t first_unit, bool use_mtb, bool use_mlm,
                             EncoderParams<T>& grads);

template <class T>
LossParts supervised_batch_gradient(const Encoder<T>& model, const ClassifierHead<T>& head,
                                    std::span<const LabeledStatement> batch, const TrainConfig& config,
                                    EncoderParams<T>& grads, ClassifierHead<T>& head_grads);

template <class T>
LossParts fewshot_batch_gradient(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                                 std::span<const Episode> episodes, const TrainConfig& config, EncoderParams<T>& grads);

template <class T>
TrainResult pretrain_mtb(Encoder<T>& model, std::span<const StatementPair> pairs, const TrainConfig& config,
                         const TrainHooks& hooks = {});

template <class T>
TrainResult finetune_supervised(Encoder<T>& model, ClassifierHead<T>& head, std::span<const LabeledStatement> data,
                                const TrainConfig& config, const TrainHooks& hooks = {});

/// Trains with per-episode softmax over N class candidates; a class candidate
/// is the mean of its K support representations.
template <class T>
TrainResult finetune_fewshot(Encoder<T>& model, std::span<const LabeledStatement> data, const TrainConfig& config,
                             const TrainHooks& hooks = {});

}  // namespace mtb
