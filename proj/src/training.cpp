#include "mtb/training.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace mtb {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kMtbPretrain: return "mtb_pretrain";
    case TrainMode::kSupervisedFinetune: return "supervised_finetune";
    case TrainMode::kFewshotFinetune: return "fewshot_finetune";
  }
  return "unknown";
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

const char* to_string(MlmSchedule schedule) { return schedule == MlmSchedule::kSummed ? "summed" : "alternating"; }

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "mtb_pretrain") return TrainMode::kMtbPretrain;
  if (name == "supervised_finetune") return TrainMode::kSupervisedFinetune;
  if (name == "fewshot_finetune") return TrainMode::kFewshotFinetune;
  throw Error("unknown training mode '" + name + "'");
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error("unknown optimizer '" + name + "'");
}

MlmSchedule mlm_schedule_from_string(const std::string& name) {
  if (name == "summed") return MlmSchedule::kSummed;
  if (name == "alternating") return MlmSchedule::kAlternating;
  throw Error("unknown mlm schedule '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw Error("lr must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (steps < 0) throw Error("steps must be >= 0");
  if (!(lambda_mlm >= 0.0)) throw Error("lambda_mlm must be >= 0");
  if (!(mlm_prob >= 0.0 && mlm_prob <= 1.0)) throw Error("mlm_prob must be in [0, 1]");
  if (threads < 1) throw Error("threads must be >= 1");
  if (log_every < 1) throw Error("log_every must be >= 1");
  if (fewshot_n < 2 || fewshot_k < 1) throw Error("few-shot episodes need n >= 2 and k >= 1");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class N>
N parse_number(const std::string& text, const std::string& key) {
  N value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw Error("invalid value for " + key + ": '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      if (key == "mode") c.mode = train_mode_from_string(value);
      else if (key == "optimizer") c.optimizer = optimizer_from_string(value);
      else if (key == "lr") c.lr = parse_number<double>(value, key);
      else if (key == "beta1") c.beta1 = parse_number<double>(value, key);
      else if (key == "beta2") c.beta2 = parse_number<double>(value, key);
      else if (key == "eps") c.eps = parse_number<double>(value, key);
      else if (key == "batch_size") c.batch_size = parse_number<int>(value, key);
      else if (key == "steps") c.steps = parse_number<int>(value, key);
      else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, key);
      else if (key == "lambda_mlm") c.lambda_mlm = parse_number<double>(value, key);
      else if (key == "mlm_prob") c.mlm_prob = parse_number<double>(value, key);
      else if (key == "mlm_schedule") c.mlm_schedule = mlm_schedule_from_string(value);
      else if (key == "warmup_steps") c.warmup_steps = parse_number<int>(value, key);
      else if (key == "checkpoint_every") c.checkpoint_every = parse_number<int>(value, key);
      else if (key == "log_every") c.log_every = parse_number<int>(value, key);
      else if (key == "threads") c.threads = parse_number<int>(value, key);
      else if (key == "fewshot_n") c.fewshot_n = parse_number<int>(value, key);
      else if (key == "fewshot_k") c.fewshot_k = parse_number<int>(value, key);
      else throw Error("unknown key '" + key + "'");
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "mode = " << to_string(mode) << '\n'
      << "optimizer = " << to_string(optimizer) << '\n'
      << "lr = " << format_double(lr) << '\n'
      << "beta1 = " << format_double(beta1) << '\n'
      << "beta2 = " << format_double(beta2) << '\n'
      << "eps = " << format_double(eps) << '\n'
      << "batch_size = " << batch_size << '\n'
      << "steps = " << steps << '\n'
      << "seed = " << seed << '\n'
      << "lambda_mlm = " << format_double(lambda_mlm) << '\n'
      << "mlm_prob = " << format_double(mlm_prob) << '\n'
      << "mlm_schedule = " << to_string(mlm_schedule) << '\n'
      << "warmup_steps = " << warmup_steps << '\n'
      << "checkpoint_every = " << checkpoint_every << '\n'
      << "log_every = " << log_every << '\n'
      << "threads = " << threads << '\n'
      << "fewshot_n = " << fewshot_n << '\n'
      << "fewshot_k = " << fewshot_k << '\n';
  return out.str();
}

template <class T>
static void sgd_impl(std::span<T> params, std::span<const T> grads, double lr) {
  if (params.size() != grads.size()) throw Error("parameter/gradient size mismatch");
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= rate * grads[i];
}

void sgd_step(std::span<float> params, std::span<const float> grads, double lr) { sgd_impl(params, grads, lr); }
void sgd_step(std::span<double> params, std::span<const double> grads, double lr) { sgd_impl(params, grads, lr); }

template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, long step,
               const AdamHyper& h) {
  if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size()) {
    throw Error("parameter/gradient size mismatch");
  }
  if (step < 1) throw Error("adam step index is 1-based");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(m[i]) / c1;
    const double v_hat = static_cast<double>(v[i]) / c2;
    params[i] -= static_cast<T>(h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
  }
}

template <class T>
std::vector<Matrix<T>*> tensor_list(EncoderParams<T>& params, ClassifierHead<T>* head) {
  std::vector<Matrix<T>*> out;
  params.for_each([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  if (head) head->for_each([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  return out;
}

template <class T>
void Optimizer<T>::step(const std::vector<Matrix<T>*>& params, const std::vector<Matrix<T>*>& grads, double lr) {
  if (params.size() != grads.size()) throw Error("optimizer parameter/gradient count mismatch");
  ++steps_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      sgd_step(std::span<T>(params[i]->data(), static_cast<std::size_t>(params[i]->size())),
               std::span<const T>(grads[i]->data(), static_cast<std::size_t>(grads[i]->size())), lr);
    }
    return;
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
    }
  }
  AdamHyper h = hyper_;
  h.lr = lr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::size_t>(params[i]->size());
    adam_step<T>(std::span<T>(params[i]->data(), n), std::span<const T>(grads[i]->data(), n),
                 std::span<T>(m_[i].data(), n), std::span<T>(v_[i].data(), n), steps_, h);
  }
}

namespace {

template <class T>
void add_scaled(EncoderParams<T>& dst, const EncoderParams<T>& src, T scale) {
  std::vector<Matrix<T>*> targets;
  dst.for_each([&](const std::string&, Matrix<T>& m) { targets.push_back(&m); });
  std::size_t i = 0;
  src.for_each([&](const std::string&, const Matrix<T>& m) { *targets[i++] += scale * m; });
}

template <class T>
struct UnitBuffer {
  EncoderParams<T> enc;
  ClassifierHead<T> head;
  LossParts parts;
  std::exception_ptr error;
};

// Runs fn(unit, encoder_grads, head_grads) for every unit into private
// buffers and folds them into the totals in unit order, so results do not
// depend on the thread count. Totals are overwritten with the weighted mean.
template <class T, class Fn>
LossParts run_units(std::size_t n_units, int threads, EncoderParams<T>& total, ClassifierHead<T>* head_total, Fn&& fn) {
  total.set_zero();
  if (head_total) {
    head_total->weight.setZero();
    head_total->bias.setZero();
  }
  LossParts sum;
  if (n_units == 0) return sum;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_units);
  std::vector<UnitBuffer<T>> buffers(workers);
  for (auto& b : buffers) {
    b.enc = total.zeros_like();
    if (head_total) b.head = head_total->zeros_like();
  }
  const T weight = T(1) / static_cast<T>(n_units);

  auto run_one = [&](std::size_t unit, UnitBuffer<T>& buf) {
    buf.enc.set_zero();
    if (head_total) {
      buf.head.weight.setZero();
      buf.head.bias.setZero();
    }
    try {
      buf.parts = fn(unit, buf.enc, head_total ? &buf.head : nullptr);
    } catch (...) {
      buf.error = std::current_exception();
    }
  };

  for (std::size_t start = 0; start < n_units; start += workers) {
    const std::size_t wave = std::min(workers, n_units - start);
    if (wave == 1) {
      run_one(start, buffers[0]);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < wave; ++w) pool.emplace_back(run_one, start + w, std::ref(buffers[w]));
      for (auto& t : pool) t.join();
    }
    for (std::size_t w = 0; w < wave; ++w) {
      UnitBuffer<T>& buf = buffers[w];
      if (buf.error) std::rethrow_exception(buf.error);
      add_scaled(total, buf.enc, weight);
      if (head_total) {
        head_total->weight += weight * buf.head.weight;
        head_total->bias += weight * buf.head.bias;
      }
      sum.total += buf.parts.total;
      sum.mtb += buf.parts.mtb;
      sum.mlm += buf.parts.mlm;
      sum.task += buf.parts.task;
      sum.correct += buf.parts.correct;
    }
  }
  const double inv = 1.0 / static_cast<double>(n_units);
  sum.total *= inv;
  sum.mtb *= inv;
  sum.mlm *= inv;
  sum.task *= inv;
  sum.correct *= inv;
  return sum;
}

template <class T>
LossParts mtb_unit(const Encoder<T>& model, const StatementPair& pair, const TrainConfig& config, Rng& rng,
                   bool use_mtb, bool use_mlm, EncoderParams<T>& grads) {
  const int vocab = model.config().vocab_size;
  EncodedInput in_a = model.prepare(pair.a);
  EncodedInput in_b = model.prepare(pair.b);
  MlmBatch mask_a, mask_b;
  const bool mlm = use_mlm && config.lambda_mlm > 0.0;
  if (mlm) {
    mask_a = mask_tokens(in_a, rng, vocab, config.mlm_prob);
    mask_b = mask_tokens(in_b, rng, vocab, config.mlm_prob);
    in_a = mask_a.input;
    in_b = mask_b.input;
  }

  ForwardState<T> state_a, state_b;
  const Matrix<T>& h_a = model.forward(in_a, state_a);
  const Matrix<T>& h_b = model.forward(in_b, state_b);
  Matrix<T> d_a = Matrix<T>::Zero(h_a.rows(), h_a.cols());
  Matrix<T> d_b = Matrix<T>::Zero(h_b.rows(), h_b.cols());

  LossParts parts;
  if (use_mtb) {
    RepState<T> rep_a, rep_b;
    const RowVector<T> r_a = model.relation_rep(in_a, h_a, &rep_a);
    const RowVector<T> r_b = model.relation_rep(in_b, h_b, &rep_b);
    RowVector<T> g_a, g_b;
    parts.mtb = static_cast<double>(mtb_pair_loss(r_a, r_b, pair.label, &g_a, &g_b));
    parts.correct = (mtb_probability(r_a, r_b) >= T(0.5)) == (pair.label == 1) ? 1.0 : 0.0;
    model.relation_rep_backward(in_a, rep_a, g_a, d_a, grads);
    model.relation_rep_backward(in_b, rep_b, g_b, d_b, grads);
  }
  if (mlm) {
    const T scale = static_cast<T>(config.lambda_mlm * 0.5);
    const double la = mlm_loss_from_hidden<T>(model.params(), h_a, mask_a.targets, &d_a, &grads, scale);
    const double lb = mlm_loss_from_hidden<T>(model.params(), h_b, mask_b.targets, &d_b, &grads, scale);
    parts.mlm = 0.5 * (la + lb);
  }
  parts.total = parts.mtb + config.lambda_mlm * parts.mlm;
  model.backward(in_a, state_a, d_a, grads);
  model.backward(in_b, state_b, d_b, grads);
  return parts;
}

// Epoch-wise seeded permutation of [0, n).
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        ++epoch_;
        reshuffle();
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(mix_seed(seed_, epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

template <class T, class BatchFn>
TrainResult run_loop(const TrainConfig& config, const std::vector<Matrix<T>*>& params,
                     const std::vector<Matrix<T>*>& grads, BatchFn&& batch_fn, const TrainHooks& hooks) {
  Optimizer<T> optimizer(config.optimizer, AdamHyper{config.lr, config.beta1, config.beta2, config.eps});
  TrainResult result;
  MetricsRecord acc;
  long acc_steps = 0;
  for (long step = 1; step <= config.steps; ++step) {
    const LossParts parts = batch_fn(step);
    if (!std::isfinite(parts.total)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step), step);
    }
    double lr = config.lr;
    if (config.warmup_steps > 0 && step < config.warmup_steps) {
      lr *= static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    optimizer.step(params, grads, lr);

    if (step == 1) result.first_loss = parts.total;
    result.final_loss = parts.total;
    acc.loss += parts.total;
    acc.mtb_loss += parts.mtb;
    acc.mlm_loss += parts.mlm;
    acc.task_loss += parts.task;
    acc.accuracy += parts.correct;
    ++acc_steps;
    if (step % config.log_every == 0 || step == config.steps) {
      const double inv = 1.0 / static_cast<double>(acc_steps);
      MetricsRecord rec{step, acc.loss * inv, acc.mtb_loss * inv, acc.mlm_loss * inv,
                        acc.task_loss * inv, acc.accuracy * inv, lr};
      result.log.push_back(rec);
      if (hooks.on_log) hooks.on_log(rec);
      acc = MetricsRecord{};
      acc_steps = 0;
    }
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(step);
    }
  }
  result.steps = config.steps;
  return result;
}

}  // namespace

template <class T>
LossParts mtb_batch_gradient(const Encoder<T>& model, std::span<const StatementPair> pairs, const TrainConfig& config,
                             std::uint64_t mask_seed, std::size_t first_unit, bool use_mtb, bool use_mlm,
                             EncoderParams<T>& grads) {
  if (pairs.empty()) throw Error("empty MTB batch");
  return run_units<T>(pairs.size(), config.threads, grads, nullptr,
                      [&](std::size_t u, EncoderParams<T>& g, ClassifierHead<T>*) {
                        Rng rng(mix_seed(mask_seed, first_unit + u));
                        return mtb_unit(model, pairs[u], config, rng, use_mtb, use_mlm, g);
                      });
}

template <class T>
LossParts supervised_batch_gradient(const Encoder<T>& model, const ClassifierHead<T>& head,
                                    std::span<const LabeledStatement> batch, const TrainConfig& config,
                                    EncoderParams<T>& grads, ClassifierHead<T>& head_grads) {
  if (batch.empty()) throw Error("empty supervised batch");
  return run_units<T>(batch.size(), config.threads, grads, &head_grads,
                      [&](std::size_t u, EncoderParams<T>& g, ClassifierHead<T>* hg) {
                        const EncodedInput input = model.prepare(batch[u].statement);
                        ForwardState<T> state;
                        const Matrix<T>& hidden = model.forward(input, state);
                        RepState<T> rep_state;
                        const RowVector<T> rep = model.relation_rep(input, hidden, &rep_state);
                        RowVector<T> d_rep;
                        LossParts parts;
                        parts.task = static_cast<double>(supervised_loss(head, rep, batch[u].relation, &d_rep, hg));
                        parts.total = parts.task;
                        parts.correct = predict_class(head, rep) == batch[u].relation ? 1.0 : 0.0;
                        Matrix<T> d_hidden = Matrix<T>::Zero(hidden.rows(), hidden.cols());
                        model.relation_rep_backward(input, rep_state, d_rep, d_hidden, g);
                        model.backward(input, state, d_hidden, g);
                        return parts;
                      });
}

template <class T>
LossParts fewshot_batch_gradient(const Encoder<T>& model, std::span<const LabeledStatement> statements,
                                 std::span<const Episode> episodes, const TrainConfig& config, EncoderParams<T>& grads) {
  if (episodes.empty()) throw Error("empty few-shot batch");
  return run_units<T>(episodes.size(), config.threads, grads, nullptr,
                      [&](std::size_t u, EncoderParams<T>& g, ClassifierHead<T>*) {
                        const Episode& ep = episodes[u];
                        struct Item {
                          EncodedInput input;
                          ForwardState<T> state;
                          RepState<T> rep_state;
                          RowVector<T> rep;
                        };
                        auto run = [&](std::size_t id) {
                          Item item;
                          item.input = model.prepare(statements[id].statement);
                          const Matrix<T>& hidden = model.forward(item.input, item.state);
                          item.rep = model.relation_rep(item.input, hidden, &item.rep_state);
                          return item;
                        };
                        Item query = run(ep.query);
                        std::vector<std::vector<Item>> support(ep.support.size());
                        std::vector<RowVector<T>> candidates;
                        for (std::size_t c = 0; c < ep.support.size(); ++c) {
                          RowVector<T> mean = RowVector<T>::Zero(model.config().rep_dim());
                          for (std::size_t id : ep.support[c]) {
                            support[c].push_back(run(id));
                            mean += support[c].back().rep;
                          }
                          candidates.push_back(mean / static_cast<T>(ep.support[c].size()));
                        }
                        const auto scored = fewshot_scores<T>(query.rep, candidates, ep.true_class);
                        LossParts parts;
                        parts.task = static_cast<double>(scored.loss);
                        parts.total = parts.task;
                        parts.correct = scored.prediction == ep.true_class ? 1.0 : 0.0;

                        auto back = [&](Item& item, const RowVector<T>& d_rep) {
                          Matrix<T> d_hidden = Matrix<T>::Zero(item.state.hidden.rows(), item.state.hidden.cols());
                          model.relation_rep_backward(item.input, item.rep_state, d_rep, d_hidden, g);
                          model.backward(item.input, item.state, d_hidden, g);
                        };
                        back(query, scored.d_query);
                        for (std::size_t c = 0; c < support.size(); ++c) {
                          const RowVector<T> d = scored.d_candidates[c] / static_cast<T>(support[c].size());
                          for (Item& item : support[c]) back(item, d);
                        }
                        return parts;
                      });
}

template <class T>
TrainResult pretrain_mtb(Encoder<T>& model, std::span<const StatementPair> pairs, const TrainConfig& config,
                         const TrainHooks& hooks) {
  config.validate();
  if (config.mode != TrainMode::kMtbPretrain) throw Error("mode/data mismatch: MTB pretraining needs mode mtb_pretrain");
  if (pairs.empty()) throw Error("no statement pairs to train on");
  EncoderParams<T> grads = model.params().zeros_like();
  BatchCursor cursor(pairs.size(), config.seed);
  std::vector<StatementPair> batch;
  auto batch_fn = [&](long step) {
    batch.clear();
    for (std::size_t i : cursor.next(static_cast<std::size_t>(config.batch_size))) batch.push_back(pairs[i]);
    bool use_mtb = true;
    bool use_mlm = config.lambda_mlm > 0.0;
    if (config.mlm_schedule == MlmSchedule::kAlternating && use_mlm) {
      use_mtb = step % 2 == 1;
      use_mlm = !use_mtb;
    }
    return mtb_batch_gradient<T>(model, batch, config, mix_seed(config.seed, static_cast<std::uint64_t>(step)), 0,
                                 use_mtb, use_mlm, grads);
  };
  return run_loop<T>(config, tensor_list(model.params()), tensor_list(grads), batch_fn, hooks);
}

template <class T>
TrainResult finetune_supervised(Encoder<T>& model, ClassifierHead<T>& head, std::span<const LabeledStatement> data,
                                const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.mode != TrainMode::kSupervisedFinetune) {
    throw Error("mode/data mismatch: supervised fine-tuning needs mode supervised_finetune");
  }
  if (data.empty()) throw Error("no labeled statements to train on");
  if (head.rep_dim() != model.config().rep_dim()) throw Error("classifier width does not match encoder");
  EncoderParams<T> grads = model.params().zeros_like();
  ClassifierHead<T> head_grads = head.zeros_like();
  BatchCursor cursor(data.size(), config.seed);
  std::vector<LabeledStatement> batch;
  auto batch_fn = [&](long) {
    batch.clear();
    for (std::size_t i : cursor.next(static_cast<std::size_t>(config.batch_size))) batch.push_back(data[i]);
    return supervised_batch_gradient<T>(model, head, batch, config, grads, head_grads);
  };
  return run_loop<T>(config, tensor_list(model.params(), &head), tensor_list(grads, &head_grads), batch_fn, hooks);
}

template <class T>
TrainResult finetune_fewshot(Encoder<T>& model, std::span<const LabeledStatement> data, const TrainConfig& config,
                             const TrainHooks& hooks) {
  config.validate();
  if (config.mode != TrainMode::kFewshotFinetune) {
    throw Error("mode/data mismatch: few-shot fine-tuning needs mode fewshot_finetune");
  }
  const std::vector<int> types = relation_types(data);
  if (types.size() < 2) throw Error("few-shot fine-tuning needs at least 2 relation types");
  const int n_way = std::min<int>(config.fewshot_n, static_cast<int>(types.size()));
  EncoderParams<T> grads = model.params().zeros_like();
  auto batch_fn = [&](long step) {
    const auto episodes = build_episodes(data, types, n_way, config.fewshot_k,
                                         static_cast<std::size_t>(config.batch_size),
                                         mix_seed(config.seed, static_cast<std::uint64_t>(step)));
    return fewshot_batch_gradient<T>(model, data, episodes, config, grads);
  };
  return run_loop<T>(config, tensor_list(model.params()), tensor_list(grads), batch_fn, hooks);
}

#define MTB_INSTANTIATE(T)                                                                                        \
  template void adam_step(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, long, const AdamHyper&); \
  template std::vector<Matrix<T>*> tensor_list(EncoderParams<T>&, ClassifierHead<T>*);                            \
  template class Optimizer<T>;                                                                                    \
  template LossParts mtb_batch_gradient(const Encoder<T>&, std::span<const StatementPair>, const TrainConfig&,    \
                                        std::uint64_t, std::size_t, bool, bool, EncoderParams<T>&);               \
  template LossParts supervised_batch_gradient(const Encoder<T>&, const ClassifierHead<T>&,                       \
                                               std::span<const LabeledStatement>, const TrainConfig&,             \
                                               EncoderParams<T>&, ClassifierHead<T>&);                            \
  template LossParts fewshot_batch_gradient(const Encoder<T>&, std::span<const LabeledStatement>,                 \
                                            std::span<const Episode>, const TrainConfig&, EncoderParams<T>&);     \
  template TrainResult pretrain_mtb(Encoder<T>&, std::span<const StatementPair>, const TrainConfig&,              \
                                    const TrainHooks&);                                                           \
  template TrainResult finetune_supervised(Encoder<T>&, ClassifierHead<T>&, std::span<const LabeledStatement>,    \
                                           const TrainConfig&, const TrainHooks&);                                \
  template TrainResult finetune_fewshot(Encoder<T>&, std::span<const LabeledStatement>, const TrainConfig&,       \
                                        const TrainHooks&);

MTB_INSTANTIATE(float)
MTB_INSTANTIATE(double)

#undef MTB_INSTANTIATE

}  // namespace mtb
