#include "mtb/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mtb {

template <class T>
ClassifierHead<T> ClassifierHead<T>::init(int num_classes, int rep_dim, std::uint64_t seed,
                                          std::optional<int> nil_index, double init_std) {
  if (num_classes < 2) throw Error("classifier needs at least 2 classes");
  if (nil_index && (*nil_index < 0 || *nil_index >= num_classes)) throw Error("nil index out of range");
  ClassifierHead<T> head;
  Rng rng(seed);
  std::normal_distribution<double> dist(0.0, init_std);
  head.weight.resize(num_classes, rep_dim);
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight.data()[i] = static_cast<T>(dist(rng));
  head.bias = Matrix<T>::Zero(1, num_classes);
  head.nil_index = nil_index;
  return head;
}

template <class T>
ClassifierHead<T> ClassifierHead<T>::zeros_like() const {
  ClassifierHead<T> out;
  out.weight = Matrix<T>::Zero(weight.rows(), weight.cols());
  out.bias = Matrix<T>::Zero(bias.rows(), bias.cols());
  out.nil_index = nil_index;
  return out;
}

template <class T>
std::vector<T> softmax(std::span<const T> logits) {
  std::vector<T> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const T mx = *std::max_element(out.begin(), out.end());
  T total = 0;
  for (T& v : out) {
    v = std::exp(v - mx);
    total += v;
  }
  for (T& v : out) v /= total;
  return out;
}

template <class T>
int argmax(std::span<const T> values) {
  if (values.empty()) throw Error("argmax of empty sequence");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

template <class T>
T clamped_dot(const RowVector<T>& h, const RowVector<T>& h_prime) {
  if (h.size() != h_prime.size()) throw Error("representation widths differ");
  const T limit = static_cast<T>(kLogitClamp);
  return std::clamp(h.dot(h_prime), -limit, limit);
}

template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// log(1 + exp(z)) without overflow.
template <class T>
T softplus(T z) {
  return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}

// Softmax cross-entropy at `target`; writes dloss/dlogits.
template <class T>
T cross_entropy(const RowVector<T>& logits, int target, RowVector<T>* d_logits) {
  const T mx = logits.maxCoeff();
  const RowVector<T> shifted = logits.array() - mx;
  const T log_z = std::log(shifted.array().exp().sum());
  if (d_logits) {
    *d_logits = (shifted.array() - log_z).exp();
    (*d_logits)(target) -= T(1);
  }
  return log_z - shifted(target);
}

}  // namespace

template <class T>
T mtb_probability(const RowVector<T>& h, const RowVector<T>& h_prime) {
  return sigmoid(clamped_dot(h, h_prime));
}

template <class T>
T mtb_pair_loss(const RowVector<T>& h, const RowVector<T>& h_prime, int label, RowVector<T>* d_h,
                RowVector<T>* d_h_prime) {
  if (label != 0 && label != 1) throw Error("pair label must be 0 or 1");
  const T s = clamped_dot(h, h_prime);
  const T loss = label == 1 ? softplus(-s) : softplus(s);
  const T ds = sigmoid(s) - static_cast<T>(label);
  if (d_h) *d_h = ds * h_prime;
  if (d_h_prime) *d_h_prime = ds * h;
  return loss;
}

template <class T>
MtbLoss<T> mtb_loss(const MtbBatch<T>& batch) {
  const std::size_t n = batch.labels.size();
  if (n == 0) throw Error("mtb_loss needs at least one pair");
  if (batch.first.size() != n || batch.second.size() != n) throw Error("mtb batch size mismatch");
  MtbLoss<T> out;
  out.d_first.resize(n);
  out.d_second.resize(n);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += mtb_pair_loss(batch.first[i], batch.second[i], batch.labels[i], &out.d_first[i], &out.d_second[i]);
    out.d_first[i] *= inv_n;
    out.d_second[i] *= inv_n;
  }
  out.loss *= inv_n;
  return out;
}

MlmBatch mask_tokens(const EncodedInput& input, Rng& rng, int vocab_size, double mask_prob) {
  if (vocab_size <= reserved::kCount) throw Error("vocabulary has no maskable tokens");
  std::vector<int> maskable;
  for (std::size_t t = 0; t < input.ids.size(); ++t) {
    if (!is_reserved(input.ids[t])) maskable.push_back(static_cast<int>(t));
  }
  if (maskable.empty()) throw Error("input has no maskable token");

  std::vector<int> chosen;
  for (int pos : maskable) {
    if (uniform01(rng) < mask_prob) chosen.push_back(pos);
  }
  if (chosen.empty()) chosen.push_back(maskable[uniform_index(rng, maskable.size())]);

  MlmBatch batch;
  batch.input = input;
  for (int pos : chosen) {
    TokenId& id = batch.input.ids[static_cast<std::size_t>(pos)];
    batch.targets.push_back({pos, id});
    const double r = uniform01(rng);
    if (r < 0.8) {
      id = reserved::kMask;
    } else if (r < 0.9) {
      id = reserved::kCount + static_cast<TokenId>(uniform_index(rng, static_cast<std::size_t>(vocab_size - reserved::kCount)));
    }
  }
  return batch;
}

template <class T>
T mlm_loss_from_hidden(const EncoderParams<T>& params, const Matrix<T>& hidden, std::span<const MlmTarget> targets,
                       Matrix<T>* d_hidden, EncoderParams<T>* grads, T grad_scale) {
  if (targets.empty()) throw Error("mlm batch has no targets");
  const T inv_n = T(1) / static_cast<T>(targets.size());
  const T d_scale = inv_n * grad_scale;
  T loss = 0;
  RowVector<T> d_logits;
  for (const MlmTarget& target : targets) {
    const RowVector<T> h = hidden.row(target.position);
    RowVector<T> logits = h * params.token_emb.transpose();
    logits += params.mlm_bias.row(0);
    loss += cross_entropy(logits, target.original, (d_hidden || grads) ? &d_logits : nullptr);
    if (d_hidden || grads) {
      d_logits *= d_scale;
      if (d_hidden) d_hidden->row(target.position).noalias() += d_logits * params.token_emb;
      if (grads) {
        grads->token_emb.noalias() += d_logits.transpose() * h;
        grads->mlm_bias.row(0) += d_logits;
      }
    }
  }
  return loss * inv_n;
}

template <class T>
T mlm_loss(const Encoder<T>& model, const MlmBatch& batch, EncoderParams<T>* grads) {
  ForwardState<T> state;
  const Matrix<T>& hidden = model.forward(batch.input, state);
  if (!grads) return mlm_loss_from_hidden<T>(model.params(), hidden, batch.targets);
  Matrix<T> d_hidden = Matrix<T>::Zero(hidden.rows(), hidden.cols());
  const T loss = mlm_loss_from_hidden<T>(model.params(), hidden, batch.targets, &d_hidden, grads);
  model.backward(batch.input, state, d_hidden, *grads);
  return loss;
}

template <class T>
RowVector<T> class_logits(const ClassifierHead<T>& head, const RowVector<T>& rep) {
  if (rep.size() != head.weight.cols()) throw Error("representation width does not match classifier");
  RowVector<T> logits = rep * head.weight.transpose();
  logits += head.bias.row(0);
  return logits;
}

template <class T>
int predict_class(const ClassifierHead<T>& head, const RowVector<T>& rep) {
  const RowVector<T> logits = class_logits(head, rep);
  return argmax<T>(std::span<const T>(logits.data(), static_cast<std::size_t>(logits.size())));
}

template <class T>
T supervised_loss(const ClassifierHead<T>& head, const RowVector<T>& rep, int label, RowVector<T>* d_rep,
                  ClassifierHead<T>* grads) {
  if (label < 0 || label >= head.num_classes()) throw Error("relation label " + std::to_string(label) + " out of range");
  const RowVector<T> logits = class_logits(head, rep);
  RowVector<T> d_logits;
  const T loss = cross_entropy(logits, label, (d_rep || grads) ? &d_logits : nullptr);
  if (d_rep) *d_rep = d_logits * head.weight;
  if (grads) {
    grads->weight.noalias() += d_logits.transpose() * rep;
    grads->bias.row(0) += d_logits;
  }
  return loss;
}

template <class T>
FewShotScores<T> fewshot_scores(const RowVector<T>& query, std::span<const RowVector<T>> candidates,
                                std::optional<int> true_index) {
  if (candidates.size() < 2) throw Error("few-shot scoring needs at least 2 candidates");
  FewShotScores<T> out;
  out.scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.size() != query.size()) throw Error("representation widths differ");
    out.scores.push_back(query.dot(c));
  }
  out.prediction = argmax<T>(out.scores);
  if (!true_index) return out;

  const int t = *true_index;
  if (t < 0 || static_cast<std::size_t>(t) >= candidates.size()) throw Error("true candidate index out of range");
  RowVector<T> logits = Eigen::Map<const RowVector<T>>(out.scores.data(), static_cast<Eigen::Index>(out.scores.size()));
  RowVector<T> d_scores;
  out.loss = cross_entropy(logits, t, &d_scores);
  out.d_query = RowVector<T>::Zero(query.size());
  out.d_candidates.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.d_query += d_scores(static_cast<Eigen::Index>(i)) * candidates[i];
    out.d_candidates.push_back(d_scores(static_cast<Eigen::Index>(i)) * query);
  }
  return out;
}

#define MTB_INSTANTIATE(T)                                                                                        \
  template struct ClassifierHead<T>;                                                                              \
  template std::vector<T> softmax(std::span<const T>);                                                            \
  template int argmax(std::span<const T>);                                                                        \
  template T mtb_probability(const RowVector<T>&, const RowVector<T>&);                                           \
  template T mtb_pair_loss(const RowVector<T>&, const RowVector<T>&, int, RowVector<T>*, RowVector<T>*);          \
  template MtbLoss<T> mtb_loss(const MtbBatch<T>&);                                                               \
  template T mlm_loss_from_hidden(const EncoderParams<T>&, const Matrix<T>&, std::span<const MlmTarget>,          \
                                  Matrix<T>*, EncoderParams<T>*, T);                                                 \
  template T mlm_loss(const Encoder<T>&, const MlmBatch&, EncoderParams<T>*);                                     \
  template RowVector<T> class_logits(const ClassifierHead<T>&, const RowVector<T>&);                              \
  template int predict_class(const ClassifierHead<T>&, const RowVector<T>&);                                      \
  template T supervised_loss(const ClassifierHead<T>&, const RowVector<T>&, int, RowVector<T>*,                   \
                             ClassifierHead<T>*);                                                                 \
  template FewShotScores<T> fewshot_scores(const RowVector<T>&, std::span<const RowVector<T>>, std::optional<int>);

MTB_INSTANTIATE(float)
MTB_INSTANTIATE(double)

#undef MTB_INSTANTIATE

}  // namespace mtb
