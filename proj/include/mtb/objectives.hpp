#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mtb/encoder.hpp"

namespace mtb {

/// Dot products are clamped to this magnitude before the sigmoid.
inline constexpr double kLogitClamp = 30.0;

/// Linear classification layer over relation representations.
template <class T>
struct ClassifierHead {
  Matrix<T> weight;  // K x H
  Matrix<T> bias;    // 1 x K
  std::optional<int> nil_index;

  static ClassifierHead init(int num_classes, int rep_dim, std::uint64_t seed, std::optional<int> nil_index = {},
                             double init_std = 0.02);

  int num_classes() const { return static_cast<int>(weight.rows()); }
  int rep_dim() const { return static_cast<int>(weight.cols()); }
  ClassifierHead zeros_like() const;

  template <class F>
  void for_each(F&& f) {
    f(std::string("head.weight"), weight);
    f(std::string("head.bias"), bias);
  }
  template <class F>
  void for_each(F&& f) const {
    f(std::string("head.weight"), weight);
    f(std::string("head.bias"), bias);
  }
};

/// Numerically stable softmax.
template <class T>
std::vector<T> softmax(std::span<const T> logits);

/// Index of the largest value; ties resolve to the lowest index.
template <class T>
int argmax(std::span<const T> values);

/// p(l = 1 | r, r') = sigmoid(h . h'), with the dot product clamped to +-30.
template <class T>
T mtb_probability(const RowVector<T>& h, const RowVector<T>& h_prime);

/// Binary cross-entropy of one pair. If non-null, d_h / d_h_prime receive
/// (p - label) * other; the clamp is treated as identity for gradients.
template <class T>
T mtb_pair_loss(const RowVector<T>& h, const RowVector<T>& h_prime, int label, RowVector<T>* d_h = nullptr,
                RowVector<T>* d_h_prime = nullptr);

template <class T>
struct MtbBatch {
  std::vector<int> labels;
  std::vector<RowVector<T>> first;
  std::vector<RowVector<T>> second;
};

template <class T>
struct MtbLoss {
  T loss = 0;
  std::vector<RowVector<T>> d_first;
  std::vector<RowVector<T>> d_second;
};

/// Mean binary cross-entropy over the batch, with gradients w.r.t. every representation.
template <class T>
MtbLoss<T> mtb_loss(const MtbBatch<T>& batch);

struct MlmTarget {
  int position = 0;
  TokenId original = 0;
};

struct MlmBatch {
  EncodedInput input;  // copy with selected positions corrupted
  std::vector<MlmTarget> targets;
};

/// Selects each non-reserved token with probability mask_prob (at least one
/// overall), then rewrites it 80% [MASK], 10% random non-reserved id, 10% unchanged.
MlmBatch mask_tokens(const EncodedInput& input, Rng& rng, int vocab_size, double mask_prob = 0.15);

/// Mean softmax cross-entropy at target positions, with output logits tied to
/// the token-embedding matrix. Accumulates into d_hidden / grads when given.
/// Gradients are multiplied by grad_scale.
template <class T>
T mlm_loss_from_hidden(const EncoderParams<T>& params, const Matrix<T>& hidden, std::span<const MlmTarget> targets,
                       Matrix<T>* d_hidden = nullptr, EncoderParams<T>* grads = nullptr, T grad_scale = T(1));

/// Forward + backward through the encoder.
template <class T>
T mlm_loss(const Encoder<T>& model, const MlmBatch& batch, EncoderParams<T>* grads = nullptr);

template <class T>
RowVector<T> class_logits(const ClassifierHead<T>& head, const RowVector<T>& rep);

template <class T>
int predict_class(const ClassifierHead<T>& head, const RowVector<T>& rep);

/// Cross-entropy of softmax(rep W^T + b) at label.
template <class T>
T supervised_loss(const ClassifierHead<T>& head, const RowVector<T>& rep, int label, RowVector<T>* d_rep = nullptr,
                  ClassifierHead<T>* grads = nullptr);

template <class T>
struct FewShotScores {
  std::vector<T> scores;
  int prediction = 0;
  T loss = 0;
  RowVector<T> d_query;
  std::vector<RowVector<T>> d_candidates;
};

/// Dot-product scores against each candidate, argmax prediction, and (when
/// true_index is set) the softmax cross-entropy loss with its gradients.
template <class T>
FewShotScores<T> fewshot_scores(const RowVector<T>& query, std::span<const RowVector<T>> candidates,
                                std::optional<int> true_index = {});

}  // namespace mtb
