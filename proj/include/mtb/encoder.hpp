#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtb/common.hpp"
#include "mtb/corpus.hpp"
#include "mtb/pairgen.hpp"
#include "mtb/tokens.hpp"

namespace mtb {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

enum class InputVariant { kStandard, kPositionalEmb, kEntityMarkers };
enum class OutputVariant { kCls, kMentionPool, kEntityStart };
enum class PostLayer { kLinearDense, kLayerNorm };

const char* to_string(InputVariant v);
const char* to_string(OutputVariant v);
const char* to_string(PostLayer v);
InputVariant input_variant_from_string(const std::string& name);
OutputVariant output_variant_from_string(const std::string& name);
PostLayer post_layer_from_string(const std::string& name);

struct EncoderConfig {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  int ffn_mult = 4;
  int max_len = 128;
  InputVariant input_variant = InputVariant::kEntityMarkers;
  OutputVariant output_variant = OutputVariant::kEntityStart;
  PostLayer post_layer = PostLayer::kLayerNorm;
  int vocab_size = 0;
  std::uint64_t seed = 0;
  double init_std = 0.02;

  void validate() const;
  /// Width of the relation representation h_r.
  int rep_dim() const { return output_variant == OutputVariant::kCls ? hidden : 2 * hidden; }
  bool operator==(const EncoderConfig&) const = default;
};

/// Model-ready token sequence. segments are 0 (none), 1 (span 1), 2 (span 2).
struct EncodedInput {
  std::vector<TokenId> ids;
  std::vector<int> segments;
  Span span1;
  Span span2;
  std::optional<int> marker1;
  std::optional<int> marker2;

  int size() const { return static_cast<int>(ids.size()); }
};

/// Applies an input variant. entity_markers inserts [E1start]/[E1end] and
/// [E2start]/[E2end] around the spans: s1 -> (i+1, j+1), s2 -> (k+3, l+3),
/// markers at i and k+2.
EncodedInput build_input(std::span<const TokenId> x, Span s1, Span s2, InputVariant variant, int max_len);
EncodedInput build_input(const RelationStatement& statement, InputVariant variant, int max_len);
EncodedInput build_input(const BlankedStatement& statement, InputVariant variant, int max_len);

template <class T>
struct LayerParams {
  Matrix<T> ln1_gain, ln1_bias;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_gain, ln2_bias;
  Matrix<T> w1, b1, w2, b2;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gain", self.ln1_gain);
    f(prefix + "ln1.bias", self.ln1_bias);
    f(prefix + "attn.wq", self.wq);
    f(prefix + "attn.bq", self.bq);
    f(prefix + "attn.wk", self.wk);
    f(prefix + "attn.bk", self.bk);
    f(prefix + "attn.wv", self.wv);
    f(prefix + "attn.bv", self.bv);
    f(prefix + "attn.wo", self.wo);
    f(prefix + "attn.bo", self.bo);
    f(prefix + "ln2.gain", self.ln2_gain);
    f(prefix + "ln2.bias", self.ln2_bias);
    f(prefix + "ffn.w1", self.w1);
    f(prefix + "ffn.b1", self.b1);
    f(prefix + "ffn.w2", self.w2);
    f(prefix + "ffn.b2", self.b2);
  }
};

/// All trainable tensors. Biases and gains are 1-row matrices. For the
/// layer_norm post layer, post_weight holds the (1 x d_out) gain.
template <class T>
struct EncoderParams {
  Matrix<T> token_emb, position_emb, segment_emb;
  std::vector<LayerParams<T>> layers;
  Matrix<T> final_gain, final_bias;
  Matrix<T> post_weight, post_bias;
  Matrix<T> mlm_bias;

  /// Calls f(name, tensor) in a fixed order shared by checkpoints and optimizers.
  template <class F>
  void for_each(F&& f) {
    visit_all(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_all(*this, f);
  }

  EncoderParams zeros_like() const;
  void set_zero();
  std::size_t count() const;
  bool all_finite() const;

  template <class U>
  EncoderParams<U> cast() const;

 private:
  template <class Self, class F>
  static void visit_all(Self& self, F& f) {
    f(std::string("embed.token"), self.token_emb);
    f(std::string("embed.position"), self.position_emb);
    f(std::string("embed.segment"), self.segment_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      LayerParams<T>::visit(self.layers[l], "layer" + std::to_string(l) + ".", f);
    }
    f(std::string("final_ln.gain"), self.final_gain);
    f(std::string("final_ln.bias"), self.final_bias);
    f(std::string("post.weight"), self.post_weight);
    f(std::string("post.bias"), self.post_bias);
    f(std::string("mlm.bias"), self.mlm_bias);
  }
};

template <class T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> rstd;
};

template <class T>
struct LayerState {
  LayerNormCache<T> ln1;
  Matrix<T> a, q, k, v;
  std::vector<Matrix<T>> probs;  // one (n x n) attention map per head
  Matrix<T> context;
  LayerNormCache<T> ln2;
  Matrix<T> b, u, g;
};

template <class T>
struct ForwardState {
  std::vector<LayerState<T>> layers;
  LayerNormCache<T> final_ln;
  Matrix<T> hidden;
};

template <class T>
struct RepState {
  RowVector<T> pooled;
  std::vector<int> argmax1;
  std::vector<int> argmax2;
  LayerNormCache<T> post_ln;
};

inline constexpr double kLayerNormEps = 1e-5;

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, LayerNormCache<T>* cache);

/// Per-dimension max over rows [span.start, span.end); ties resolve to the first row.
template <class T>
RowVector<T> max_pool(const Matrix<T>& hidden, Span span, std::vector<int>* argmax = nullptr);

/// Small pre-LayerNorm transformer encoder with relation-representation head.
/// Instances are immutable during inference and safe to share across threads.
template <class T>
class Encoder {
 public:
  using Params = EncoderParams<T>;

  explicit Encoder(const EncoderConfig& config);
  Encoder(const EncoderConfig& config, Params params);

  const EncoderConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }

  EncodedInput prepare(const RelationStatement& statement) const;
  EncodedInput prepare(const BlankedStatement& statement) const;

  /// Final hidden states H, one row per input token.
  Matrix<T> encode(const EncodedInput& input) const;
  const Matrix<T>& forward(const EncodedInput& input, ForwardState<T>& state) const;
  /// Accumulates (+=) parameter gradients for dL/dH into grads.
  void backward(const EncodedInput& input, const ForwardState<T>& state, const Matrix<T>& d_hidden,
                Params& grads) const;

  RowVector<T> relation_rep(const EncodedInput& input, const Matrix<T>& hidden, RepState<T>* state = nullptr) const;
  /// Accumulates into d_hidden (must be sized like H) and the post-layer gradients.
  void relation_rep_backward(const EncodedInput& input, const RepState<T>& state, const RowVector<T>& d_rep,
                             Matrix<T>& d_hidden, Params& grads) const;

  /// encode + relation_rep.
  RowVector<T> represent(const EncodedInput& input) const;

  template <class U>
  Encoder<U> cast() const {
    return Encoder<U>(config_, params_.template cast<U>());
  }

 private:
  void check_input(const EncodedInput& input) const;

  EncoderConfig config_;
  Params params_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template struct EncoderParams<float>;
extern template struct EncoderParams<double>;

}  // namespace mtb

namespace mtb {

template <class T>
template <class U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out;
  out.layers.resize(layers.size());
  std::vector<Matrix<U>*> targets;
  out.for_each([&](const std::string&, Matrix<U>& m) { targets.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { *targets[i++] = m.template cast<U>(); });
  return out;
}

}  // namespace mtb
