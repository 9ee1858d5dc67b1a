#include "mtb/encoder.hpp"

#include <cmath>
#include <numbers>

namespace mtb {

const char* to_string(InputVariant v) {
  switch (v) {
    case InputVariant::kStandard: return "standard";
    case InputVariant::kPositionalEmb: return "positional_emb";
    case InputVariant::kEntityMarkers: return "entity_markers";
  }
  return "unknown";
}

const char* to_string(OutputVariant v) {
  switch (v) {
    case OutputVariant::kCls: return "cls";
    case OutputVariant::kMentionPool: return "mention_pool";
    case OutputVariant::kEntityStart: return "entity_start";
  }
  return "unknown";
}

const char* to_string(PostLayer v) {
  switch (v) {
    case PostLayer::kLinearDense: return "linear_dense";
    case PostLayer::kLayerNorm: return "layer_norm";
  }
  return "unknown";
}

InputVariant input_variant_from_string(const std::string& name) {
  if (name == "standard") return InputVariant::kStandard;
  if (name == "positional_emb") return InputVariant::kPositionalEmb;
  if (name == "entity_markers") return InputVariant::kEntityMarkers;
  throw Error("unknown input variant '" + name + "'");
}

OutputVariant output_variant_from_string(const std::string& name) {
  if (name == "cls") return OutputVariant::kCls;
  if (name == "mention_pool") return OutputVariant::kMentionPool;
  if (name == "entity_start") return OutputVariant::kEntityStart;
  throw Error("unknown output variant '" + name + "'");
}

PostLayer post_layer_from_string(const std::string& name) {
  if (name == "linear_dense") return PostLayer::kLinearDense;
  if (name == "layer_norm") return PostLayer::kLayerNorm;
  throw Error("unknown post layer '" + name + "'");
}

void EncoderConfig::validate() const {
  if (layers < 0) throw Error("layers must be >= 0");
  if (hidden < 1 || heads < 1) throw Error("hidden and heads must be positive");
  if (hidden % heads != 0) throw Error("hidden must be divisible by heads");
  if (ffn_mult < 1) throw Error("ffn_mult must be >= 1");
  if (max_len < 2) throw Error("max_len must be >= 2");
  if (vocab_size <= reserved::kCount) throw Error("vocab_size must exceed the reserved block");
  if (output_variant == OutputVariant::kEntityStart && input_variant != InputVariant::kEntityMarkers) {
    throw Error("entity_start output requires entity_markers input");
  }
}

EncodedInput build_input(std::span<const TokenId> x, Span s1, Span s2, InputVariant variant, int max_len) {
  const int n = static_cast<int>(x.size());
  if (!(0 <= s1.start && s1.start < s1.end && s1.end <= n && 0 <= s2.start && s2.start < s2.end && s2.end <= n)) {
    throw Error("span out of bounds");
  }
  if (s1.overlaps(s2) || s2.start < s1.end) throw Error("spans overlap or are out of order");

  EncodedInput in;
  if (variant == InputVariant::kEntityMarkers) {
    if (n + 4 > max_len) throw Error("statement too long");
    in.ids.reserve(static_cast<std::size_t>(n) + 4);
    in.ids.insert(in.ids.end(), x.begin(), x.begin() + s1.start);
    in.ids.push_back(reserved::kE1Start);
    in.ids.insert(in.ids.end(), x.begin() + s1.start, x.begin() + s1.end);
    in.ids.push_back(reserved::kE1End);
    in.ids.insert(in.ids.end(), x.begin() + s1.end, x.begin() + s2.start);
    in.ids.push_back(reserved::kE2Start);
    in.ids.insert(in.ids.end(), x.begin() + s2.start, x.begin() + s2.end);
    in.ids.push_back(reserved::kE2End);
    in.ids.insert(in.ids.end(), x.begin() + s2.end, x.end());
    in.span1 = {s1.start + 1, s1.end + 1};
    in.span2 = {s2.start + 3, s2.end + 3};
    in.marker1 = s1.start;
    in.marker2 = s2.start + 2;
    in.segments.assign(in.ids.size(), 0);
    return in;
  }

  if (n > max_len) throw Error("statement too long");
  in.ids.assign(x.begin(), x.end());
  in.span1 = s1;
  in.span2 = s2;
  in.segments.assign(in.ids.size(), 0);
  if (variant == InputVariant::kPositionalEmb) {
    for (int t = s1.start; t < s1.end; ++t) in.segments[static_cast<std::size_t>(t)] = 1;
    for (int t = s2.start; t < s2.end; ++t) in.segments[static_cast<std::size_t>(t)] = 2;
  }
  return in;
}

EncodedInput build_input(const RelationStatement& st, InputVariant variant, int max_len) {
  return build_input(st.x, st.s1, st.s2, variant, max_len);
}

EncodedInput build_input(const BlankedStatement& st, InputVariant variant, int max_len) {
  return build_input(st.x, st.s1, st.s2, variant, max_len);
}

template <class T>
EncoderParams<T> EncoderParams<T>::zeros_like() const {
  EncoderParams<T> out;
  out.layers.resize(layers.size());
  std::vector<Matrix<T>*> targets;
  out.for_each([&](const std::string&, Matrix<T>& m) { targets.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { targets[i++]->setZero(m.rows(), m.cols()); });
  return out;
}

template <class T>
void EncoderParams<T>::set_zero() {
  for_each([](const std::string&, Matrix<T>& m) { m.setZero(); });
}

template <class T>
std::size_t EncoderParams<T>::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <class T>
bool EncoderParams<T>::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows();
  Matrix<T> y(n, x.cols());
  if (cache) {
    cache->xhat.resize(n, x.cols());
    cache->rstd.resize(static_cast<std::size_t>(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const RowVector<T> centered = x.row(i).array() - mean;
    const T var = centered.squaredNorm() / static_cast<T>(x.cols());
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    const RowVector<T> xhat = centered * rstd;
    y.row(i) = xhat.cwiseProduct(gain.row(0)) + bias.row(0);
    if (cache) {
      cache->xhat.row(i) = xhat;
      cache->rstd[static_cast<std::size_t>(i)] = rstd;
    }
  }
  return y;
}

template <class T>
RowVector<T> max_pool(const Matrix<T>& hidden, Span span, std::vector<int>* argmax) {
  if (span.size() < 1 || span.start < 0 || span.end > hidden.rows()) throw Error("pooling span out of range");
  RowVector<T> out = hidden.row(span.start);
  if (argmax) argmax->assign(static_cast<std::size_t>(hidden.cols()), span.start);
  for (int t = span.start + 1; t < span.end; ++t) {
    for (Eigen::Index c = 0; c < hidden.cols(); ++c) {
      if (hidden(t, c) > out(c)) {
        out(c) = hidden(t, c);
        if (argmax) (*argmax)[static_cast<std::size_t>(c)] = t;
      }
    }
  }
  return out;
}

namespace {

template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const LayerNormCache<T>& cache,
                              Matrix<T>& d_gain, Matrix<T>& d_bias) {
  d_gain.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
  d_bias.row(0) += dy.colwise().sum();
  Matrix<T> dx(dy.rows(), dy.cols());
  const T inv_d = T(1) / static_cast<T>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const RowVector<T> g = dy.row(i).cwiseProduct(gain.row(0));
    const T mean_g = g.sum() * inv_d;
    const T mean_gx = g.dot(cache.xhat.row(i)) * inv_d;
    dx.row(i) = cache.rstd[static_cast<std::size_t>(i)] *
                (g.array() - mean_g - cache.xhat.row(i).array() * mean_gx).matrix();
  }
  return dx;
}

template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  return cdf + x * pdf;
}

template <class T>
void softmax_rows(Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

template <class T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class T>
void fill_normal(Matrix<T>& m, Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  m.resize(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
}

template <class T>
EncoderParams<T> init_params(const EncoderConfig& c) {
  c.validate();
  Rng rng(c.seed);
  const Eigen::Index d = c.hidden;
  const Eigen::Index f = static_cast<Eigen::Index>(c.hidden) * c.ffn_mult;
  const Eigen::Index r = c.rep_dim();
  EncoderParams<T> p;
  fill_normal(p.token_emb, c.vocab_size, d, c.init_std, rng);
  fill_normal(p.position_emb, c.max_len, d, c.init_std, rng);
  fill_normal(p.segment_emb, 3, d, c.init_std, rng);
  p.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix<T>::Ones(1, d);
    l.ln1_bias = Matrix<T>::Zero(1, d);
    fill_normal(l.wq, d, d, c.init_std, rng);
    fill_normal(l.wk, d, d, c.init_std, rng);
    fill_normal(l.wv, d, d, c.init_std, rng);
    fill_normal(l.wo, d, d, c.init_std, rng);
    l.bq = l.bk = l.bv = l.bo = Matrix<T>::Zero(1, d);
    l.ln2_gain = Matrix<T>::Ones(1, d);
    l.ln2_bias = Matrix<T>::Zero(1, d);
    fill_normal(l.w1, d, f, c.init_std, rng);
    l.b1 = Matrix<T>::Zero(1, f);
    fill_normal(l.w2, f, d, c.init_std, rng);
    l.b2 = Matrix<T>::Zero(1, d);
  }
  p.final_gain = Matrix<T>::Ones(1, d);
  p.final_bias = Matrix<T>::Zero(1, d);
  if (c.post_layer == PostLayer::kLinearDense) {
    fill_normal(p.post_weight, r, r, c.init_std, rng);
  } else {
    p.post_weight = Matrix<T>::Ones(1, r);
  }
  p.post_bias = Matrix<T>::Zero(1, r);
  p.mlm_bias = Matrix<T>::Zero(1, c.vocab_size);
  return p;
}

}  // namespace

template <class T>
Encoder<T>::Encoder(const EncoderConfig& config) : config_(config), params_(init_params<T>(config)) {}

template <class T>
Encoder<T>::Encoder(const EncoderConfig& config, Params params) : config_(config), params_(std::move(params)) {
  config_.validate();
  const auto reference = init_params<T>(EncoderConfig{config_});
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  reference.for_each([&](const std::string&, const Matrix<T>& m) { shapes.emplace_back(m.rows(), m.cols()); });
  if (params_.layers.size() != static_cast<std::size_t>(config_.layers)) throw Error("parameter layer count mismatch");
  std::size_t i = 0;
  params_.for_each([&](const std::string& name, const Matrix<T>& m) {
    if (m.rows() != shapes[i].first || m.cols() != shapes[i].second) throw Error("parameter shape mismatch: " + name);
    ++i;
  });
}

template <class T>
EncodedInput Encoder<T>::prepare(const RelationStatement& statement) const {
  return build_input(statement, config_.input_variant, config_.max_len);
}

template <class T>
EncodedInput Encoder<T>::prepare(const BlankedStatement& statement) const {
  return build_input(statement, config_.input_variant, config_.max_len);
}

template <class T>
void Encoder<T>::check_input(const EncodedInput& in) const {
  if (in.ids.empty() || in.size() > config_.max_len) throw Error("statement too long");
  if (in.segments.size() != in.ids.size()) throw Error("segment ids do not match token ids");
  for (std::size_t t = 0; t < in.ids.size(); ++t) {
    if (in.ids[t] < 0 || in.ids[t] >= config_.vocab_size) throw Error("token id out of vocabulary range");
    if (in.segments[t] < 0 || in.segments[t] > 2) throw Error("segment id out of range");
  }
}

template <class T>
Matrix<T> Encoder<T>::encode(const EncodedInput& input) const {
  ForwardState<T> state;
  forward(input, state);
  return std::move(state.hidden);
}

template <class T>
const Matrix<T>& Encoder<T>::forward(const EncodedInput& input, ForwardState<T>& state) const {
  check_input(input);
  const Params& p = params_;
  const Eigen::Index n = input.size();
  const int heads = config_.heads;
  const Eigen::Index dh = config_.hidden / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> x(n, config_.hidden);
  for (Eigen::Index t = 0; t < n; ++t) {
    x.row(t) = p.token_emb.row(input.ids[static_cast<std::size_t>(t)]) + p.position_emb.row(t) +
               p.segment_emb.row(input.segments[static_cast<std::size_t>(t)]);
  }

  state.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams<T>& lp = p.layers[l];
    LayerState<T>& s = state.layers[l];

    s.a = layer_norm(x, lp.ln1_gain, lp.ln1_bias, &s.ln1);
    s.q = affine(s.a, lp.wq, lp.bq);
    s.k = affine(s.a, lp.wk, lp.bk);
    s.v = affine(s.a, lp.wv, lp.bv);
    s.probs.resize(static_cast<std::size_t>(heads));
    s.context.resize(n, config_.hidden);
    for (int h = 0; h < heads; ++h) {
      Matrix<T>& prob = s.probs[static_cast<std::size_t>(h)];
      prob.noalias() = s.q.middleCols(h * dh, dh) * s.k.middleCols(h * dh, dh).transpose();
      prob *= scale;
      softmax_rows(prob);
      s.context.middleCols(h * dh, dh).noalias() = prob * s.v.middleCols(h * dh, dh);
    }
    x += affine(s.context, lp.wo, lp.bo);

    s.b = layer_norm(x, lp.ln2_gain, lp.ln2_bias, &s.ln2);
    s.u = affine(s.b, lp.w1, lp.b1);
    s.g = s.u.unaryExpr([](T v) { return gelu(v); });
    x += affine(s.g, lp.w2, lp.b2);
  }

  state.hidden = layer_norm(x, p.final_gain, p.final_bias, &state.final_ln);
  if (!state.hidden.allFinite()) throw Error("numeric overflow");
  return state.hidden;
}

template <class T>
void Encoder<T>::backward(const EncodedInput& input, const ForwardState<T>& state, const Matrix<T>& d_hidden,
                          Params& grads) const {
  const Params& p = params_;
  const Eigen::Index n = input.size();
  const int heads = config_.heads;
  const Eigen::Index dh = config_.hidden / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> dx = layer_norm_backward(d_hidden, p.final_gain, state.final_ln, grads.final_gain, grads.final_bias);

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const LayerParams<T>& lp = p.layers[li];
    const LayerState<T>& s = state.layers[li];
    LayerParams<T>& gp = grads.layers[li];

    // Feed-forward residual branch.
    gp.w2.noalias() += s.g.transpose() * dx;
    gp.b2.row(0) += dx.colwise().sum();
    Matrix<T> du = dx * lp.w2.transpose();
    du.array() *= s.u.unaryExpr([](T v) { return gelu_grad(v); }).array();
    gp.w1.noalias() += s.b.transpose() * du;
    gp.b1.row(0) += du.colwise().sum();
    const Matrix<T> db = du * lp.w1.transpose();
    dx += layer_norm_backward(db, lp.ln2_gain, s.ln2, gp.ln2_gain, gp.ln2_bias);

    // Attention residual branch.
    gp.wo.noalias() += s.context.transpose() * dx;
    gp.bo.row(0) += dx.colwise().sum();
    const Matrix<T> d_context = dx * lp.wo.transpose();
    Matrix<T> dq(n, config_.hidden), dk(n, config_.hidden), dv(n, config_.hidden);
    for (int h = 0; h < heads; ++h) {
      const Matrix<T>& prob = s.probs[static_cast<std::size_t>(h)];
      const auto d_ctx_h = d_context.middleCols(h * dh, dh);
      Matrix<T> d_prob = d_ctx_h * s.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = prob.transpose() * d_ctx_h;
      const auto row_dot = prob.cwiseProduct(d_prob).rowwise().sum().eval();
      Matrix<T> d_score = prob.cwiseProduct((d_prob.colwise() - row_dot));
      d_score *= scale;
      dq.middleCols(h * dh, dh).noalias() = d_score * s.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = d_score.transpose() * s.q.middleCols(h * dh, dh);
    }
    gp.wq.noalias() += s.a.transpose() * dq;
    gp.wk.noalias() += s.a.transpose() * dk;
    gp.wv.noalias() += s.a.transpose() * dv;
    gp.bq.row(0) += dq.colwise().sum();
    gp.bk.row(0) += dk.colwise().sum();
    gp.bv.row(0) += dv.colwise().sum();
    Matrix<T> da = dq * lp.wq.transpose();
    da.noalias() += dk * lp.wk.transpose();
    da.noalias() += dv * lp.wv.transpose();
    dx += layer_norm_backward(da, lp.ln1_gain, s.ln1, gp.ln1_gain, gp.ln1_bias);
  }

  for (Eigen::Index t = 0; t < n; ++t) {
    grads.token_emb.row(input.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    grads.position_emb.row(t) += dx.row(t);
    grads.segment_emb.row(input.segments[static_cast<std::size_t>(t)]) += dx.row(t);
  }
}

template <class T>
RowVector<T> Encoder<T>::relation_rep(const EncodedInput& input, const Matrix<T>& hidden, RepState<T>* state) const {
  const Eigen::Index d = config_.hidden;
  RowVector<T> pooled;
  switch (config_.output_variant) {
    case OutputVariant::kCls:
      pooled = hidden.row(0);
      break;
    case OutputVariant::kMentionPool: {
      pooled.resize(2 * d);
      pooled.head(d) = max_pool(hidden, input.span1, state ? &state->argmax1 : nullptr);
      pooled.tail(d) = max_pool(hidden, input.span2, state ? &state->argmax2 : nullptr);
      break;
    }
    case OutputVariant::kEntityStart:
      if (!input.marker1 || !input.marker2) throw Error("entity_start output requires entity marker positions");
      pooled.resize(2 * d);
      pooled.head(d) = hidden.row(*input.marker1);
      pooled.tail(d) = hidden.row(*input.marker2);
      break;
  }

  RowVector<T> out;
  if (config_.post_layer == PostLayer::kLinearDense) {
    out = pooled * params_.post_weight + params_.post_bias.row(0);
  } else {
    Matrix<T> as_row = pooled;
    out = layer_norm(as_row, params_.post_weight, params_.post_bias, state ? &state->post_ln : nullptr).row(0);
  }
  if (state) state->pooled = std::move(pooled);
  return out;
}

template <class T>
void Encoder<T>::relation_rep_backward(const EncodedInput& input, const RepState<T>& state, const RowVector<T>& d_rep,
                                       Matrix<T>& d_hidden, Params& grads) const {
  const Eigen::Index d = config_.hidden;
  RowVector<T> d_pooled;
  if (config_.post_layer == PostLayer::kLinearDense) {
    grads.post_weight.noalias() += state.pooled.transpose() * d_rep;
    grads.post_bias.row(0) += d_rep;
    d_pooled = d_rep * params_.post_weight.transpose();
  } else {
    Matrix<T> dy = d_rep;
    d_pooled = layer_norm_backward(dy, params_.post_weight, state.post_ln, grads.post_weight, grads.post_bias).row(0);
  }

  switch (config_.output_variant) {
    case OutputVariant::kCls:
      d_hidden.row(0) += d_pooled;
      break;
    case OutputVariant::kMentionPool:
      for (Eigen::Index c = 0; c < d; ++c) {
        d_hidden(state.argmax1[static_cast<std::size_t>(c)], c) += d_pooled(c);
        d_hidden(state.argmax2[static_cast<std::size_t>(c)], c) += d_pooled(d + c);
      }
      break;
    case OutputVariant::kEntityStart:
      d_hidden.row(*input.marker1) += d_pooled.head(d);
      d_hidden.row(*input.marker2) += d_pooled.tail(d);
      break;
  }
}

template <class T>
RowVector<T> Encoder<T>::represent(const EncodedInput& input) const {
  const Matrix<T> hidden = encode(input);
  return relation_rep(input, hidden);
}

template class Encoder<float>;
template class Encoder<double>;
template struct EncoderParams<float>;
template struct EncoderParams<double>;
template Matrix<float> layer_norm(const Matrix<float>&, const Matrix<float>&, const Matrix<float>&,
                                  LayerNormCache<float>*);
template Matrix<double> layer_norm(const Matrix<double>&, const Matrix<double>&, const Matrix<double>&,
                                   LayerNormCache<double>*);
template RowVector<float> max_pool(const Matrix<float>&, Span, std::vector<int>*);
template RowVector<double> max_pool(const Matrix<double>&, Span, std::vector<int>*);

}  // namespace mtb
