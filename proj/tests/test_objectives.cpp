#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mtb/objectives.hpp"

using namespace mtb;

namespace {

using Vec = RowVector<double>;

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vec random_vec(Rng& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = nd(rng);
  return v;
}

// Central-difference derivative of f along each coordinate of x.
template <class F>
Vec numeric_grad(Vec x, F&& f, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

double rel_err(const Vec& a, const Vec& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

EncodedInput plain_input(std::vector<TokenId> ids) {
  EncodedInput in;
  in.ids = std::move(ids);
  in.segments.assign(in.ids.size(), 0);
  in.span1 = {1, 2};
  in.span2 = {2, 3};
  return in;
}

}  // namespace

TEST_CASE("mtb_probability examples") {
  Vec e0 = vec({1, 0, 0});
  Vec e1 = vec({0, 1, 0});
  CHECK(mtb_probability(e0, e0) == doctest::Approx(0.7310585786).epsilon(1e-9));
  CHECK(mtb_probability(e0, e1) == 0.5);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    auto a = random_vec(rng, 8), b = random_vec(rng, 8);
    CHECK(mtb_probability(a, b) == mtb_probability(b, a));
  }
}

TEST_CASE("mtb_probability clamps extreme dot products") {
  Vec big = vec({100, 0});
  const double p = mtb_probability(big, big);
  CHECK(p == doctest::Approx(1.0 / (1.0 + std::exp(-30.0))).epsilon(1e-15));
  CHECK(p < 1.0);
  CHECK(mtb_probability(big, Vec(-big)) > 0.0);
  CHECK(std::isfinite(mtb_pair_loss(big, Vec(-big), 1)));
}

TEST_CASE("zero dot products give ln 2") {
  MtbBatch<double> batch;
  batch.labels = {1};
  batch.first = {vec({1, 0})};
  batch.second = {vec({0, 1})};
  CHECK(mtb_loss(batch).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // r_A, r_B share both entities, r_C only the first: one positive and two hard negatives
  MtbBatch<double> table;
  table.labels = {1, 0, 0};
  Vec zero = Vec::Zero(4);
  table.first = {zero, zero, zero};
  table.second = {zero, zero, zero};
  CHECK(mtb_loss(table).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("exhaustive pair sampling equals the double-sum objective") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    std::vector<Vec> reps;
    std::vector<std::pair<int, int>> ents;
    for (int i = 0; i < n; ++i) {
      reps.push_back(random_vec(rng, 6, 0.7));
      ents.push_back({static_cast<int>(rng() % 3), static_cast<int>(rng() % 3)});
    }
    double direct = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double delta = ents[i] == ents[j] ? 1.0 : 0.0;
        const double p = 1.0 / (1.0 + std::exp(-reps[i].dot(reps[j])));
        direct -= delta * std::log(p) + (1 - delta) * std::log(1 - p);
      }
    }
    direct /= static_cast<double>(n) * (n - 1);

    MtbBatch<double> batch;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        batch.labels.push_back(ents[i] == ents[j] ? 1 : 0);
        batch.first.push_back(reps[i]);
        batch.second.push_back(reps[j]);
      }
    }
    CHECK(std::abs(mtb_loss(batch).loss - direct) <= 1e-12);
  }
}

TEST_CASE("mtb_loss is nonnegative and vanishes with separation") {
  MtbBatch<double> batch;
  batch.labels = {1, 0};
  for (double s : {0.5, 1.0, 2.0, 4.0}) {
    batch.first = {vec({s, 0}), vec({s, 0})};
    batch.second = {vec({s, 0}), vec({-s, 0})};
    CHECK(mtb_loss(batch).loss > 0);
  }
  batch.first = {vec({6, 0}), vec({6, 0})};
  batch.second = {vec({6, 0}), vec({-6, 0})};
  // dot products of +-36 hit the clamp, leaving log(1 + e^-30) per pair
  CHECK(mtb_loss(batch).loss == doctest::Approx(std::log1p(std::exp(-30.0))).epsilon(1e-9));
  CHECK(mtb_loss(batch).loss < 1e-13);
}

TEST_CASE("mtb_loss gradient matches finite differences on two pairs") {
  Rng rng(3);
  MtbBatch<double> batch;
  batch.labels = {1, 0};
  for (int i = 0; i < 2; ++i) {
    batch.first.push_back(random_vec(rng, 5));
    batch.second.push_back(random_vec(rng, 5));
  }
  auto analytic = mtb_loss(batch);
  for (int i = 0; i < 2; ++i) {
    auto num_first = numeric_grad(batch.first[i], [&](const Vec& x) {
      auto b = batch;
      b.first[i] = x;
      return mtb_loss(b).loss;
    });
    auto num_second = numeric_grad(batch.second[i], [&](const Vec& x) {
      auto b = batch;
      b.second[i] = x;
      return mtb_loss(b).loss;
    });
    CHECK(rel_err(analytic.d_first[i], num_first) < 1e-4);
    CHECK(rel_err(analytic.d_second[i], num_second) < 1e-4);
  }
}

TEST_CASE("mtb_loss errors") {
  MtbBatch<double> empty;
  CHECK_THROWS_AS(mtb_loss(empty), Error);
  MtbBatch<double> bad;
  bad.labels = {2};
  bad.first = {vec({1})};
  bad.second = {vec({1})};
  CHECK_THROWS_AS(mtb_loss(bad), Error);
  CHECK_THROWS_AS(mtb_probability(vec({1, 2}), vec({1})), Error);
}

TEST_CASE("mask_tokens degenerate probabilities") {
  auto in = plain_input({reserved::kCls, reserved::kE1Start, 11, reserved::kE1End, 12, 13, reserved::kBlank, 14,
                         reserved::kSep});
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    auto zero = mask_tokens(in, rng, 20, 0.0);
    REQUIRE(zero.targets.size() == 1);
    int changed = 0;
    for (std::size_t i = 0; i < in.ids.size(); ++i) changed += zero.input.ids[i] != in.ids[i];
    CHECK(changed <= 1);

    auto all = mask_tokens(in, rng, 20, 1.0);
    std::vector<int> positions;
    for (const auto& tg : all.targets) positions.push_back(tg.position);
    CHECK(positions == std::vector<int>{2, 4, 5, 7});
  }
}

TEST_CASE("mask_tokens never targets reserved tokens") {
  Rng rng(5);
  int mask = 0, random = 0, kept = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    auto st = testutil::random_statement(rng, 40, 3, 15);
    auto in = build_input(st, InputVariant::kEntityMarkers, 64);
    in.ids[in.span1.start] = reserved::kBlank;
    auto batch = mask_tokens(in, rng, 40, 0.3);
    CHECK_FALSE(batch.targets.empty());
    for (const auto& tg : batch.targets) {
      CHECK_FALSE(is_reserved(tg.original));
      CHECK(tg.original == in.ids[tg.position]);
      const TokenId now = batch.input.ids[tg.position];
      if (now == reserved::kMask)
        ++mask;
      else if (now == tg.original)
        ++kept;
      else
        ++random;
      CHECK((now == reserved::kMask || !is_reserved(now)));
    }
    CHECK(batch.input.segments == in.segments);
  }
  const double total = mask + random + kept;
  CHECK(mask / total == doctest::Approx(0.8).epsilon(0.05));
  CHECK((random + kept) / total == doctest::Approx(0.2).epsilon(0.2));
}

TEST_CASE("mask_tokens errors") {
  Rng rng(6);
  CHECK_THROWS_AS(mask_tokens(plain_input({reserved::kCls, reserved::kSep}), rng, 20), Error);
  CHECK_THROWS_AS(mask_tokens(plain_input({reserved::kCls, 11, reserved::kSep}), rng, 10), Error);
}

TEST_CASE("uniform MLM logits over eleven tokens give ln 11") {
  EncoderConfig cfg;
  cfg.layers = 0;
  cfg.hidden = 4;
  cfg.heads = 1;
  cfg.max_len = 8;
  cfg.vocab_size = 11;
  cfg.input_variant = InputVariant::kStandard;
  cfg.output_variant = OutputVariant::kCls;
  Encoder<double> model(cfg);
  model.params().token_emb.setZero();
  model.params().mlm_bias.setZero();
  Matrix<double> hidden = Matrix<double>::Random(3, 4);
  std::vector<MlmTarget> targets{{1, 10}, {2, 10}};
  CHECK(mlm_loss_from_hidden(model.params(), hidden, targets) == doctest::Approx(std::log(11.0)).epsilon(1e-14));
}

TEST_CASE("MLM loss decreases monotonically as the correct logit grows") {
  EncoderConfig cfg;
  cfg.layers = 0;
  cfg.hidden = 12;
  cfg.heads = 1;
  cfg.max_len = 8;
  cfg.vocab_size = 12;
  cfg.input_variant = InputVariant::kStandard;
  cfg.output_variant = OutputVariant::kCls;
  Encoder<double> model(cfg);
  model.params().token_emb = Matrix<double>::Identity(12, 12);
  model.params().mlm_bias.setZero();
  std::vector<MlmTarget> targets{{0, 10}};
  double prev = std::numeric_limits<double>::infinity();
  for (double m = 0; m <= 40; m += 2) {
    Matrix<double> hidden = Matrix<double>::Zero(1, 12);
    hidden(0, 10) = m;
    const double loss = mlm_loss_from_hidden(model.params(), hidden, targets);
    CHECK(loss < prev);
    CHECK(loss >= 0);
    prev = loss;
  }
  CHECK(prev < 1e-15);
}

TEST_CASE("supervised loss closed forms") {
  ClassifierHead<double> head;
  head.weight = Matrix<double>::Zero(4, 3);
  head.bias = Matrix<double>::Zero(1, 4);
  CHECK(supervised_loss(head, vec({0.3, -1, 2}), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  for (double m : {0.5, 1.0, 3.0, 10.0}) {
    for (int t = 0; t < 4; ++t) {
      head.weight.setZero();
      head.bias.setZero();
      head.bias(0, t) = m;
      CHECK(supervised_loss(head, vec({0, 0, 0}), t) ==
            doctest::Approx(std::log(1 + 3 * std::exp(-m))).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(supervised_loss(head, vec({0, 0, 0}), 4), Error);
  CHECK_THROWS_AS(supervised_loss(head, vec({0, 0, 0}), -1), Error);
  CHECK_THROWS_AS(supervised_loss(head, vec({0, 0}), 0), Error);
}

TEST_CASE("supervised loss gradients match finite differences") {
  Rng rng(7);
  auto head = ClassifierHead<double>::init(5, 6, 3, {}, 0.5);
  auto rep = random_vec(rng, 6);
  Vec d_rep;
  auto grads = head.zeros_like();
  supervised_loss(head, rep, 3, &d_rep, &grads);
  auto num = numeric_grad(rep, [&](const Vec& x) { return supervised_loss(head, x, 3); });
  CHECK(rel_err(d_rep, num) < 1e-4);

  Vec flat_w = Eigen::Map<const Vec>(head.weight.data(), head.weight.size());
  auto num_w = numeric_grad(flat_w, [&](const Vec& x) {
    auto h = head;
    Eigen::Map<Vec>(h.weight.data(), h.weight.size()) = x;
    return supervised_loss(h, rep, 3);
  });
  CHECK(rel_err(Eigen::Map<const Vec>(grads.weight.data(), grads.weight.size()), num_w) < 1e-4);
  auto num_b = numeric_grad(Vec(head.bias.row(0)), [&](const Vec& x) {
    auto h = head;
    h.bias.row(0) = x;
    return supervised_loss(h, rep, 3);
  });
  CHECK(rel_err(grads.bias.row(0), num_b) < 1e-4);
}

TEST_CASE("classifier head validation") {
  CHECK_THROWS_AS(ClassifierHead<double>::init(1, 4, 0), Error);
  CHECK_THROWS_AS(ClassifierHead<double>::init(3, 4, 0, 3), Error);
  auto head = ClassifierHead<double>::init(3, 4, 0, 2);
  CHECK(head.nil_index == 2);
  CHECK(head.num_classes() == 3);
  CHECK(head.rep_dim() == 4);
}

TEST_CASE("fewshot_scores examples") {
  std::vector<Vec> cands{vec({1, 0}), vec({0, 1})};
  auto r = fewshot_scores<double>(vec({1, 0}), cands);
  CHECK(r.scores == std::vector<double>{1, 0});
  CHECK(r.prediction == 0);

  std::vector<Vec> same(4, vec({0.3, 0.3}));
  CHECK(fewshot_scores<double>(vec({1, 2}), same).prediction == 0);

  std::vector<Vec> five(5, vec({0, 0}));
  CHECK(fewshot_scores<double>(vec({1, 1}), five, 2).loss == doctest::Approx(std::log(5.0)).epsilon(1e-14));

  std::vector<Vec> one{vec({1, 0})};
  CHECK_THROWS_AS(fewshot_scores<double>(vec({1, 0}), one), Error);
  CHECK_THROWS_AS(fewshot_scores<double>(vec({1, 0}), cands, 2), Error);
}

TEST_CASE("fewshot loss gradients match finite differences") {
  Rng rng(8);
  auto query = random_vec(rng, 4);
  std::vector<Vec> cands;
  for (int i = 0; i < 4; ++i) cands.push_back(random_vec(rng, 4));
  auto r = fewshot_scores<double>(query, cands, 1);
  auto num_q = numeric_grad(query, [&](const Vec& x) { return fewshot_scores<double>(x, cands, 1).loss; });
  CHECK(rel_err(r.d_query, num_q) < 1e-4);
  for (int c = 0; c < 4; ++c) {
    auto num_c = numeric_grad(cands[c], [&](const Vec& x) {
      auto copy = cands;
      copy[c] = x;
      return fewshot_scores<double>(query, copy, 1).loss;
    });
    CHECK(rel_err(r.d_candidates[c], num_c) < 1e-4);
  }
}

TEST_CASE("softmax sums to one and argmax prefers the lowest index") {
  Rng rng(9);
  std::normal_distribution<double> nd(0, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> logits(1 + rng() % 30);
    for (auto& l : logits) l = nd(rng);
    auto p = softmax<double>(logits);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
  }
  std::vector<double> tied{1, 3, 3, 2};
  CHECK(argmax<double>(tied) == 1);
  std::vector<double> empty;
  CHECK_THROWS_AS(argmax<double>(empty), Error);
}
