#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>

#include "gradcheck.hpp"
#include "mtb/objectives.hpp"
#include "mtb/training.hpp"

using namespace mtb;
using namespace testutil;

namespace {

void expect_small(const std::vector<TensorError>& errors) {
  for (const auto& e : errors) {
    INFO(e.name);
    CHECK(e.rel < 1e-4);
  }
}

}  // namespace

TEST_CASE("MTB loss gradient matches finite differences for every encoder variant") {
  for (const auto& cfg : all_variants()) {
    const std::string variant = std::string(to_string(cfg.input_variant)) + "/" + to_string(cfg.output_variant) + "/" +
                                to_string(cfg.post_layer);
    CAPTURE(variant);
    Encoder<double> model(cfg);
    testutil::randomize(model.params(), 11, 0.2);
    model.params().post_weight *= 0.5;
    const auto pairs = smooth_pairs(model, 4);
    TrainConfig tc;
    EncoderParams<double> grads = model.params().zeros_like();
    mtb_batch_gradient(model, std::span(pairs), tc, 9, 0, true, false, grads);
    auto loss = [&] {
      EncoderParams<double> scratch = model.params().zeros_like();
      return mtb_batch_gradient(model, std::span(pairs), tc, 9, 0, true, false, scratch).total;
    };
    // Dot products must stay inside the clamp for finite differences to apply.
    for (const auto& p : pairs) {
      const double dot = model.represent(model.prepare(p.a)).dot(model.represent(model.prepare(p.b)));
      REQUIRE(std::abs(dot) < kLogitClamp);
    }
    expect_small(check(model, grads, loss));
  }
}

TEST_CASE("MLM loss gradient matches finite differences") {
  const auto cfg = tiny(InputVariant::kEntityMarkers, OutputVariant::kEntityStart, PostLayer::kLayerNorm);
  Encoder<double> model(cfg);
  testutil::randomize(model.params(), 12);
  const auto pairs = random_pairs(3, cfg.vocab_size, 6);
  TrainConfig tc;
  tc.mlm_prob = 0.3;
  tc.lambda_mlm = 0.7;
  EncoderParams<double> grads = model.params().zeros_like();
  mtb_batch_gradient(model, std::span(pairs), tc, 21, 0, false, true, grads);
  auto loss = [&] {
    EncoderParams<double> scratch = model.params().zeros_like();
    return mtb_batch_gradient(model, std::span(pairs), tc, 21, 0, false, true, scratch).total;
  };
  expect_small(check(model, grads, loss));
}

TEST_CASE("supervised loss gradient matches finite differences, head included") {
  for (const auto& cfg : all_variants()) {
    const std::string variant = std::string(to_string(cfg.input_variant)) + "/" + to_string(cfg.output_variant) + "/" +
                                to_string(cfg.post_layer);
    CAPTURE(variant);
    Encoder<double> model(cfg);
    testutil::randomize(model.params(), 13);
    auto head = ClassifierHead<double>::init(4, cfg.rep_dim(), 3, std::nullopt, 0.3);
    std::vector<LabeledStatement> batch;
    for (std::uint64_t seed = 7; batch.empty() && seed < 500; ++seed) {
      Rng rng(seed);
      bool ok = true;
      for (int i = 0; i < 4; ++i) {
        batch.push_back({testutil::random_statement(rng, cfg.vocab_size, 4, 10), i % 4, -1});
        if (cfg.output_variant == OutputVariant::kMentionPool) {
          ok = ok && min_pool_gap(model, model.prepare(batch.back().statement)) > 0.05;
        }
      }
      if (!ok) batch.clear();
    }
    REQUIRE(batch.size() == 4);
    TrainConfig tc;
    EncoderParams<double> grads = model.params().zeros_like();
    ClassifierHead<double> head_grads = head.zeros_like();
    supervised_batch_gradient(model, head, std::span(batch), tc, grads, head_grads);
    auto loss = [&] {
      EncoderParams<double> g = model.params().zeros_like();
      ClassifierHead<double> hg = head.zeros_like();
      return supervised_batch_gradient(model, head, std::span(batch), tc, g, hg).total;
    };
    expect_small(check(model, grads, loss, &head, &head_grads));
  }
}

TEST_CASE("few-shot loss gradient matches finite differences") {
  const auto cfg = tiny(InputVariant::kEntityMarkers, OutputVariant::kEntityStart, PostLayer::kLayerNorm);
  Encoder<double> model(cfg);
  testutil::randomize(model.params(), 14);
  // Scale the representation down so softmax is not saturated.
  model.params().post_weight *= 0.3;
  Rng rng(8);
  std::vector<LabeledStatement> statements;
  for (int i = 0; i < 9; ++i) statements.push_back({testutil::random_statement(rng, cfg.vocab_size, 4, 10), i % 3, -1});
  const std::vector<int> types{0, 1, 2};
  const auto episodes = build_episodes(statements, types, 3, 2, 2, 4);
  TrainConfig tc;
  EncoderParams<double> grads = model.params().zeros_like();
  fewshot_batch_gradient(model, std::span(statements), std::span(episodes), tc, grads);
  auto loss = [&] {
    EncoderParams<double> g = model.params().zeros_like();
    return fewshot_batch_gradient(model, std::span(statements), std::span(episodes), tc, g).total;
  };
  expect_small(check(model, grads, loss));
}
