#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "mtb/checkpoint.hpp"
#include "mtb/io.hpp"
#include "mtb/training.hpp"
#include "synth_pipeline.hpp"

using namespace mtb;
namespace fs = std::filesystem;

namespace {

SynthConfig small_world(std::uint64_t seed) {
  SynthConfig c;
  c.num_relations = 4;
  c.templates_per_relation = 2;
  c.entities = 40;
  c.docs = 120;
  c.seed = seed;
  return c;
}

template <class T>
std::vector<Matrix<T>> snapshot(const EncoderParams<T>& p) {
  std::vector<Matrix<T>> out;
  p.for_each([&](const std::string&, const Matrix<T>& m) { out.push_back(m); });
  return out;
}

template <class T>
double max_diff(const EncoderParams<T>& a, const EncoderParams<T>& b) {
  auto sa = snapshot(a), sb = snapshot(b);
  double d = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) d = std::max(d, static_cast<double>((sa[i] - sb[i]).cwiseAbs().maxCoeff()));
  return d;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mtb_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("sgd example") {
  std::vector<double> p{1.0};
  std::vector<double> g{2.0};
  sgd_step(std::span<double>(p), std::span<const double>(g), 0.1);
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("first adam step moves by about lr") {
  for (double g0 : {-5.0, 0.01, 3.0}) {
    std::vector<double> p{0.5}, g{g0}, m{0}, v{0};
    adam_step<double>(p, g, m, v, 1, AdamHyper{0.01, 0.9, 0.999, 1e-8});
    CHECK(std::abs(0.5 - p[0]) == doctest::Approx(0.01).epsilon(1e-5));
    CHECK((0.5 - p[0]) * g0 > 0);
  }
}

TEST_CASE("adam matches a scalar reference over 100 steps") {
  const AdamHyper h{0.003, 0.85, 0.995, 1e-7};
  Rng rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> p(7), m(7, 0.0), v(7, 0.0);
  for (auto& x : p) x = nd(rng);
  std::vector<double> ref_p = p, ref_m(7, 0.0), ref_v(7, 0.0);
  for (long t = 1; t <= 100; ++t) {
    std::vector<double> g(7);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(0.3 * t + i) + 0.1 * p[i];
    adam_step<double>(p, g, m, v, t, h);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ref_m[i] = h.beta1 * ref_m[i] + (1 - h.beta1) * g[i];
      ref_v[i] = h.beta2 * ref_v[i] + (1 - h.beta2) * g[i] * g[i];
      const double mh = ref_m[i] / (1 - std::pow(h.beta1, t));
      const double vh = ref_v[i] / (1 - std::pow(h.beta2, t));
      ref_p[i] -= h.lr * mh / (std::sqrt(vh) + h.eps);
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ref_p[i]) <= 1e-12);
}

TEST_CASE("optimizer state persists across steps") {
  Matrix<double> w = Matrix<double>::Constant(2, 2, 1.0);
  Matrix<double> g = Matrix<double>::Constant(2, 2, 0.5);
  Optimizer<double> opt(OptimizerKind::kAdam, AdamHyper{});
  std::vector<Matrix<double>*> params{&w}, grads{&g};
  opt.step(params, grads, 0.1);
  opt.step(params, grads, 0.1);
  CHECK(opt.steps_taken() == 2);
  CHECK(w(0, 0) == doctest::Approx(0.8).epsilon(1e-6));
  Optimizer<double> sgd(OptimizerKind::kSgd, AdamHyper{});
  sgd.step(params, grads, 0.2);
  CHECK(w(1, 1) == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("train config parsing") {
  auto c = TrainConfig::parse(
      "# pretraining\n"
      "mode = mtb_pretrain\n"
      "optimizer = sgd   # plain\n"
      "lr = 0.05\n"
      "batch_size=8\n"
      "steps = 12\n"
      "seed = 99\n"
      "lambda_mlm = 0.5\n"
      "mlm_schedule = alternating\n");
  CHECK(c.mode == TrainMode::kMtbPretrain);
  CHECK(c.optimizer == OptimizerKind::kSgd);
  CHECK(c.lr == 0.05);
  CHECK(c.batch_size == 8);
  CHECK(c.steps == 12);
  CHECK(c.seed == 99);
  CHECK(c.lambda_mlm == 0.5);
  CHECK(c.mlm_schedule == MlmSchedule::kAlternating);
  CHECK(TrainConfig::parse(c.to_text()) == c);

  CHECK_THROWS_WITH_AS(TrainConfig::parse("lr = 1\nbogus = 3\n"), "config line 2: unknown key 'bogus'", Error);
  CHECK_THROWS_AS(TrainConfig::parse("lr = fast\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("batch_size = 0\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("lr = -1\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("just words\n"), Error);
}

TEST_CASE("one step at lr 0 leaves parameters unchanged") {
  SynthWorld world(small_world(1));
  PairGenConfig pc;
  pc.max_pairs = 64;
  auto data = testutil::mtb_data(world, pc);
  Encoder<float> model(testutil::encoder_for(data.vocab, 1, 16, 2, 48, 3));
  const auto before = model.params();
  TrainConfig tc;
  tc.lr = 0.0;
  tc.steps = 1;
  tc.batch_size = 8;
  auto result = pretrain_mtb(model, data.pairs, tc);
  CHECK(result.steps == 1);
  CHECK(max_diff(before, model.params()) == 0.0);
}

TEST_CASE("mode and data mismatches are errors") {
  SynthWorld world(small_world(1));
  PairGenConfig pc;
  pc.max_pairs = 16;
  auto data = testutil::mtb_data(world, pc);
  Encoder<float> model(testutil::encoder_for(data.vocab, 1, 16, 2, 48, 3));
  TrainConfig tc;
  tc.mode = TrainMode::kSupervisedFinetune;
  CHECK_THROWS_AS(pretrain_mtb(model, data.pairs, tc), Error);
  tc.mode = TrainMode::kMtbPretrain;
  std::vector<StatementPair> none;
  CHECK_THROWS_AS(pretrain_mtb(model, none, tc), Error);
  auto head = ClassifierHead<float>::init(4, model.config().rep_dim(), 1);
  std::vector<LabeledStatement> labeled;
  CHECK_THROWS_AS(finetune_supervised(model, head, labeled, tc), Error);
}

TEST_CASE("non-finite loss aborts with the step index") {
  SynthWorld world(small_world(2));
  auto records = synth_labeled(world, {0, 1, 2, 3}, 4, 1);
  auto vocab = Vocabulary::build(corpus_tokens(synth_corpus(world).docs), 1);
  auto set = to_labeled_set(records, vocab, world.relation_names());
  Encoder<float> model(testutil::encoder_for(vocab, 1, 16, 2, 48, 3));
  auto head = ClassifierHead<float>::init(4, model.config().rep_dim(), 1);
  head.weight(0, 0) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.mode = TrainMode::kSupervisedFinetune;
  tc.steps = 3;
  tc.batch_size = 4;
  try {
    finetune_supervised(model, head, set.items, tc);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("micro-batch accumulation equals the large-batch MTB gradient") {
  SynthWorld world(small_world(3));
  PairGenConfig pc;
  pc.max_pairs = 8;
  pc.seed = 4;
  auto data = testutil::mtb_data(world, pc);
  Encoder<double> model(testutil::encoder_for(data.vocab, 2, 16, 2, 48, 5));
  testutil::randomize(model.params(), 6, 0.1);
  TrainConfig tc;
  tc.lambda_mlm = 0.7;
  std::span<const StatementPair> all(data.pairs);

  auto full = model.params().zeros_like();
  auto whole = mtb_batch_gradient(model, all, tc, 42, 0, true, true, full);
  auto g1 = model.params().zeros_like();
  auto g2 = model.params().zeros_like();
  auto a = mtb_batch_gradient(model, all.subspan(0, 3), tc, 42, 0, true, true, g1);
  auto b = mtb_batch_gradient(model, all.subspan(3), tc, 42, 3, true, true, g2);
  CHECK(std::abs(whole.total - (3 * a.total + 5 * b.total) / 8) <= 1e-10);

  auto sf = snapshot(full), s1 = snapshot(g1), s2 = snapshot(g2);
  double err = 0;
  for (std::size_t i = 0; i < sf.size(); ++i)
    err = std::max(err, (sf[i] - (3.0 * s1[i] + 5.0 * s2[i]) / 8.0).cwiseAbs().maxCoeff());
  CHECK(err <= 1e-10);
}

TEST_CASE("micro-batch accumulation equals the large-batch supervised gradient") {
  SynthWorld world(small_world(4));
  auto records = synth_labeled(world, {0, 1, 2, 3}, 3, 2);
  auto vocab = Vocabulary::build(corpus_tokens(synth_corpus(world).docs), 1);
  auto set = to_labeled_set(records, vocab, world.relation_names());
  Encoder<double> model(testutil::encoder_for(vocab, 2, 16, 2, 48, 5));
  testutil::randomize(model.params(), 7, 0.1);
  auto head = ClassifierHead<double>::init(4, model.config().rep_dim(), 3, {}, 0.3);
  TrainConfig tc;
  std::span<const LabeledStatement> all(set.items);
  const std::size_t n = all.size(), k = 5;

  auto full = model.params().zeros_like();
  auto full_head = head.zeros_like();
  supervised_batch_gradient(model, head, all, tc, full, full_head);
  auto g1 = model.params().zeros_like(), g2 = model.params().zeros_like();
  auto h1 = head.zeros_like(), h2 = head.zeros_like();
  supervised_batch_gradient(model, head, all.subspan(0, k), tc, g1, h1);
  supervised_batch_gradient(model, head, all.subspan(k), tc, g2, h2);
  const double wa = double(k) / n, wb = double(n - k) / n;
  auto sf = snapshot(full), s1 = snapshot(g1), s2 = snapshot(g2);
  double err = 0;
  for (std::size_t i = 0; i < sf.size(); ++i) err = std::max(err, (sf[i] - (wa * s1[i] + wb * s2[i])).cwiseAbs().maxCoeff());
  err = std::max(err, (full_head.weight - (wa * h1.weight + wb * h2.weight)).cwiseAbs().maxCoeff());
  CHECK(err <= 1e-10);
}

TEST_CASE("same config and seed give identical metrics logs") {
  SynthWorld world(small_world(5));
  PairGenConfig pc;
  pc.max_pairs = 200;
  auto data = testutil::mtb_data(world, pc);
  TrainConfig tc;
  tc.steps = 12;
  tc.batch_size = 8;
  tc.log_every = 3;
  tc.seed = 17;
  auto run = [&] {
    Encoder<float> model(testutil::encoder_for(data.vocab, 1, 16, 2, 48, 3));
    auto r = pretrain_mtb(model, data.pairs, tc);
    return std::make_pair(r, model.params());
  };
  auto [r1, p1] = run();
  auto [r2, p2] = run();
  REQUIRE(r1.log.size() == 4);
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(r1.log[i].step == r2.log[i].step);
    CHECK(r1.log[i].loss == r2.log[i].loss);
    CHECK(r1.log[i].mtb_loss == r2.log[i].mtb_loss);
    CHECK(r1.log[i].mlm_loss == r2.log[i].mlm_loss);
    CHECK(r1.log[i].accuracy == r2.log[i].accuracy);
  }
  CHECK(max_diff(p1, p2) == 0.0);

  const auto dir = scratch("metrics");
  write_metrics(dir / "a.jsonl", r1.log);
  write_metrics(dir / "b.jsonl", r2.log);
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("results do not depend on the thread count") {
  SynthWorld world(small_world(6));
  PairGenConfig pc;
  pc.max_pairs = 100;
  auto data = testutil::mtb_data(world, pc);
  auto run = [&](int threads) {
    Encoder<float> model(testutil::encoder_for(data.vocab, 1, 16, 2, 48, 3));
    TrainConfig tc;
    tc.steps = 5;
    tc.batch_size = 10;
    tc.threads = threads;
    pretrain_mtb(model, data.pairs, tc);
    return model.params();
  };
  CHECK(max_diff(run(1), run(3)) == 0.0);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  SynthWorld world(small_world(7));
  auto vocab = Vocabulary::build(corpus_tokens(synth_corpus(world).docs), 1);
  Checkpoint ck;
  ck.config = testutil::encoder_for(vocab, 2, 16, 2, 48, 9);
  ck.config.input_variant = InputVariant::kPositionalEmb;
  ck.config.output_variant = OutputVariant::kMentionPool;
  ck.params = Encoder<float>(ck.config).params();
  ck.vocab = vocab;
  ck.head = ClassifierHead<float>::init(5, ck.config.rep_dim(), 2, 4);
  ck.relation_names = {"a", "b", "c", "d", "no_relation"};
  ck.step = 123;

  const auto d1 = scratch("ck1"), d2 = scratch("ck2");
  save_checkpoint(d1, ck);
  auto loaded = load_checkpoint(d1);
  CHECK(loaded.config == ck.config);
  CHECK(loaded.step == 123);
  CHECK(loaded.relation_names == ck.relation_names);
  REQUIRE(loaded.head.has_value());
  CHECK(loaded.head->nil_index == 4);
  CHECK(loaded.head->weight == ck.head->weight);
  CHECK(max_diff(loaded.params, ck.params) == 0.0);
  CHECK(loaded.vocab == vocab);
  save_checkpoint(d2, loaded);
  for (const char* f : {"manifest.json", "tensors.bin", "vocab.txt"}) CHECK(read_file(d1 / f) == read_file(d2 / f));
  CHECK_NOTHROW(check_vocab(loaded, vocab));
  CHECK_THROWS_AS(check_vocab(loaded, Vocabulary()), Error);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("checkpoint loading rejects mismatches") {
  SynthWorld world(small_world(8));
  auto vocab = Vocabulary::build(corpus_tokens(synth_corpus(world).docs), 1);
  Checkpoint ck;
  ck.config = testutil::encoder_for(vocab, 1, 16, 2, 48, 9);
  ck.params = Encoder<float>(ck.config).params();
  ck.vocab = vocab;
  const auto dir = scratch("ck_bad");

  auto rewrite = [&](const std::string& from, const std::string& to) {
    save_checkpoint(dir, ck);
    auto text = read_file(dir / "manifest.json");
    auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
    write_file(dir / "manifest.json", text);
  };
  rewrite("\"version\": 1", "\"version\": 2");
  CHECK_THROWS_AS(load_checkpoint(dir), Error);

  rewrite("\"hidden\": 16", "\"hidden\": 32");
  CHECK_THROWS_AS(load_checkpoint(dir), Error);

  save_checkpoint(dir, ck);
  {
    std::ofstream out(dir / "vocab.txt", std::ios::app);
    out << "extra\n";
  }
  CHECK_THROWS_AS(load_checkpoint(dir), Error);

  save_checkpoint(dir, ck);
  fs::resize_file(dir / "tensors.bin", fs::file_size(dir / "tensors.bin") - 4);
  CHECK_THROWS_AS(load_checkpoint(dir), Error);
  fs::remove_all(dir);
}

namespace {

testutil::MtbData separable_data() {
  SynthConfig sc;
  sc.num_relations = 6;
  sc.entities = 300;
  sc.docs = 1500;
  sc.seed = 11;
  SynthWorld world(sc);
  PairGenConfig pc;
  pc.max_pairs = 20000;
  pc.seed = 1;
  return testutil::mtb_data(world, pc);
}

}  // namespace

TEST_CASE("MTB loss halves on templated data (median over 5 seeds)") {
  auto data = separable_data();
  std::vector<double> ratios;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Encoder<float> model(testutil::encoder_for(data.vocab, 1, 32, 2, 48, seed));
    TrainConfig tc;
    tc.steps = 300;
    tc.batch_size = 32;
    tc.lambda_mlm = 0.0;
    tc.log_every = 50;
    tc.seed = seed;
    auto r = pretrain_mtb(model, data.pairs, tc);
    ratios.push_back(r.log.back().mtb_loss / r.first_loss);
  }
  std::sort(ratios.begin(), ratios.end());
  CHECK(ratios[2] < 0.5);
}

TEST_CASE("2000 steps of batch 64 bring the MTB loss below ln 2") {
  auto data = separable_data();
  Encoder<float> model(testutil::encoder_for(data.vocab, 1, 32, 2, 48, 1));
  TrainConfig tc;
  tc.steps = 2000;
  tc.batch_size = 64;
  tc.lambda_mlm = 0.0;
  tc.log_every = 100;
  tc.seed = 1;
  auto r = pretrain_mtb(model, data.pairs, tc);
  MESSAGE("first loss " << r.first_loss << ", last interval " << r.log.back().mtb_loss);
  CHECK(r.log.back().mtb_loss < std::log(2.0));
}
