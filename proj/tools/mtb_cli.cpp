#include <CLI11.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "mtb/checkpoint.hpp"
#include "mtb/corpus.hpp"
#include "mtb/evaluation.hpp"
#include "mtb/io.hpp"
#include "mtb/pairgen.hpp"
#include "mtb/synth.hpp"
#include "mtb/training.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mtb;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("MTB_DATA_DIR");
  return env && *env ? env : "data";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class N>
N to_number(const std::string& text, const std::string& key) {
  N v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw Error("invalid value for " + key + ": '" + text + "'");
  return v;
}

// Config files hold TrainConfig keys plus `encoder.*` keys for the model shape.
struct RunConfig {
  TrainConfig train;
  EncoderConfig encoder;
};

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::istringstream in(text);
  std::string line, train_text;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = line.substr(0, line.find('#'));
    const auto eq = body.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(body.substr(0, eq));
    if (key.rfind("encoder.", 0) != 0) {
      // Keep line numbering intact for TrainConfig errors.
      train_text += line + "\n";
      continue;
    }
    train_text += "\n";
    const std::string field = key.substr(8);
    const std::string value = trim(body.substr(eq + 1));
    try {
      EncoderConfig& e = rc.encoder;
      if (field == "layers") e.layers = to_number<int>(value, key);
      else if (field == "hidden") e.hidden = to_number<int>(value, key);
      else if (field == "heads") e.heads = to_number<int>(value, key);
      else if (field == "ffn_mult") e.ffn_mult = to_number<int>(value, key);
      else if (field == "max_len") e.max_len = to_number<int>(value, key);
      else if (field == "input_variant") e.input_variant = input_variant_from_string(value);
      else if (field == "output_variant") e.output_variant = output_variant_from_string(value);
      else if (field == "post_layer") e.post_layer = post_layer_from_string(value);
      else if (field == "seed") e.seed = to_number<std::uint64_t>(value, key);
      else if (field == "init_std") e.init_std = to_number<double>(value, key);
      else throw Error("unknown key '" + key + "'");
    } catch (const Error& err) {
      throw Error("config line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  rc.train = TrainConfig::parse(train_text);
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_run_config(read_file(path));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<LabeledRecord> read_all_labeled(const std::vector<std::string>& paths) {
  std::vector<LabeledRecord> out;
  for (const auto& p : paths) {
    auto part = read_labeled_records(p);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<std::string> names_from_records(const std::vector<LabeledRecord>& records) {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.relation);
  return {names.begin(), names.end()};
}

std::vector<std::string> resolve_relations(const std::string& relations_path, const Checkpoint* ck,
                                           const std::vector<LabeledRecord>& records) {
  if (!relations_path.empty()) return read_relations(relations_path);
  if (ck && !ck->relation_names.empty()) return ck->relation_names;
  return names_from_records(records);
}

std::optional<int> nil_of(const std::vector<std::string>& names, const std::string& nil) {
  if (nil.empty()) return std::nullopt;
  auto it = std::find(names.begin(), names.end(), nil);
  if (it == names.end()) return std::nullopt;
  return static_cast<int>(it - names.begin());
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig cfg;
  std::string out = default_data_dir();
  int labeled_per_relation = 40;
  int supervised_train = 2000;
  int supervised_test = 1000;
  double nil_fraction = 0.2;
};

void run_synth(const SynthArgs& a) {
  const SynthWorld world(a.cfg);
  const SynthCorpus corpus = synth_corpus(world);
  const fs::path out(a.out);
  write_documents(out / "documents.jsonl", corpus.docs);
  write_gold(out / "gold.jsonl", corpus.gold);
  write_relations(out / "relations.json", world.relation_names());

  std::vector<int> all(static_cast<std::size_t>(a.cfg.num_relations));
  std::iota(all.begin(), all.end(), 0);
  write_labeled_records(out / "fewshot.jsonl",
                        synth_labeled(world, all, a.labeled_per_relation, mix_seed(a.cfg.seed, 10)));

  auto names = world.relation_names();
  names.push_back(kNoRelation);
  write_relations(out / "relations_supervised.json", names);
  write_labeled_records(out / "supervised_train.jsonl",
                        synth_two_clause(world, a.supervised_train, a.nil_fraction, mix_seed(a.cfg.seed, 11)));
  write_labeled_records(out / "supervised_test.jsonl",
                        synth_two_clause(world, a.supervised_test, a.nil_fraction, mix_seed(a.cfg.seed, 12)));
  log_line("synth: " + std::to_string(corpus.docs.size()) + " documents, " + std::to_string(corpus.facts.size()) +
           " facts -> " + out.string());
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string in, out, vocab;
  bool build_vocab = false;
  int min_count = 1;
  int window = 40;
  int threads = 1;
  int cap = 0;
  std::uint64_t seed = 0;
};

void run_extract(const ExtractArgs& a) {
  const auto docs = read_documents(a.in);
  Vocabulary vocab;
  if (a.build_vocab) {
    vocab = Vocabulary::build(corpus_tokens(docs), a.min_count);
    vocab.save(a.vocab);
  } else {
    vocab = Vocabulary::load(a.vocab);
  }
  auto statements = extract_corpus(docs, vocab, a.window, a.threads);
  if (a.cap > 0) statements = cap_by_entity(statements, a.cap, a.seed);
  write_statements(a.out, statements);
  log_line("extract: " + std::to_string(docs.size()) + " documents -> " + std::to_string(statements.size()) +
           " statements");
}

// ---------------------------------------------------------------- pairgen

struct PairgenArgs {
  PairGenConfig cfg;
  std::string in, out;
};

void run_pairgen(const PairgenArgs& a) {
  const auto statements = read_statements(a.in);
  const auto pairs = generate_pairs(statements, a.cfg);
  write_pairs(a.out, pairs);
  std::size_t pos = 0;
  for (const auto& p : pairs) pos += static_cast<std::size_t>(p.label);
  log_line("pairgen: " + std::to_string(pairs.size()) + " pairs (" + std::to_string(pos) + " positive)");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string mode, config, out, init, vocab, relations, nil = kNoRelation;
  std::vector<std::string> data;
  long steps = -1;
  std::int64_t seed = -1;
  int threads = 0;
};

Checkpoint initial_checkpoint(const std::string& init, const std::string& vocab_path, const EncoderConfig& enc) {
  if (!init.empty()) {
    Checkpoint ck = load_checkpoint(init);
    if (!vocab_path.empty()) check_vocab(ck, Vocabulary::load(vocab_path));
    return ck;
  }
  if (vocab_path.empty()) throw Error("a new model needs --vocab (or start from --init <checkpoint>)");
  Checkpoint ck;
  ck.vocab = Vocabulary::load(vocab_path);
  ck.config = enc;
  ck.config.vocab_size = static_cast<int>(ck.vocab.size());
  ck.params = Encoder<float>(ck.config).params();
  return ck;
}

void run_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  TrainConfig tc = rc.train;
  if (!a.mode.empty()) tc.mode = train_mode_from_string(a.mode);
  if (a.steps >= 0) tc.steps = static_cast<int>(a.steps);
  if (a.seed >= 0) tc.seed = static_cast<std::uint64_t>(a.seed);
  if (a.threads > 0) tc.threads = a.threads;
  tc.validate();

  Checkpoint ck = initial_checkpoint(a.init, a.vocab, rc.encoder);
  if (tc.mode != TrainMode::kMtbPretrain && a.init.empty()) {
    log_line("train: no --init checkpoint; fine-tuning a randomly initialized encoder");
  }
  Encoder<float> model(ck.config, std::move(ck.params));
  std::optional<ClassifierHead<float>> head;

  const fs::path out(a.out);
  fs::create_directories(out);
  std::ofstream metrics_file(out / "metrics.jsonl", std::ios::trunc);
  MetricsWriter metrics(metrics_file);
  write_file(out / "train_config.txt", tc.to_text());

  auto snapshot = [&](const fs::path& dir, long step) {
    Checkpoint c;
    c.config = model.config();
    c.params = model.params();
    c.vocab = ck.vocab;
    c.head = head;
    c.relation_names = ck.relation_names;
    c.step = ck.step + step;
    save_checkpoint(dir, c);
  };
  TrainHooks hooks;
  hooks.on_log = [&](const MetricsRecord& r) {
    metrics.write(r);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step %ld  loss %.5f  acc %.4f", r.step, r.loss, r.accuracy);
    log_line(buf);
  };
  hooks.on_checkpoint = [&](long step) {
    char name[32];
    std::snprintf(name, sizeof(name), "step-%07ld", step);
    snapshot(out / name, step);
  };

  TrainResult result;
  if (tc.mode == TrainMode::kMtbPretrain) {
    std::vector<StatementPair> pairs;
    for (const auto& p : a.data) {
      auto part = read_pairs(p);
      pairs.insert(pairs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    result = pretrain_mtb(model, pairs, tc, hooks);
  } else {
    const auto records = read_all_labeled(a.data);
    ck.relation_names = resolve_relations(a.relations, &ck, records);
    const LabeledSet set = to_labeled_set(records, ck.vocab, ck.relation_names);
    if (tc.mode == TrainMode::kSupervisedFinetune) {
      head = ClassifierHead<float>::init(static_cast<int>(ck.relation_names.size()), model.config().rep_dim(),
                                         mix_seed(tc.seed, 0x4ead), nil_of(ck.relation_names, a.nil));
      result = finetune_supervised(model, *head, set.items, tc, hooks);
    } else {
      result = finetune_fewshot(model, set.items, tc, hooks);
    }
  }
  snapshot(out, result.steps);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "train: %ld steps, first loss %.5f, final loss %.5f", result.steps,
                result.first_loss, result.final_loss);
  log_line(buf);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, relations, types, out, nil = kNoRelation;
  std::vector<std::string> data;
  int n = 5, k = 1, threads = 1;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  std::string aggregation = "max";
  bool distinct_query_group = false;
};

void emit_report(const std::string& text, const std::string& json_text, const std::string& out) {
  std::cout << text;
  if (!out.empty()) write_file(out, json_text + "\n");
}

void run_eval_fewshot(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto records = read_all_labeled(a.data);
  const auto names = resolve_relations(a.relations, nullptr, records);
  const LabeledSet set = to_labeled_set(records, ck.vocab, names);
  std::vector<int> types;
  if (a.types.empty()) {
    types = relation_types(set.items);
  } else {
    for (const auto& t : split_list(a.types)) types.push_back(set.relation_id(t));
  }
  EpisodeOptions opts;
  opts.distinct_query_group = a.distinct_query_group;
  opts.relation_names = names;
  const auto episodes = build_episodes(set.items, types, a.n, a.k, a.episodes, a.seed, opts);
  const Encoder<float> model(ck.config, ck.params);
  const auto report =
      evaluate_fewshot(model, set.items, episodes, shot_aggregation_from_string(a.aggregation), a.threads);
  emit_report(render_report(report), report_json(report, names), a.out);
}

void run_eval_supervised(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  if (!ck.head) throw Error("checkpoint has no classification head; fine-tune with --mode supervised_finetune first");
  const auto records = read_all_labeled(a.data);
  const auto names = resolve_relations(a.relations, &ck, records);
  if (static_cast<int>(names.size()) != ck.head->num_classes()) {
    throw Error("relation list has " + std::to_string(names.size()) + " entries, head has " +
                std::to_string(ck.head->num_classes()) + " classes");
  }
  const LabeledSet set = to_labeled_set(records, ck.vocab, names);
  const Encoder<float> model(ck.config, ck.params);
  const auto report = evaluate_supervised(model, *ck.head, set.items, a.threads);
  emit_report(render_report(report, names), report_json(report, names), a.out);
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string init, vocab, config, relations, grid = "examples_per_type", values = "0,1,5,10",
                                               protocol = "supervised", out, nil = kNoRelation, types;
  std::vector<std::string> train, eval;
  int n = 5, k = 1;
  std::size_t episodes = 1000;
  std::string aggregation = "max";
  bool distinct_query_group = false;
  std::uint64_t seed = 0;
};

void run_sweep(const SweepArgs& a) {
  const RunConfig rc = load_run_config(a.config);
  const Checkpoint base = initial_checkpoint(a.init, a.vocab, rc.encoder);
  const auto train_records = read_all_labeled(a.train);
  const auto eval_records = read_all_labeled(a.eval);
  auto all_records = train_records;
  all_records.insert(all_records.end(), eval_records.begin(), eval_records.end());
  const auto names = resolve_relations(a.relations, nullptr, all_records);
  const LabeledSet train = to_labeled_set(train_records, base.vocab, names);
  LabeledSet eval = to_labeled_set(eval_records, base.vocab, names);

  SweepConfig sc;
  sc.grid = grid_kind_from_string(a.grid);
  for (const auto& v : split_list(a.values)) sc.values.push_back(to_number<double>(v, "--values"));
  sc.protocol = sweep_protocol_from_string(a.protocol);
  sc.finetune = rc.train;
  sc.num_relations = static_cast<int>(names.size());
  sc.nil_index = nil_of(names, a.nil);
  sc.n_way = a.n;
  sc.k_shot = a.k;
  sc.episodes = a.episodes;
  sc.aggregation = shot_aggregation_from_string(a.aggregation);
  sc.distinct_query_group = a.distinct_query_group;
  sc.seed = a.seed;

  auto factory = [&] { return Encoder<float>(base.config, base.params); };
  const auto rows = ablation_sweep(factory, train.items, sc, eval.items, [](const std::string& w) {
    std::cerr << json{{"warning", w}}.dump() << '\n';
  });
  std::cout << render_table(rows);
  if (!a.out.empty()) write_sweep(a.out, rows);
}

// ---------------------------------------------------------------- plot

struct PlotArgs {
  std::vector<std::string> metrics, sweep;
  std::string out;
  bool log_x = false;
};

void run_plot(const PlotArgs& a) {
  if (a.metrics.empty() == a.sweep.empty()) throw Error("plot needs either --metrics or --sweep files");
  std::ostringstream csv;
  std::vector<plot::Series> series;
  std::string svg;
  if (!a.metrics.empty()) {
    csv << "file,step,loss,mtb_loss,mlm_loss,task_loss,accuracy,lr\n";
    for (const auto& f : a.metrics) {
      plot::Series s{fs::path(f).parent_path().filename().string(), {}, {}};
      if (s.name.empty()) s.name = fs::path(f).stem().string();
      for (const auto& r : read_metrics(f)) {
        csv << f << ',' << r.step << ',' << r.loss << ',' << r.mtb_loss << ',' << r.mlm_loss << ',' << r.task_loss
            << ',' << r.accuracy << ',' << r.lr << '\n';
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(r.loss);
      }
      series.push_back(std::move(s));
    }
    svg = plot::line_chart("Training loss", "step", "loss", series);
  } else {
    csv << "file,grid_value,train_examples,zero_shot,accuracy,f1\n";
    for (const auto& f : a.sweep) {
      plot::Series s{fs::path(f).stem().string(), {}, {}};
      for (const auto& r : read_sweep(f)) {
        csv << f << ',' << r.grid_value << ',' << r.train_examples << ',' << (r.zero_shot ? 1 : 0) << ','
            << r.accuracy << ',' << r.f1 << '\n';
        s.x.push_back(r.grid_value);
        s.y.push_back(r.accuracy);
      }
      series.push_back(std::move(s));
    }
    svg = plot::line_chart("Accuracy vs. annotated data", "grid value", "accuracy", series, a.log_x);
  }
  write_file(a.out + ".csv", csv.str());
  write_file(a.out + ".svg", svg);
  log_line("plot: wrote " + a.out + ".csv and " + a.out + ".svg");
}

int fail(const std::string& kind, const std::string& message, std::optional<long> line = {},
         std::optional<long> step = {}) {
  json err{{"error", kind}, {"message", message}};
  if (line) err["line"] = *line;
  if (step) err["step"] = *step;
  std::cerr << err.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matching-the-blanks relation representation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a templated synthetic corpus and labeled sets");
  s->add_option("--relations", synth.cfg.num_relations, "Number of relation types")->capture_default_str();
  s->add_option("--templates", synth.cfg.templates_per_relation, "Templates per relation")->capture_default_str();
  s->add_option("--entities", synth.cfg.entities, "Entity pool size")->capture_default_str();
  s->add_option("--docs", synth.cfg.docs, "Number of documents")->capture_default_str();
  s->add_option("--max-sentences", synth.cfg.max_sentences_per_doc, "Sentences per document (max)")
      ->capture_default_str();
  s->add_option("--min-mentions", synth.cfg.min_mentions_per_fact, "Mentions per fact (min)")->capture_default_str();
  s->add_option("--max-mentions", synth.cfg.max_mentions_per_fact, "Mentions per fact (max)")->capture_default_str();
  s->add_option("--filler-prob", synth.cfg.filler_prob, "Filler-word probability")->capture_default_str();
  s->add_flag("--uniform-shape", synth.cfg.uniform_shape, "Give every template the same word counts");
  s->add_option("--labeled-per-relation", synth.labeled_per_relation, "Few-shot labeled statements per relation")
      ->capture_default_str();
  s->add_option("--supervised-train", synth.supervised_train, "Two-clause training examples")->capture_default_str();
  s->add_option("--supervised-test", synth.supervised_test, "Two-clause test examples")->capture_default_str();
  s->add_option("--nil-fraction", synth.nil_fraction, "Share of no_relation examples")->capture_default_str();
  s->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory (default $MTB_DATA_DIR or ./data)");

  ExtractArgs extract;
  auto* e = app.add_subcommand("extract", "Extract relation statements from documents");
  e->add_option("--in", extract.in, "Document JSONL")->required();
  e->add_option("--out", extract.out, "Statement JSONL")->required();
  e->add_option("--vocab", extract.vocab, "Vocabulary file")->required();
  e->add_flag("--build-vocab", extract.build_vocab, "Build the vocabulary from the documents and write it");
  e->add_option("--min-count", extract.min_count, "Minimum token count when building")->capture_default_str();
  e->add_option("--window", extract.window, "Window length in tokens")->capture_default_str();
  e->add_option("--threads", extract.threads, "Worker threads")->capture_default_str();
  e->add_option("--cap-per-entity", extract.cap, "Keep at most this many statements per entity (0 = all)");
  e->add_option("--seed", extract.seed, "Seed for entity capping")->capture_default_str();

  PairgenArgs pairgen;
  auto* p = app.add_subcommand("pairgen", "Sample blanked statement pairs for MTB training");
  p->add_option("--in", pairgen.in, "Statement JSONL")->required();
  p->add_option("--out", pairgen.out, "Pair JSONL")->required();
  p->add_option("--alpha", pairgen.cfg.alpha, "Probability a mention is kept")->capture_default_str();
  p->add_option("--pos-fraction", pairgen.cfg.pos_fraction, "Share of positive pairs")->capture_default_str();
  p->add_option("--hard-fraction", pairgen.cfg.hard_fraction, "Share of negatives that are hard")
      ->capture_default_str();
  p->add_option("--seed", pairgen.cfg.seed, "Random seed")->capture_default_str();
  p->add_option("--max-pairs", pairgen.cfg.max_pairs, "Number of pairs")->required();
  p->add_flag("--exclude-same-doc", pairgen.cfg.exclude_same_doc, "Skip positives drawn from one document");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Pretrain with MTB or fine-tune an encoder");
  t->add_option("--mode", train.mode, "mtb_pretrain | supervised_finetune | fewshot_finetune (overrides config)");
  t->add_option("--config", train.config, "key = value config file");
  t->add_option("--data", train.data, "Pair JSONL (pretraining) or labeled JSONL (fine-tuning)")->required();
  t->add_option("--out", train.out, "Checkpoint directory")->required();
  t->add_option("--init", train.init, "Start from this checkpoint");
  t->add_option("--vocab", train.vocab, "Vocabulary for a new model");
  t->add_option("--relations", train.relations, "Relation list file");
  t->add_option("--nil", train.nil, "Relation name treated as no-relation")->capture_default_str();
  t->add_option("--steps", train.steps, "Override steps");
  t->add_option("--seed", train.seed, "Override seed");
  t->add_option("--threads", train.threads, "Override threads");

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->require_subcommand(1);
  auto add_eval_common = [&](CLI::App* c) {
    c->add_option("--ckpt", eval.ckpt, "Checkpoint directory")->required();
    c->add_option("--data", eval.data, "Labeled JSONL")->required();
    c->add_option("--relations", eval.relations, "Relation list file");
    c->add_option("--threads", eval.threads, "Worker threads")->capture_default_str();
    c->add_option("--out", eval.out, "Write the JSON report here");
  };
  auto* few = ev->add_subcommand("fewshot", "N-way K-shot evaluation by dot-product ranking");
  add_eval_common(few);
  few->add_option("--types", eval.types, "Comma-separated relation names to draw episodes from (default all)");
  few->add_option("-n,--n-way", eval.n, "Classes per episode")->capture_default_str();
  few->add_option("-k,--k-shot", eval.k, "Supports per class")->capture_default_str();
  few->add_option("--episodes", eval.episodes, "Number of episodes")->capture_default_str();
  few->add_option("--seed", eval.seed, "Episode seed")->capture_default_str();
  few->add_option("--aggregation", eval.aggregation, "max | mean over supports")->capture_default_str();
  few->add_flag("--distinct-query-group", eval.distinct_query_group,
                "Queries never share a template group with their class supports");
  auto* sup = ev->add_subcommand("supervised", "Classification metrics with a fine-tuned head");
  add_eval_common(sup);

  SweepArgs sweep;
  auto* sw = app.add_subcommand("sweep", "Fine-tune on subsampled training data and evaluate each grid point");
  sw->add_option("--init", sweep.init, "Encoder checkpoint to fine-tune");
  sw->add_option("--vocab", sweep.vocab, "Vocabulary for a fresh encoder when --init is absent");
  sw->add_option("--config", sweep.config, "Fine-tuning config file");
  sw->add_option("--train", sweep.train, "Labeled training JSONL")->required();
  sw->add_option("--eval", sweep.eval, "Labeled evaluation JSONL")->required();
  sw->add_option("--relations", sweep.relations, "Relation list file");
  sw->add_option("--grid", sweep.grid, "examples_per_type | types_count | fraction")->capture_default_str();
  sw->add_option("--values", sweep.values, "Comma-separated grid values")->capture_default_str();
  sw->add_option("--protocol", sweep.protocol, "supervised | fewshot")->capture_default_str();
  sw->add_option("--nil", sweep.nil, "Relation name treated as no-relation")->capture_default_str();
  sw->add_option("-n,--n-way", sweep.n, "Few-shot classes per episode")->capture_default_str();
  sw->add_option("-k,--k-shot", sweep.k, "Few-shot supports per class")->capture_default_str();
  sw->add_option("--episodes", sweep.episodes, "Few-shot episodes")->capture_default_str();
  sw->add_option("--aggregation", sweep.aggregation, "max | mean")->capture_default_str();
  sw->add_flag("--distinct-query-group", sweep.distinct_query_group, "Template-disjoint queries");
  sw->add_option("--seed", sweep.seed, "Subsampling and episode seed")->capture_default_str();
  sw->add_option("--out", sweep.out, "Sweep table JSONL");

  PlotArgs plot_args;
  auto* pl = app.add_subcommand("plot", "Render metrics logs or sweep tables to CSV and SVG");
  pl->add_option("--metrics", plot_args.metrics, "Metrics JSONL files");
  pl->add_option("--sweep", plot_args.sweep, "Sweep JSONL files");
  pl->add_option("--out", plot_args.out, "Output prefix (writes .csv and .svg)")->required();
  pl->add_flag("--log-x", plot_args.log_x, "Logarithmic x axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    std::cerr << json{{"error", "usage"}, {"message", err.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*s) run_synth(synth);
    else if (*e) run_extract(extract);
    else if (*p) run_pairgen(pairgen);
    else if (*t) run_train(train);
    else if (*few) run_eval_fewshot(eval);
    else if (*sup) run_eval_supervised(eval);
    else if (*sw) run_sweep(sweep);
    else if (*pl) run_plot(plot_args);
  } catch (const FormatError& err) {
    return fail("format", err.what(), err.line());
  } catch (const TrainingError& err) {
    return fail("training", err.what(), std::nullopt, err.step());
  } catch (const Error& err) {
    return fail("error", err.what());
  } catch (const std::exception& err) {
    return fail("internal", err.what());
  }
  return 0;
}
