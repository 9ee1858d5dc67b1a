#include "mtb/io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace mtb {

using nlohmann::json;

namespace {

json header(const char* kind) { return json{{"format", kind}, {"version", kFormatVersion}}; }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void check_header(const json& j, const char* kind, const std::string& file, long line) {
  const auto& f = j.at("format");
  if (!f.is_string() || f.get<std::string>() != kind) {
    throw FormatError(file, line, "expected format '" + std::string(kind) + "', found " + f.dump());
  }
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kFormatVersion) {
    throw FormatError(file, line,
                      "unsupported " + std::string(kind) + " version " + (j.contains("version") ? j["version"].dump() : "(missing)"));
  }
}

/// Calls fn(record, line) for every non-blank line after the optional header.
template <class F>
void read_jsonl(const std::filesystem::path& path, const char* kind, F&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  const std::string file = path.string();
  std::string text;
  long line = 0;
  bool first = true;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(file, line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw FormatError(file, line, "expected a JSON object");
    if (first && j.contains("format")) {
      check_header(j, kind, file, line);
      first = false;
      continue;
    }
    first = false;
    try {
      fn(j, line);
    } catch (const json::exception& e) {
      throw FormatError(file, line, e.what());
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(file, line, e.what());
    }
  }
}

json span_json(Span s) { return json::array({s.start, s.end}); }

Span span_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("span must be [start, end]");
  return {j[0].get<int>(), j[1].get<int>()};
}

json statement_json(const RelationStatement& s) {
  return json{{"x", s.x},   {"s1", span_json(s.s1)},     {"s2", span_json(s.s2)},
              {"e1", s.e1}, {"e2", s.e2},                {"doc_id", s.source.doc_id},
              {"window_offset", s.source.window_offset}};
}

RelationStatement statement_from(const json& j) {
  RelationStatement s;
  s.x = j.at("x").get<std::vector<TokenId>>();
  s.s1 = span_from(j.at("s1"));
  s.s2 = span_from(j.at("s2"));
  s.e1 = j.at("e1").get<std::string>();
  s.e2 = j.at("e2").get<std::string>();
  s.source.doc_id = j.value("doc_id", "");
  s.source.window_offset = j.value("window_offset", 0);
  validate_statement(s);
  return s;
}

json blanked_json(const BlankedStatement& b) {
  return json{{"statement_id", b.statement_id},
              {"x", b.x},
              {"s1", span_json(b.s1)},
              {"s2", span_json(b.s2)},
              {"e1", b.e1},
              {"e2", b.e2},
              {"doc_id", b.doc_id},
              {"blank1", b.blank1},
              {"blank2", b.blank2}};
}

BlankedStatement blanked_from(const json& j) {
  BlankedStatement b;
  b.statement_id = j.value("statement_id", std::size_t{0});
  b.x = j.at("x").get<std::vector<TokenId>>();
  b.s1 = span_from(j.at("s1"));
  b.s2 = span_from(j.at("s2"));
  b.e1 = j.value("e1", "");
  b.e2 = j.value("e2", "");
  b.doc_id = j.value("doc_id", "");
  b.blank1 = j.value("blank1", false);
  b.blank2 = j.value("blank2", false);
  const int n = static_cast<int>(b.x.size());
  if (!(0 < b.s1.start && b.s1.start < b.s1.end && b.s1.end <= b.s2.start && b.s2.start < b.s2.end && b.s2.end < n)) {
    throw Error("spans out of range or out of order");
  }
  return b;
}

json metrics_json(const MetricsRecord& r) {
  return json{{"step", r.step},           {"loss", r.loss},         {"mtb_loss", r.mtb_loss},
              {"mlm_loss", r.mlm_loss},   {"task_loss", r.task_loss}, {"accuracy", r.accuracy},
              {"lr", r.lr}};
}

std::string name_of(const std::vector<std::string>& names, std::size_t i) {
  return i < names.size() ? names[i] : std::to_string(i);
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  auto out = open_out(path);
  out << contents;
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
  std::vector<Document> docs;
  read_jsonl(path, format::kDocuments, [&](const json& j, long) {
    Document d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& m : j.at("mentions")) {
      d.mentions.push_back({m.at("start").get<int>(), m.at("end").get<int>(), m.at("entity_id").get<std::string>()});
    }
    validate_document(d);
    docs.push_back(std::move(d));
  });
  return docs;
}

void write_documents(const std::filesystem::path& path, std::span<const Document> docs) {
  auto out = open_out(path);
  out << header(format::kDocuments).dump() << '\n';
  for (const auto& d : docs) {
    json mentions = json::array();
    for (const auto& m : d.mentions) mentions.push_back({{"start", m.start}, {"end", m.end}, {"entity_id", m.entity_id}});
    out << json{{"doc_id", d.doc_id}, {"tokens", d.tokens}, {"mentions", mentions}}.dump() << '\n';
  }
}

std::vector<RelationStatement> read_statements(const std::filesystem::path& path) {
  std::vector<RelationStatement> out;
  read_jsonl(path, format::kStatements, [&](const json& j, long) { out.push_back(statement_from(j)); });
  return out;
}

void write_statements(const std::filesystem::path& path, std::span<const RelationStatement> statements) {
  auto out = open_out(path);
  out << header(format::kStatements).dump() << '\n';
  for (const auto& s : statements) out << statement_json(s).dump() << '\n';
}

std::vector<StatementPair> read_pairs(const std::filesystem::path& path) {
  std::vector<StatementPair> out;
  read_jsonl(path, format::kPairs, [&](const json& j, long) {
    StatementPair p;
    p.a = blanked_from(j.at("a"));
    p.b = blanked_from(j.at("b"));
    p.label = j.at("label").get<int>();
    if (p.label != 0 && p.label != 1) throw Error("label must be 0 or 1");
    p.kind = pair_kind_from_string(j.at("kind").get<std::string>());
    out.push_back(std::move(p));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const StatementPair> pairs) {
  auto out = open_out(path);
  out << header(format::kPairs).dump() << '\n';
  for (const auto& p : pairs) {
    out << json{{"a", blanked_json(p.a)}, {"b", blanked_json(p.b)}, {"label", p.label}, {"kind", to_string(p.kind)}}
               .dump()
        << '\n';
  }
}

std::vector<LabeledRecord> read_labeled_records(const std::filesystem::path& path) {
  std::vector<LabeledRecord> out;
  read_jsonl(path, format::kLabeled, [&](const json& j, long) {
    LabeledRecord r;
    r.tokens = j.at("tokens").get<std::vector<std::string>>();
    r.s1 = span_from(j.at("s1"));
    r.s2 = span_from(j.at("s2"));
    r.relation = j.at("relation").get<std::string>();
    r.group = j.value("group", -1);
    r.e1 = j.value("e1", "");
    r.e2 = j.value("e2", "");
    const int n = static_cast<int>(r.tokens.size());
    if (!(0 <= r.s1.start && r.s1.start < r.s1.end && r.s1.end <= r.s2.start && r.s2.start < r.s2.end &&
          r.s2.end <= n)) {
      throw Error("spans must be ordered, non-empty, non-overlapping and inside tokens");
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_labeled_records(const std::filesystem::path& path, std::span<const LabeledRecord> records) {
  auto out = open_out(path);
  out << header(format::kLabeled).dump() << '\n';
  for (const auto& r : records) {
    json j{{"tokens", r.tokens}, {"s1", span_json(r.s1)}, {"s2", span_json(r.s2)}, {"relation", r.relation}};
    if (r.group >= 0) j["group"] = r.group;
    if (!r.e1.empty()) j["e1"] = r.e1;
    if (!r.e2.empty()) j["e2"] = r.e2;
    out << j.dump() << '\n';
  }
}

LabeledSet to_labeled_set(std::span<const LabeledRecord> records, const Vocabulary& vocab,
                          const std::vector<std::string>& relation_names) {
  LabeledSet set;
  set.relation_names = relation_names;
  set.items.reserve(records.size());
  for (const auto& r : records) {
    LabeledStatement ls;
    ls.statement.x.reserve(r.tokens.size() + 2);
    ls.statement.x.push_back(reserved::kCls);
    for (const auto& t : r.tokens) ls.statement.x.push_back(vocab.id_of(t));
    ls.statement.x.push_back(reserved::kSep);
    ls.statement.s1 = {r.s1.start + 1, r.s1.end + 1};
    ls.statement.s2 = {r.s2.start + 1, r.s2.end + 1};
    ls.statement.e1 = r.e1;
    ls.statement.e2 = r.e2;
    validate_statement(ls.statement);
    ls.relation = set.relation_id(r.relation);
    ls.group = r.group;
    set.items.push_back(std::move(ls));
  }
  return set;
}

std::vector<std::string> read_relations(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string(), 1, std::string("malformed JSON: ") + e.what());
  }
  try {
    check_header(j, format::kRelations, path.string(), 1);
    return j.at("relations").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string(), 1, e.what());
  }
}

void write_relations(const std::filesystem::path& path, const std::vector<std::string>& names) {
  json j = header(format::kRelations);
  j["relations"] = names;
  write_file(path, j.dump(2) + "\n");
}

MetricsWriter::MetricsWriter(std::ostream& out) : out_(out) { out_ << header(format::kMetrics).dump() << '\n'; }

void MetricsWriter::write(const MetricsRecord& record) { out_ << metrics_json(record).dump() << '\n' << std::flush; }

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::vector<MetricsRecord> out;
  read_jsonl(path, format::kMetrics, [&](const json& j, long) {
    MetricsRecord r;
    r.step = j.at("step").get<long>();
    r.loss = j.at("loss").get<double>();
    r.mtb_loss = j.value("mtb_loss", 0.0);
    r.mlm_loss = j.value("mlm_loss", 0.0);
    r.task_loss = j.value("task_loss", 0.0);
    r.accuracy = j.value("accuracy", 0.0);
    r.lr = j.value("lr", 0.0);
    out.push_back(r);
  });
  return out;
}

void write_metrics(const std::filesystem::path& path, std::span<const MetricsRecord> records) {
  auto out = open_out(path);
  MetricsWriter w(out);
  for (const auto& r : records) w.write(r);
}

std::vector<SweepRow> read_sweep(const std::filesystem::path& path) {
  std::vector<SweepRow> out;
  read_jsonl(path, format::kSweep, [&](const json& j, long) {
    SweepRow r;
    r.grid_value = j.at("grid_value").get<double>();
    r.train_examples = j.at("train_examples").get<std::size_t>();
    r.zero_shot = j.value("zero_shot", false);
    r.accuracy = j.at("accuracy").get<double>();
    r.f1 = j.value("f1", r.accuracy);
    out.push_back(r);
  });
  return out;
}

void write_sweep(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  auto out = open_out(path);
  out << header(format::kSweep).dump() << '\n';
  for (const auto& r : rows) {
    out << json{{"grid_value", r.grid_value},
                {"train_examples", r.train_examples},
                {"zero_shot", r.zero_shot},
                {"accuracy", r.accuracy},
                {"f1", r.f1}}
               .dump()
        << '\n';
  }
}

std::string report_json(const FewShotReport& r, const std::vector<std::string>& names) {
  json per_class = json::object();
  for (std::size_t c = 0; c < r.per_class_total.size(); ++c) {
    if (r.per_class_total[c] == 0) continue;
    per_class[name_of(names, c)] = {{"total", r.per_class_total[c]}, {"correct", r.per_class_correct[c]}};
  }
  json j = header(format::kReport);
  j["kind"] = "fewshot";
  j["n_way"] = r.n_way;
  j["k_shot"] = r.k_shot;
  j["aggregation"] = to_string(r.aggregation);
  j["episodes"] = r.episodes;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["ci95"] = {r.ci95.low, r.ci95.high};
  j["per_class"] = per_class;
  j["confusion"] = r.confusion;
  return j.dump(2);
}

std::string report_json(const SupervisedReport& r, const std::vector<std::string>& names) {
  json per_class = json::object();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    per_class[name_of(names, c)] = {{"support", s.support}, {"tp", s.tp},       {"fp", s.fp},
                                    {"fn", s.fn},           {"precision", s.precision}, {"recall", s.recall},
                                    {"f1", s.f1}};
  }
  json j = header(format::kReport);
  j["kind"] = "supervised";
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["nil"] = r.nil_index ? json(name_of(names, static_cast<std::size_t>(*r.nil_index))) : json(nullptr);
  j["per_class"] = per_class;
  j["confusion"] = r.confusion;
  return j.dump(2);
}

}  // namespace mtb
