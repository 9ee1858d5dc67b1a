#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtb/corpus.hpp"
#include "mtb/episodes.hpp"
#include "mtb/evaluation.hpp"
#include "mtb/pairgen.hpp"
#include "mtb/training.hpp"

namespace mtb {

/// Every JSON-lines file may start with a header line
/// {"format": "<kind>", "version": 1}. Writers always emit it; readers accept
/// headerless input but reject a header of another kind or version.
inline constexpr int kFormatVersion = 1;

namespace format {
inline constexpr const char* kDocuments = "mtb.documents";
inline constexpr const char* kStatements = "mtb.statements";
inline constexpr const char* kPairs = "mtb.pairs";
inline constexpr const char* kLabeled = "mtb.labeled";
inline constexpr const char* kRelations = "mtb.relations";
inline constexpr const char* kMetrics = "mtb.metrics";
inline constexpr const char* kSweep = "mtb.sweep";
inline constexpr const char* kReport = "mtb.report";
}  // namespace format

/// Parse failure in a data file; the message includes file and line number.
class FormatError : public Error {
 public:
  FormatError(const std::string& file, long line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

std::vector<Document> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, std::span<const Document> docs);

std::vector<RelationStatement> read_statements(const std::filesystem::path& path);
void write_statements(const std::filesystem::path& path, std::span<const RelationStatement> statements);

std::vector<StatementPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const StatementPair> pairs);

/// Labeled statement with surface tokens. Spans index `tokens` (no [CLS]/[SEP]).
struct LabeledRecord {
  std::vector<std::string> tokens;
  Span s1;
  Span s2;
  std::string relation;
  int group = -1;
  std::string e1;
  std::string e2;
};

std::vector<LabeledRecord> read_labeled_records(const std::filesystem::path& path);
void write_labeled_records(const std::filesystem::path& path, std::span<const LabeledRecord> records);

/// Wraps tokens in [CLS]/[SEP], encodes with `vocab` and maps relation names
/// through `relation_names`; an unknown relation name is an error.
LabeledSet to_labeled_set(std::span<const LabeledRecord> records, const Vocabulary& vocab,
                          const std::vector<std::string>& relation_names);

/// Relation id = position in the list.
std::vector<std::string> read_relations(const std::filesystem::path& path);
void write_relations(const std::filesystem::path& path, const std::vector<std::string>& names);

/// Streaming metrics writer (header written on construction).
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& out);
  void write(const MetricsRecord& record);

 private:
  std::ostream& out_;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);
void write_metrics(const std::filesystem::path& path, std::span<const MetricsRecord> records);

std::vector<SweepRow> read_sweep(const std::filesystem::path& path);
void write_sweep(const std::filesystem::path& path, std::span<const SweepRow> rows);

std::string report_json(const FewShotReport& report, const std::vector<std::string>& relation_names = {});
std::string report_json(const SupervisedReport& report, const std::vector<std::string>& relation_names = {});

/// Reads a whole file; throws if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace mtb
