#include "mtb/corpus.hpp"

#include <algorithm>
#include <numeric>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace mtb {

void validate_document(const Document& doc) {
  const int n = static_cast<int>(doc.tokens.size());
  for (std::size_t m = 0; m < doc.mentions.size(); ++m) {
    const Mention& mention = doc.mentions[m];
    if (mention.start < 0 || mention.start >= mention.end || mention.end > n) {
      throw Error("document " + doc.doc_id + ": mention " + std::to_string(m) + " [" +
                  std::to_string(mention.start) + "," + std::to_string(mention.end) + ") out of bounds");
    }
    if (m > 0 && doc.mentions[m - 1].start > mention.start) {
      throw Error("document " + doc.doc_id + ": mentions not sorted by start");
    }
  }
}

void validate_statement(const RelationStatement& st) {
  const int n = st.sep_index();
  if (st.x.size() < 2 || st.x.front() != reserved::kCls || st.x.back() != reserved::kSep) {
    throw Error("statement must be wrapped in [CLS] ... [SEP]");
  }
  if (!(0 < st.s1.start && st.s1.start < st.s1.end && st.s1.end <= st.s2.start && st.s2.start < st.s2.end &&
        st.s2.end <= n)) {
    throw Error("statement spans violate 0 < i < j <= k < l <= n");
  }
}

namespace {

int floor_div2(int v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

}  // namespace

std::vector<RelationStatement> extract_statements(const Document& doc, const Vocabulary& vocab, int window) {
  if (window < 2) throw Error("window must be >= 2");
  validate_document(doc);

  const int n = static_cast<int>(doc.tokens.size());
  const std::vector<TokenId> ids = vocab.encode(doc.tokens);
  const auto& ms = doc.mentions;

  std::vector<RelationStatement> out;
  for (std::size_t a = 0; a < ms.size(); ++a) {
    for (std::size_t b = a + 1; b < ms.size(); ++b) {
      const Mention& first = ms[a];
      const Mention& second = ms[b];
      if (first.span().overlaps(second.span())) continue;
      const int lo = first.start;
      const int hi = second.end;
      if (hi - lo > window) continue;

      const int width = std::min(window, n);
      const int offset = std::clamp(floor_div2(lo + hi - width), 0, n - width);

      RelationStatement st;
      st.x.reserve(static_cast<std::size_t>(width) + 2);
      st.x.push_back(reserved::kCls);
      st.x.insert(st.x.end(), ids.begin() + offset, ids.begin() + offset + width);
      st.x.push_back(reserved::kSep);
      st.s1 = {first.start - offset + 1, first.end - offset + 1};
      st.s2 = {second.start - offset + 1, second.end - offset + 1};
      st.e1 = first.entity_id;
      st.e2 = second.entity_id;
      st.source = {doc.doc_id, offset};
      out.push_back(std::move(st));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const RelationStatement& l, const RelationStatement& r) {
    return std::tie(l.source.window_offset, l.s1.start, l.s2.start) <
           std::tie(r.source.window_offset, r.s1.start, r.s2.start);
  });
  return out;
}

std::vector<RelationStatement> extract_corpus(std::span<const Document> docs, const Vocabulary& vocab, int window,
                                              int threads) {
  std::vector<std::vector<RelationStatement>> per_doc(docs.size());
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, docs.size() ? docs.size() : 1);
  if (workers <= 1) {
    for (std::size_t d = 0; d < docs.size(); ++d) per_doc[d] = extract_statements(docs[d], vocab, window);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t d = w; d < docs.size(); d += workers) per_doc[d] = extract_statements(docs[d], vocab, window);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return docs[l].doc_id < docs[r].doc_id; });
  std::vector<RelationStatement> out;
  for (std::size_t d : order) {
    for (auto& st : per_doc[d]) out.push_back(std::move(st));
  }
  return out;
}

std::vector<RelationStatement> cap_by_entity(std::span<const RelationStatement> statements, int cap,
                                             std::uint64_t seed) {
  if (cap < 1) throw Error("cap must be >= 1");
  Rng rng(seed);
  std::vector<std::pair<std::uint64_t, std::size_t>> priority;
  priority.reserve(statements.size());
  for (std::size_t i = 0; i < statements.size(); ++i) priority.emplace_back(rng(), i);
  std::sort(priority.begin(), priority.end());

  std::unordered_map<std::string, int> used;
  std::vector<char> keep(statements.size(), 0);
  for (const auto& [key, i] : priority) {
    const auto& st = statements[i];
    const bool same = st.e1 == st.e2;
    if (used[st.e1] >= cap || (!same && used[st.e2] >= cap)) continue;
    ++used[st.e1];
    if (!same) ++used[st.e2];
    keep[i] = 1;
  }

  std::vector<RelationStatement> out;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    if (keep[i]) out.push_back(statements[i]);
  }
  return out;
}

std::vector<std::string> corpus_tokens(std::span<const Document> docs) {
  std::vector<std::string> all;
  for (const auto& doc : docs) all.insert(all.end(), doc.tokens.begin(), doc.tokens.end());
  return all;
}

}  // namespace mtb
