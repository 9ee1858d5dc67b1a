#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "mtb/corpus.hpp"
#include "oracles.hpp"

using namespace mtb;
using namespace testutil;

namespace {

RelationStatement stmt(const std::string& e1, const std::string& e2, int tag) {
  RelationStatement s;
  s.x = {reserved::kCls, 10, 11, 12, reserved::kSep};
  s.s1 = {1, 2};
  s.s2 = {2, 3};
  s.e1 = e1;
  s.e2 = e2;
  s.source = {"doc", tag};
  return s;
}

}  // namespace

TEST_CASE("short document yields one statement shifted by [CLS]") {
  auto doc = make_doc(10, {{1, 2, "A"}, {5, 6, "B"}});
  auto v = vocab_for(doc);
  auto sts = extract_statements(doc, v, 40);
  REQUIRE(sts.size() == 1);
  const auto& st = sts[0];
  CHECK(st.s1 == Span{2, 3});
  CHECK(st.s2 == Span{6, 7});
  REQUIRE(st.x.size() == 12);
  CHECK(st.x.front() == reserved::kCls);
  CHECK(st.x.back() == reserved::kSep);
  for (int i = 0; i < 10; ++i) CHECK(st.x[i + 1] == v.id_of("t" + std::to_string(i)));
  CHECK(st.e1 == "A");
  CHECK(st.e2 == "B");
  CHECK(st.source.window_offset == 0);
  CHECK_NOTHROW(validate_statement(st));
}

TEST_CASE("mentions 50 tokens apart do not fit a 40-token window") {
  auto doc = make_doc(80, {{2, 3, "A"}, {52, 53, "B"}});
  CHECK(extract_statements(doc, vocab_for(doc), 40).empty());
}

TEST_CASE("three mentions within the window give three ordered statements") {
  auto doc = make_doc(30, {{3, 4, "A"}, {10, 12, "B"}, {20, 21, "C"}});
  auto sts = extract_statements(doc, vocab_for(doc), 40);
  REQUIRE(sts.size() == 3);
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& st : sts) got.insert({st.e1, st.e2});
  CHECK(got == std::set<std::pair<std::string, std::string>>{{"A", "B"}, {"A", "C"}, {"B", "C"}});
  CHECK(extracted_pairs(sts) == oracle_pairs(doc, 40));
}

TEST_CASE("overlapping mentions are skipped, identical entities kept") {
  auto doc = make_doc(12, {{1, 4, "A"}, {2, 3, "B"}, {6, 7, "A"}});
  auto sts = extract_statements(doc, vocab_for(doc), 40);
  REQUIRE(sts.size() == 2);
  for (const auto& st : sts) CHECK(st.e2 == "A");
}

TEST_CASE("window is centered on the pair and clipped to the document") {
  auto doc = make_doc(100, {{40, 41, "A"}, {50, 51, "B"}, {60, 62, "C"}, {95, 96, "D"}, {98, 99, "E"}});
  auto sts = extract_statements(doc, vocab_for(doc), 20);
  REQUIRE(sts.size() == 3);
  // [40, 51) -> window [35, 55)
  CHECK(sts[0].e1 == "A");
  CHECK(sts[0].source.window_offset == 35);
  CHECK(sts[0].x.size() == 22);
  CHECK(sts[0].s1 == Span{6, 7});
  CHECK(sts[0].s2 == Span{16, 17});
  // [50, 62) -> window [46, 66)
  CHECK(sts[1].e1 == "B");
  CHECK(sts[1].source.window_offset == 46);
  // [95, 99) would start at 87; clipped to the last 20 tokens
  CHECK(sts[2].e1 == "D");
  CHECK(sts[2].source.window_offset == 80);
  CHECK(sts[2].s2 == Span{19, 20});
}

TEST_CASE("window content spans fewer than window positions") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto doc = random_doc(rng, 12);
    const int window = 2 + static_cast<int>(rng() % 50);
    for (const auto& st : extract_statements(doc, vocab_for(doc), window)) {
      const int width = static_cast<int>(st.x.size()) - 2;
      CHECK(width - 1 < window);
      CHECK(st.source.window_offset >= 0);
      CHECK(st.source.window_offset + width <= static_cast<int>(doc.tokens.size()));
    }
  }
}

TEST_CASE("extract_statements matches a brute-force oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    auto doc = random_doc(rng, 20);
    auto v = vocab_for(doc);
    const int window = 2 + static_cast<int>(rng() % 60);
    auto sts = extract_statements(doc, v, window);
    CHECK(extracted_pairs(sts) == oracle_pairs(doc, window));
    auto ids = v.encode(doc.tokens);
    for (const auto& st : sts) {
      CHECK_NOTHROW(validate_statement(st));
      const int off = st.source.window_offset;
      const int width = static_cast<int>(st.x.size()) - 2;
      CHECK(width == std::min<int>(window, static_cast<int>(doc.tokens.size())));
      CHECK(std::equal(st.x.begin() + 1, st.x.end() - 1, ids.begin() + off));
    }
    for (std::size_t i = 1; i < sts.size(); ++i) {
      CHECK(std::tie(sts[i - 1].source.window_offset, sts[i - 1].s1.start, sts[i - 1].s2.start) <=
            std::tie(sts[i].source.window_offset, sts[i].s1.start, sts[i].s2.start));
    }
  }
}

TEST_CASE("extract_corpus order is independent of thread count") {
  std::mt19937_64 rng(23);
  std::vector<Document> docs;
  for (int d = 0; d < 30; ++d) {
    auto doc = random_doc(rng, 10);
    doc.doc_id = "doc" + std::to_string((d * 7) % 30);
    docs.push_back(doc);
  }
  auto v = Vocabulary::build(corpus_tokens(docs), 1);
  auto one = extract_corpus(docs, v, 30, 1);
  auto four = extract_corpus(docs, v, 30, 4);
  REQUIRE(one.size() == four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].x == four[i].x);
    CHECK(one[i].source == four[i].source);
    CHECK(one[i].s1 == four[i].s1);
    CHECK(one[i].s2 == four[i].s2);
  }
  for (std::size_t i = 1; i < one.size(); ++i) CHECK(one[i - 1].source.doc_id <= one[i].source.doc_id);
}

TEST_CASE("document and statement validation") {
  CHECK_THROWS_AS(validate_document(make_doc(5, {{3, 6, "A"}})), Error);
  CHECK_THROWS_AS(validate_document(make_doc(5, {{2, 2, "A"}})), Error);
  CHECK_THROWS_AS(validate_document(make_doc(5, {{3, 4, "A"}, {1, 2, "B"}})), Error);
  auto doc = make_doc(5, {{1, 2, "A"}});
  CHECK_THROWS_AS(extract_statements(doc, vocab_for(doc), 1), Error);

  auto st = stmt("A", "B", 0);
  CHECK_NOTHROW(validate_statement(st));
  st.s1 = {0, 1};
  CHECK_THROWS_AS(validate_statement(st), Error);
  st = stmt("A", "B", 0);
  st.s2 = {3, 5};
  CHECK_THROWS_AS(validate_statement(st), Error);
}

TEST_CASE("cap_by_entity keeps exactly cap statements of a shared entity") {
  std::vector<RelationStatement> sts;
  for (int i = 0; i < 5; ++i) sts.push_back(stmt("A", "X" + std::to_string(i), i));
  auto kept = cap_by_entity(sts, 2, 9);
  CHECK(kept.size() == 2);
}

TEST_CASE("cap_by_entity with a large cap is the identity") {
  std::vector<RelationStatement> sts;
  for (int i = 0; i < 6; ++i) sts.push_back(stmt("E" + std::to_string(i % 3), "F" + std::to_string(i % 2), i));
  auto kept = cap_by_entity(sts, 100, 1);
  REQUIRE(kept.size() == sts.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].source == sts[i].source);
}

TEST_CASE("cap_by_entity bounds, order and determinism") {
  std::mt19937_64 rng(31);
  std::vector<RelationStatement> sts;
  for (int i = 0; i < 400; ++i)
    sts.push_back(stmt("E" + std::to_string(rng() % 12), "E" + std::to_string(rng() % 12), i));
  for (int cap : {1, 3, 10}) {
    auto a = cap_by_entity(sts, cap, 77);
    auto b = cap_by_entity(sts, cap, 77);
    REQUIRE(a.size() == b.size());
    std::map<std::string, int> count;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].source == b[i].source);
      if (i) CHECK(a[i - 1].source.window_offset < a[i].source.window_offset);
      ++count[a[i].e1];
      if (a[i].e2 != a[i].e1) ++count[a[i].e2];
    }
    for (const auto& [e, c] : count) CHECK(c <= cap);
  }
  CHECK_THROWS_AS(cap_by_entity(sts, 0, 1), Error);
}
