#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avatar/trie.hpp"

using namespace avatar;

namespace {

DocidMap small_map() {
  DocidMap m;
  m.forward = {{0, 1}, {0, 2}, {1, 0}, {1, 1, 3}, {1, 1, 4}};
  for (int d = 0; d < static_cast<int>(m.forward.size()); ++d)
    m.reverse[DocidMap::key(m.forward[d])] = d;
  return m;
}

ModelConfig tiny_model_config(int vocab) {
  ModelConfig mc;
  mc.d = 16;
  mc.n_enc = 1;
  mc.n_dec = 1;
  mc.heads = 1;
  mc.d_ff = 32;
  mc.d_proj = 16;
  mc.query_vocab = vocab;
  mc.seed = 3;
  return mc;
}

}  // namespace

TEST_CASE("trie exposes children in ascending order with EOS at terminals") {
  PrefixTrie trie(small_map());
  CHECK(trie.n_docs() == 5);
  CHECK(trie.max_depth() == 3);

  CHECK(trie.allowed_tokens({}) == std::vector<int>{0, 1});
  CHECK(trie.allowed_tokens({0}) == std::vector<int>{1, 2});
  CHECK(trie.allowed_tokens({0, 1}) == std::vector<int>{kDocidEos});
  CHECK(trie.allowed_tokens({1}) == std::vector<int>{0, 1});
  CHECK(trie.allowed_tokens({1, 1}) == std::vector<int>{3, 4});
  CHECK(trie.allowed_tokens({1, 1, 3}) == std::vector<int>{kDocidEos});
  CHECK(trie.allowed_tokens({9}).empty());

  CHECK(trie.terminal_doc({0, 1}) == 0);
  CHECK(trie.terminal_doc({1, 0}) == 2);
  CHECK(trie.terminal_doc({1, 1, 4}) == 4);
  CHECK(trie.terminal_doc({1}) == -1);
  CHECK(trie.terminal_doc({7, 7}) == -1);
}

TEST_CASE("every docid is a complete root-to-terminal path") {
  DocidMap m = small_map();
  PrefixTrie trie(m);
  for (int d = 0; d < m.size(); ++d) {
    const auto& id = m.forward[d];
    std::vector<int> prefix;
    for (int tok : id) {
      auto allowed = trie.allowed_tokens(prefix);
      CHECK(std::find(allowed.begin(), allowed.end(), tok) != allowed.end());
      prefix.push_back(tok);
    }
    auto allowed = trie.allowed_tokens(prefix);
    CHECK(std::find(allowed.begin(), allowed.end(), kDocidEos) != allowed.end());
    CHECK(trie.terminal_doc(prefix) == d);
  }
}

TEST_CASE("duplicate docids are rejected") {
  DocidMap m;
  m.forward = {{1, 2}, {1, 2}};
  m.reverse[DocidMap::key({1, 2})] = 0;
  CHECK_THROWS(PrefixTrie(m));
}

TEST_CASE("beam search emits only valid docids and sorts by score") {
  DocidMap m = small_map();
  PrefixTrie trie(m);
  Seq2SeqModel model(tiny_model_config(20));
  std::vector<int> query = {5, 6, 7, 8};
  auto results = constrained_beam_search(model, query, trie, 8, 5);
  REQUIRE(!results.empty());
  CHECK(results.size() <= 5);
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    auto it = m.reverse.find(DocidMap::key(r.docid));
    REQUIRE(it != m.reverse.end());
    CHECK(it->second == r.doc);
    CHECK(r.score == doctest::Approx(std::exp(r.log_score)).epsilon(1e-12));
    if (i > 0) CHECK(results[i - 1].log_score >= r.log_score - 1e-12);
  }
  // no duplicates
  for (size_t i = 0; i < results.size(); ++i)
    for (size_t j = i + 1; j < results.size(); ++j) CHECK(results[i].doc != results[j].doc);
}

TEST_CASE("beam scores equal teacher-forced docid scores") {
  DocidMap m = small_map();
  PrefixTrie trie(m);
  Seq2SeqModel model(tiny_model_config(20));
  std::vector<int> query = {4, 9, 11};
  auto results = constrained_beam_search(model, query, trie, 16, 5);
  for (const auto& r : results) {
    double s = score_docid(model, query, m.forward[r.doc]);
    CHECK(std::fabs(r.score - s) < 1e-12);
  }
}

TEST_CASE("wide beam enumerates the whole corpus exactly") {
  DocidMap m = small_map();
  PrefixTrie trie(m);
  Seq2SeqModel model(tiny_model_config(20));
  std::vector<int> query = {3, 14, 2, 6};
  auto results = constrained_beam_search(model, query, trie, 16, 16);
  REQUIRE(results.size() == 5);
  // brute force all docids
  std::vector<std::pair<double, int>> brute;
  for (int d = 0; d < m.size(); ++d)
    brute.push_back({score_docid(model, query, m.forward[d]), d});
  std::sort(brute.begin(), brute.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return m.forward[a.second] < m.forward[b.second];
  });
  for (size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].doc == brute[i].second);
    CHECK(std::fabs(results[i].score - brute[i].first) < 1e-9);
  }
}
