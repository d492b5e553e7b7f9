#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include "avatar/docid.hpp"

using namespace avatar;

namespace {

SyntheticData make_data(uint64_t seed, int n_docs) {
  return generate_synthetic_corpus(seed, n_docs, 2);
}

}  // namespace

TEST_CASE("document embeddings are L2-normalized and deterministic") {
  auto data = make_data(3, 25);
  DocidConfig cfg{64, 4, 8, 100};
  Tensor e1 = embed_documents(data.corpus, cfg);
  Tensor e2 = embed_documents(data.corpus, cfg);
  REQUIRE(e1.rows == 25);
  REQUIRE(e1.cols == 64);
  for (int i = 0; i < e1.size(); ++i) CHECK(e1.d[i] == e2.d[i]);
  for (int i = 0; i < e1.rows; ++i) {
    double n = 0.0;
    for (int j = 0; j < e1.cols; ++j) n += e1.at(i, j) * e1.at(i, j);
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("hierarchical clustering covers every document and respects leaf_cap") {
  auto data = make_data(5, 60);
  Tensor emb = embed_documents(data.corpus, DocidConfig{64, 3, 5, 100});
  auto tree = hierarchical_cluster(emb, 3, 5, 17);
  REQUIRE(tree);
  std::set<int> seen;
  std::function<void(const ClusterNode&)> visit = [&](const ClusterNode& n) {
    if (n.is_leaf()) {
      CHECK(static_cast<int>(n.members.size()) <= 5);
      for (int m : n.members) {
        CHECK(!seen.count(m));
        seen.insert(m);
      }
    } else {
      CHECK(n.children.size() >= 2);
      CHECK(n.children.size() <= 3);
      for (const auto& c : n.children) visit(*c);
    }
  };
  visit(*tree);
  CHECK(seen.size() == 60);
}

TEST_CASE("docids are unique, digit-valued, and reverse-consistent") {
  auto data = make_data(7, 80);
  DocidConfig cfg{64, 4, 8, 100};
  DocidMap map = build_docid_map(data.corpus, cfg, 23);
  REQUIRE(map.size() == 80);
  std::set<std::string> keys;
  for (int d = 0; d < map.size(); ++d) {
    const auto& id = map.forward[d];
    CHECK(!id.empty());
    for (int tok : id) {
      CHECK(tok >= 0);
      CHECK(tok < kDocidDigits);
    }
    std::string k = DocidMap::key(id);
    CHECK(!keys.count(k));
    keys.insert(k);
    auto it = map.reverse.find(k);
    REQUIRE(it != map.reverse.end());
    CHECK(it->second == d);
  }
  CHECK(map.reverse.size() == keys.size());
}

TEST_CASE("docids are prefix-free") {
  auto data = make_data(11, 50);
  DocidMap map = build_docid_map(data.corpus, DocidConfig{64, 3, 6, 100}, 29);
  for (int a = 0; a < map.size(); ++a)
    for (int b = 0; b < map.size(); ++b) {
      if (a == b) continue;
      const auto& x = map.forward[a];
      const auto& y = map.forward[b];
      if (x.size() > y.size()) continue;
      bool prefix = true;
      for (size_t i = 0; i < x.size(); ++i)
        if (x[i] != y[i]) {
          prefix = false;
          break;
        }
      CHECK((!prefix || x.size() == y.size()));
    }
}

TEST_CASE("similar documents share longer docid prefixes than dissimilar ones") {
  // Ten documents, two obvious groups of five with disjoint vocabulary.
  Corpus corpus;
  for (int i = 0; i < 10; ++i) {
    Document d;
    d.index = i;
    d.external_id = "d" + std::to_string(i);
    const char* a[] = {"kora", "mita", "pelo", "sani", "tuvo"};
    const char* b[] = {"brag", "dusk", "flin", "grot", "hive"};
    const char** w = i < 5 ? a : b;
    d.title = {w[i % 5]};
    for (int j = 0; j < 30; ++j) d.body.push_back(w[(i + j) % 5]);
    corpus.documents.push_back(d);
  }
  build_vocabulary(corpus, {});
  DocidMap map = build_docid_map(corpus, DocidConfig{64, 2, 5, 100}, 31);
  auto first = [&](int d) { return map.forward[d][0]; };
  // one group per top-level cluster
  for (int i = 1; i < 5; ++i) {
    CHECK(first(i) == first(0));
    CHECK(first(5 + i) == first(5));
  }
  CHECK(first(0) != first(5));
}

TEST_CASE("docid map is deterministic in the seed and round-trips through TSV") {
  auto data = make_data(13, 40);
  DocidConfig cfg{64, 4, 8, 100};
  DocidMap m1 = build_docid_map(data.corpus, cfg, 5);
  DocidMap m2 = build_docid_map(data.corpus, cfg, 5);
  REQUIRE(m1.size() == m2.size());
  for (int d = 0; d < m1.size(); ++d) CHECK(m1.forward[d] == m2.forward[d]);

  std::string path = "/tmp/avatar_test_docids.tsv";
  save_docid_map(m1, path);
  DocidMap loaded = load_docid_map(path);
  REQUIRE(loaded.size() == m1.size());
  for (int d = 0; d < m1.size(); ++d) CHECK(loaded.forward[d] == m1.forward[d]);
  CHECK(loaded.reverse == m1.reverse);
  std::remove(path.c_str());
}
