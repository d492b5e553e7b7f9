#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avatar/corpus.hpp"

namespace avatar {

// Inverted index over truncated documents (title + first 100 body tokens).
struct InvertedIndex {
  struct Posting {
    int doc;
    int tf;
  };
  std::unordered_map<std::string, std::vector<Posting>> postings;  // sorted by doc
  std::vector<int> doc_lengths;
  double avg_doc_length = 0.0;
  int n_docs = 0;

  int df(const std::string& token) const {
    auto it = postings.find(token);
    return it == postings.end() ? 0 : static_cast<int>(it->second.size());
  }
};

InvertedIndex build_index(const Corpus& corpus, int max_body_tokens = 100);

// Okapi BM25, IDF = ln((N - df + 0.5)/(df + 0.5) + 1); ties broken by
// document index.
std::vector<std::pair<int, double>> bm25_search(const InvertedIndex& index,
                                                const std::vector<std::string>& query_tokens,
                                                int top_k, double k1 = 1.2, double b = 0.75);

}  // namespace avatar
