#include "avatar/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace avatar {

InvertedIndex build_index(const Corpus& corpus, int max_body_tokens) {
  if (corpus.documents.empty()) throw std::invalid_argument("build_index: empty corpus");
  InvertedIndex index;
  index.n_docs = static_cast<int>(corpus.documents.size());
  index.doc_lengths.resize(index.n_docs);
  long long total_len = 0;
  for (const auto& doc : corpus.documents) {
    const auto text = truncate_document(doc, max_body_tokens);
    index.doc_lengths[doc.index] = static_cast<int>(text.size());
    total_len += static_cast<long long>(text.size());
    std::map<std::string, int> tf;
    for (const auto& t : text) ++tf[t];
    for (const auto& [tok, cnt] : tf)
      index.postings[tok].push_back({doc.index, cnt});  // documents arrive in index order
  }
  index.avg_doc_length = static_cast<double>(total_len) / index.n_docs;
  return index;
}

std::vector<std::pair<int, double>> bm25_search(const InvertedIndex& index,
                                                const std::vector<std::string>& query_tokens,
                                                int top_k, double k1, double b) {
  if (top_k < 1) throw std::invalid_argument("bm25_search: top_k < 1");
  std::map<int, double> scores;
  for (const auto& tok : query_tokens) {
    auto it = index.postings.find(tok);
    if (it == index.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log((index.n_docs - df + 0.5) / (df + 0.5) + 1.0);
    for (const auto& p : it->second) {
      const double norm = k1 * (1.0 - b + b * index.doc_lengths[p.doc] / index.avg_doc_length);
      scores[p.doc] += idf * (p.tf * (k1 + 1.0)) / (p.tf + norm);
    }
  }
  std::vector<std::pair<int, double>> out(scores.begin(), scores.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b2) {
    if (a.second != b2.second) return a.second > b2.second;
    return a.first < b2.first;
  });
  if (static_cast<int>(out.size()) > top_k) out.resize(top_k);
  return out;
}

}  // namespace avatar
