#include "avatar/qgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace avatar {

namespace {

constexpr int kMinWindow = 4;
constexpr int kMaxWindow = 8;

// Corpus-level token IDF over truncated documents.
std::unordered_map<std::string, double> token_idf(const Corpus& corpus, int max_body_tokens) {
  std::unordered_map<std::string, int> df;
  for (const auto& doc : corpus.documents) {
    std::set<std::string> seen;
    for (const auto& t : truncate_document(doc, max_body_tokens)) seen.insert(t);
    for (const auto& t : seen) ++df[t];
  }
  const double n = static_cast<double>(corpus.documents.size());
  std::unordered_map<std::string, double> idf;
  for (const auto& [tok, d] : df) idf[tok] = std::log((1.0 + n) / (1.0 + d)) + 1.0;
  return idf;
}

}  // namespace

namespace {

std::vector<Query> pseudo_queries_with_idf(const Document& doc,
                                           const std::unordered_map<std::string, double>& idf,
                                           int n, uint64_t seed, int max_body_tokens) {
  const auto text = truncate_document(doc, max_body_tokens);
  if (text.empty()) throw std::invalid_argument("generate_pseudo_queries: empty document");

  if (static_cast<int>(text.size()) < kMinWindow) {
    Query q;
    q.tokens = text;
    q.gold_doc = doc.index;
    q.origin = Origin::pseudo;
    return {q};
  }

  std::unordered_map<std::string, int> tf;
  for (const auto& t : text) ++tf[t];
  auto weight = [&](const std::string& t) {
    auto it = idf.find(t);
    return tf[t] * (it == idf.end() ? 1.0 : it->second);
  };

  // Score every window by its TF-IDF mass; take the top n distinct ones.
  // The seed only breaks exact score ties.
  struct Window {
    int start, len;
    double score;
    uint64_t tiebreak;
  };
  std::vector<Window> windows;
  for (int len = kMinWindow; len <= kMaxWindow; ++len)
    for (int s = 0; s + len <= static_cast<int>(text.size()); ++s) {
      double score = 0.0;
      for (int i = s; i < s + len; ++i) score += weight(text[i]);
      windows.push_back({s, len, score,
                         derive_seed(seed, std::to_string(s) + ":" + std::to_string(len))});
    }
  std::sort(windows.begin(), windows.end(), [](const Window& a, const Window& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tiebreak < b.tiebreak;
  });

  std::vector<Query> out;
  std::set<std::vector<std::string>> seen;
  for (const auto& w : windows) {
    if (static_cast<int>(out.size()) >= n) break;
    std::vector<std::string> toks(text.begin() + w.start, text.begin() + w.start + w.len);
    if (!seen.insert(toks).second) continue;
    Query q;
    q.tokens = std::move(toks);
    q.gold_doc = doc.index;
    q.origin = Origin::pseudo;
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

std::vector<Query> generate_pseudo_queries(const Document& doc, const Corpus& corpus, int n,
                                           uint64_t seed, int max_body_tokens) {
  return pseudo_queries_with_idf(doc, token_idf(corpus, max_body_tokens), n, seed,
                                 max_body_tokens);
}

std::vector<Query> build_training_set(const std::vector<Query>& supervised, const Corpus& corpus,
                                      int n, uint64_t seed) {
  const auto idf = token_idf(corpus, 100);
  std::vector<Query> out = supervised;
  for (const auto& doc : corpus.documents) {
    auto pq = pseudo_queries_with_idf(
        doc, idf, n, derive_seed(seed, "qgen-doc-" + std::to_string(doc.index)), 100);
    out.insert(out.end(), pq.begin(), pq.end());
  }
  return out;
}

}  // namespace avatar
