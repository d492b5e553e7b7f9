#pragma once

#include <cstdint>
#include <vector>

#include "avatar/corpus.hpp"

namespace avatar {

// Extractive pseudo queries: contiguous 4-8 token windows of the truncated
// document with the highest token TF-IDF mass. A learned generator can be
// swapped in behind this interface.
std::vector<Query> generate_pseudo_queries(const Document& doc, const Corpus& corpus, int n,
                                           uint64_t seed, int max_body_tokens = 100);

// Q_seq = Q_sup UNION Q_qg, origins tagged; |Q_qg| = n * corpus size.
std::vector<Query> build_training_set(const std::vector<Query>& supervised, const Corpus& corpus,
                                      int n, uint64_t seed);

}  // namespace avatar
