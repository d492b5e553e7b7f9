#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "avatar/corpus.hpp"

namespace avatar {

// Tokens that sound alike, grouped by a phonetic key of the word string.
struct ConfusionTable {
  std::vector<std::vector<std::string>> groups;        // each size >= 2, disjoint
  std::unordered_map<std::string, int> lookup;         // token -> group index
};

struct NoiseConfig {
  double p_sub = 0.10;
  double p_del = 0.03;
  double p_ins = 0.03;
  int n_augments = 3;
  uint64_t seed = 1;
};

// Soundex-like key: consonant classes with vowels dropped, truncated.
std::string phonetic_key(const std::string& word);

ConfusionTable build_confusion_table(const Corpus& corpus, uint64_t seed);

// Corrupt one query with a single channel pass (substitute / delete / keep
// per token, insert between positions).
std::vector<std::string> corrupt_tokens(const std::vector<std::string>& tokens,
                                        const ConfusionTable& table, const Corpus& corpus,
                                        double p_sub, double p_del, double p_ins,
                                        std::mt19937_64& rng);

// n_augments independent corruptions; gold_doc preserved, origin=augmented.
// Empty outputs are retried up to 10 times, then the original is kept.
std::vector<Query> augment_query(const Query& query, const ConfusionTable& table,
                                 const Corpus& corpus, const NoiseConfig& cfg);

// All augmentations for a query set, with per-query derived seeds.
std::vector<Query> augment_queries(const std::vector<Query>& queries, const ConfusionTable& table,
                                   const Corpus& corpus, const NoiseConfig& cfg);

struct NoisyTestset {
  std::vector<Query> queries;
  double achieved_wer = 0.0;
  double target_wer = 0.0;
};

// Calibrates per-token error probabilities (sub:del:ins = 6:2:2) until the
// measured corpus-level WER is within +-0.02 of target (<= 20 iterations).
NoisyTestset make_noisy_testset(const std::vector<Query>& test_queries, double target_wer,
                                const ConfusionTable& table, const Corpus& corpus, uint64_t seed);

}  // namespace avatar
