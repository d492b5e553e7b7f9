#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace avatar {

struct Document {
  int index = -1;  // dense internal id, 0..N-1
  std::string external_id;
  std::vector<std::string> title;
  std::vector<std::string> body;
};

enum class Origin { supervised, pseudo, augmented };

std::string origin_name(Origin o);
Origin origin_from_name(const std::string& s);

struct Query {
  std::vector<std::string> tokens;
  int gold_doc = -1;
  Origin origin = Origin::supervised;
};

struct Corpus {
  // Reserved vocabulary slots.
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  std::vector<Document> documents;
  std::vector<std::string> vocabulary;  // reserved symbols first, then sorted words
  std::unordered_map<std::string, int> vocab_index;

  int token_id(const std::string& tok) const {
    auto it = vocab_index.find(tok);
    return it == vocab_index.end() ? kUnk : it->second;
  }
  std::vector<int> token_ids(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(token_id(t));
    return out;
  }
  int vocab_size() const { return static_cast<int>(vocabulary.size()); }
};

// Rebuild vocab_index and the reserved+sorted vocabulary from documents and
// the given extra token sources (typically the supervised queries).
void build_vocabulary(Corpus& corpus, const std::vector<Query>& extra, int max_body_tokens = 100);

Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

std::vector<Query> load_queries(const std::string& path, const Corpus& corpus);
void save_queries(const std::vector<Query>& queries, const Corpus& corpus,
                  const std::string& path);

// Title followed by the first min(|body|, max_body_tokens) body tokens.
std::vector<std::string> truncate_document(const Document& doc, int max_body_tokens = 100);

struct SyntheticConfig {
  int n_topics = 20;
  int words_per_topic = 25;
  int n_background_words = 120;
  int heads_per_doc = 3;  // document-specific "entity" words
  int body_len = 120;
  int query_min_len = 4;
  int query_max_len = 8;
};

struct SyntheticData {
  Corpus corpus;
  std::vector<Query> queries;                       // supervised
  std::vector<std::vector<std::string>> entities;   // head words, the entity lexicon
};

SyntheticData generate_synthetic_corpus(uint64_t seed, int n_docs, int n_queries_per_doc,
                                        const SyntheticConfig& cfg = {});

// Deterministic stratified split; every document keeps >=1 training query
// when it has >=2.
std::pair<std::vector<Query>, std::vector<Query>> split_queries(const std::vector<Query>& queries,
                                                                double test_fraction,
                                                                uint64_t seed);

void save_entities(const std::vector<std::vector<std::string>>& entities, const std::string& path);
std::vector<std::vector<std::string>> load_entities(const std::string& path);

// Named sub-seed derivation so stages draw from independent streams.
uint64_t derive_seed(uint64_t master, const std::string& stage);

}  // namespace avatar
