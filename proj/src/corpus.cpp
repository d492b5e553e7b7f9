#include "avatar/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace avatar {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_ws(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

std::string origin_name(Origin o) {
  switch (o) {
    case Origin::supervised: return "supervised";
    case Origin::pseudo: return "pseudo";
    case Origin::augmented: return "augmented";
  }
  return "supervised";
}

Origin origin_from_name(const std::string& s) {
  if (s == "supervised") return Origin::supervised;
  if (s == "pseudo") return Origin::pseudo;
  if (s == "augmented") return Origin::augmented;
  throw std::invalid_argument("unknown query origin: " + s);
}

uint64_t derive_seed(uint64_t master, const std::string& stage) {
  // FNV-1a over the stage name, mixed with the master seed via splitmix64.
  uint64_t h = 1469598103934665603ULL;
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  uint64_t z = master + 0x9e3779b97f4a7c15ULL + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void build_vocabulary(Corpus& corpus, const std::vector<Query>& extra, int max_body_tokens) {
  std::set<std::string> words;
  for (const auto& doc : corpus.documents)
    for (const auto& t : truncate_document(doc, max_body_tokens)) words.insert(t);
  for (const auto& q : extra)
    for (const auto& t : q.tokens) words.insert(t);
  corpus.vocabulary = {"<unk>", "<pad>", "<bos>", "<eos>"};
  for (const auto& w : words) corpus.vocabulary.push_back(w);
  corpus.vocab_index.clear();
  for (size_t i = 0; i < corpus.vocabulary.size(); ++i)
    corpus.vocab_index[corpus.vocabulary[i]] = static_cast<int>(i);
}

std::vector<std::string> truncate_document(const Document& doc, int max_body_tokens) {
  if (max_body_tokens < 1) throw std::invalid_argument("truncate_document: max_body_tokens < 1");
  std::vector<std::string> out = doc.title;
  const int take = std::min<int>(static_cast<int>(doc.body.size()), max_body_tokens);
  out.insert(out.end(), doc.body.begin(), doc.body.begin() + take);
  return out;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  Corpus corpus;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus parse error at line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    if (!j.contains("external_id") || !j.contains("title") || !j.contains("body"))
      throw std::runtime_error("corpus parse error at line " + std::to_string(lineno) +
                               ": missing field");
    Document doc;
    doc.index = static_cast<int>(corpus.documents.size());
    doc.external_id = j["external_id"].get<std::string>();
    doc.title = split_ws(j["title"].get<std::string>());
    doc.body = split_ws(j["body"].get<std::string>());
    if (doc.title.empty() || doc.body.empty())
      throw std::runtime_error("corpus parse error at line " + std::to_string(lineno) +
                               ": empty title or body");
    if (!seen_ids.insert(doc.external_id).second)
      throw std::runtime_error("duplicate external_id '" + doc.external_id + "' at line " +
                               std::to_string(lineno));
    corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty()) throw std::runtime_error("empty corpus: " + path);
  build_vocabulary(corpus, {});
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& doc : corpus.documents) {
    nlohmann::ordered_json j;
    j["external_id"] = doc.external_id;
    j["title"] = join_ws(doc.title);
    j["body"] = join_ws(doc.body);
    out << j.dump() << '\n';
  }
}

std::vector<Query> load_queries(const std::string& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open query file: " + path);
  std::unordered_map<std::string, int> by_ext;
  for (const auto& d : corpus.documents) by_ext[d.external_id] = d.index;
  std::vector<Query> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("query parse error at line " + std::to_string(lineno) + ": " +
                               e.what());
    }
    Query q;
    q.tokens = split_ws(j.at("text").get<std::string>());
    const std::string ext = j.at("gold_external_id").get<std::string>();
    auto it = by_ext.find(ext);
    if (it == by_ext.end())
      throw std::runtime_error("query at line " + std::to_string(lineno) +
                               " references unknown document '" + ext + "'");
    q.gold_doc = it->second;
    q.origin = origin_from_name(j.at("origin").get<std::string>());
    out.push_back(std::move(q));
  }
  return out;
}

void save_queries(const std::vector<Query>& queries, const Corpus& corpus,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write query file: " + path);
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["text"] = join_ws(q.tokens);
    j["gold_external_id"] = corpus.documents.at(q.gold_doc).external_id;
    j["origin"] = origin_name(q.origin);
    out << j.dump() << '\n';
  }
}

namespace {

// Pronounceable synthetic words; small sound inventory so the phonetic-key
// confusion table gets dense groups.
std::string make_word(std::mt19937_64& rng) {
  static const char* consonants = "bdgklmnprst";
  static const char* vowels = "aeio";
  std::uniform_int_distribution<int> syl(2, 3);
  std::uniform_int_distribution<int> ci(0, 10);
  std::uniform_int_distribution<int> vi(0, 3);
  std::string w;
  const int n = syl(rng);
  for (int s = 0; s < n; ++s) {
    w += consonants[ci(rng)];
    w += vowels[vi(rng)];
  }
  return w;
}

std::vector<std::string> make_unique_words(std::mt19937_64& rng, int count,
                                           std::set<std::string>& used) {
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    std::string w = make_word(rng);
    if (used.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic_corpus(uint64_t seed, int n_docs, int n_queries_per_doc,
                                        const SyntheticConfig& cfg) {
  if (n_docs < 1) throw std::invalid_argument("generate_synthetic_corpus: n_docs < 1");
  std::mt19937_64 rng(derive_seed(seed, "synthetic-corpus"));
  std::set<std::string> used;
  const int n_topics = std::min(cfg.n_topics, n_docs);
  const auto background = make_unique_words(rng, cfg.n_background_words, used);
  std::vector<std::vector<std::string>> topic_words(n_topics);
  for (auto& tw : topic_words) tw = make_unique_words(rng, cfg.words_per_topic, used);

  SyntheticData data;
  std::uniform_int_distribution<int> any_bg(0, cfg.n_background_words - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (int d = 0; d < n_docs; ++d) {
    const int topic = d % n_topics;
    const auto heads = make_unique_words(rng, cfg.heads_per_doc, used);
    for (const auto& h : heads) data.entities.push_back({h});

    Document doc;
    doc.index = d;
    doc.external_id = "doc" + std::to_string(d);
    doc.title = {heads[0], topic_words[topic][0]};
    std::uniform_int_distribution<int> any_topic(0, cfg.words_per_topic - 1);
    std::uniform_int_distribution<int> any_head(0, cfg.heads_per_doc - 1);
    for (int t = 0; t < cfg.body_len; ++t) {
      const double r = u(rng);
      if (r < 0.35)
        doc.body.push_back(heads[any_head(rng)]);
      else if (r < 0.75)
        doc.body.push_back(topic_words[topic][any_topic(rng)]);
      else
        doc.body.push_back(background[any_bg(rng)]);
    }
    data.corpus.documents.push_back(std::move(doc));

    // Supervised queries: short paraphrases over the document's own
    // distribution, anchored by at least two head words.
    std::uniform_int_distribution<int> qlen(cfg.query_min_len, cfg.query_max_len);
    for (int qi = 0; qi < n_queries_per_doc; ++qi) {
      Query q;
      q.gold_doc = d;
      q.origin = Origin::supervised;
      const int len = qlen(rng);
      q.tokens.push_back(heads[qi % cfg.heads_per_doc]);
      q.tokens.push_back(heads[(qi + 1) % cfg.heads_per_doc]);
      while (static_cast<int>(q.tokens.size()) < len) {
        const double r = u(rng);
        if (r < 0.30)
          q.tokens.push_back(heads[any_head(rng)]);
        else if (r < 0.85)
          q.tokens.push_back(topic_words[topic][any_topic(rng)]);
        else
          q.tokens.push_back(background[any_bg(rng)]);
      }
      std::shuffle(q.tokens.begin(), q.tokens.end(), rng);
      data.queries.push_back(std::move(q));
    }
  }
  build_vocabulary(data.corpus, data.queries);
  return data;
}

std::pair<std::vector<Query>, std::vector<Query>> split_queries(const std::vector<Query>& queries,
                                                                double test_fraction,
                                                                uint64_t seed) {
  if (queries.size() < 2) throw std::invalid_argument("split: fewer than 2 queries");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction out of (0,1)");
  // Group by gold document, shuffle within group, then take a fraction per
  // group so every document keeps training queries when it can.
  std::map<int, std::vector<size_t>> by_doc;
  for (size_t i = 0; i < queries.size(); ++i) by_doc[queries[i].gold_doc].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::vector<Query> train, test;
  for (auto& [doc, idxs] : by_doc) {
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const int n = static_cast<int>(idxs.size());
    int n_test = static_cast<int>(std::lround(test_fraction * n));
    if (n_test >= n) n_test = n - 1;
    for (int i = 0; i < n; ++i)
      (i < n_test ? test : train).push_back(queries[idxs[i]]);
  }
  return {std::move(train), std::move(test)};
}

void save_entities(const std::vector<std::vector<std::string>>& entities,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write entity lexicon: " + path);
  for (const auto& e : entities) out << join_ws(e) << '\n';
}

std::vector<std::vector<std::string>> load_entities(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open entity lexicon: " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_ws(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

}  // namespace avatar
