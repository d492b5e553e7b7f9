#include "avatar/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "avatar/eval.hpp"

namespace avatar {

std::string phonetic_key(const std::string& word) {
  auto cls = [](char c) -> char {
    switch (c) {
      case 'b': case 'p': case 'f': case 'v': return '1';
      case 'd': case 't': return '2';
      case 'g': case 'k': case 'c': case 'q': case 'j': case 'x': return '3';
      case 'l': return '4';
      case 'm': case 'n': return '5';
      case 'r': return '6';
      case 's': case 'z': return '7';
      default: return 0;  // vowels and the rest dropped
    }
  };
  std::string key;
  for (char c : word) {
    const char k = cls(c);
    if (k && key.size() < 2) key += k;
  }
  while (key.size() < 2) key += '0';
  return key;
}

ConfusionTable build_confusion_table(const Corpus& corpus, uint64_t /*seed*/) {
  // std::map keys keep group order deterministic.
  std::map<std::string, std::vector<std::string>> by_key;
  for (size_t i = 4; i < corpus.vocabulary.size(); ++i)  // skip reserved symbols
    by_key[phonetic_key(corpus.vocabulary[i])].push_back(corpus.vocabulary[i]);
  ConfusionTable table;
  for (auto& [key, words] : by_key) {
    if (words.size() < 2) continue;  // singleton keys form no group
    const int gi = static_cast<int>(table.groups.size());
    for (const auto& w : words) table.lookup[w] = gi;
    table.groups.push_back(std::move(words));
  }
  return table;
}

namespace {

const std::string& real_vocab_draw(const Corpus& corpus, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(4, corpus.vocab_size() - 1);
  return corpus.vocabulary[pick(rng)];
}

std::string substitute_token(const std::string& tok, const ConfusionTable& table,
                             const Corpus& corpus, std::mt19937_64& rng) {
  auto it = table.lookup.find(tok);
  if (it != table.lookup.end()) {
    const auto& group = table.groups[it->second];
    std::uniform_int_distribution<int> pick(0, static_cast<int>(group.size()) - 1);
    for (int tries = 0; tries < 32; ++tries) {
      const std::string& cand = group[pick(rng)];
      if (cand != tok) return cand;
    }
  }
  // no group (or pathological draws): uniform vocabulary draw != source
  for (;;) {
    const std::string& cand = real_vocab_draw(corpus, rng);
    if (cand != tok) return cand;
  }
}

}  // namespace

std::vector<std::string> corrupt_tokens(const std::vector<std::string>& tokens,
                                        const ConfusionTable& table, const Corpus& corpus,
                                        double p_sub, double p_del, double p_ins,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::string> out;
  for (const auto& tok : tokens) {
    if (u(rng) < p_ins) out.push_back(real_vocab_draw(corpus, rng));
    const double r = u(rng);
    if (r < p_sub)
      out.push_back(substitute_token(tok, table, corpus, rng));
    else if (r < p_sub + p_del)
      ;  // deleted
    else
      out.push_back(tok);
  }
  if (u(rng) < p_ins) out.push_back(real_vocab_draw(corpus, rng));
  return out;
}

std::vector<Query> augment_query(const Query& query, const ConfusionTable& table,
                                 const Corpus& corpus, const NoiseConfig& cfg) {
  if (query.tokens.empty()) throw std::invalid_argument("augment_query: empty query");
  if (cfg.p_sub + cfg.p_del > 1.0) throw std::invalid_argument("augment_query: p_sub+p_del > 1");
  std::mt19937_64 rng(cfg.seed);
  std::vector<Query> out;
  for (int a = 0; a < cfg.n_augments; ++a) {
    std::vector<std::string> toks;
    for (int tries = 0; tries < 10; ++tries) {
      toks = corrupt_tokens(query.tokens, table, corpus, cfg.p_sub, cfg.p_del, cfg.p_ins, rng);
      if (!toks.empty()) break;
    }
    if (toks.empty()) toks = query.tokens;
    Query q;
    q.tokens = std::move(toks);
    q.gold_doc = query.gold_doc;
    q.origin = Origin::augmented;
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Query> augment_queries(const std::vector<Query>& queries, const ConfusionTable& table,
                                   const Corpus& corpus, const NoiseConfig& cfg) {
  std::vector<Query> out;
  for (size_t i = 0; i < queries.size(); ++i) {
    NoiseConfig qc = cfg;
    qc.seed = derive_seed(cfg.seed, "augment-query-" + std::to_string(i));
    auto augs = augment_query(queries[i], table, corpus, qc);
    out.insert(out.end(), augs.begin(), augs.end());
  }
  return out;
}

namespace {

double corpus_wer(const std::vector<Query>& ref, const std::vector<Query>& hyp) {
  long long edits = 0, ref_len = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    edits += edit_distance(ref[i].tokens, hyp[i].tokens);
    ref_len += static_cast<long long>(ref[i].tokens.size());
  }
  return ref_len == 0 ? 0.0 : static_cast<double>(edits) / ref_len;
}

std::vector<Query> apply_channel(const std::vector<Query>& queries, const ConfusionTable& table,
                                 const Corpus& corpus, double p_sub, double p_del, double p_ins,
                                 uint64_t seed) {
  std::vector<Query> out;
  out.reserve(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, "noisy-test-" + std::to_string(i)));
    Query q = queries[i];
    q.origin = Origin::augmented;
    for (int tries = 0; tries < 10; ++tries) {
      auto toks = corrupt_tokens(queries[i].tokens, table, corpus, p_sub, p_del, p_ins, rng);
      if (!toks.empty()) {
        q.tokens = std::move(toks);
        break;
      }
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace

NoisyTestset make_noisy_testset(const std::vector<Query>& test_queries, double target_wer,
                                const ConfusionTable& table, const Corpus& corpus, uint64_t seed) {
  if (!(target_wer >= 0.0 && target_wer < 1.0))
    throw std::invalid_argument("make_noisy_testset: target_wer out of [0,1)");
  NoisyTestset best;
  best.target_wer = target_wer;
  if (target_wer == 0.0) {
    best.queries = test_queries;
    for (auto& q : best.queries) q.origin = Origin::augmented;
    best.achieved_wer = 0.0;
    return best;
  }
  // Error budget split sub:del:ins = 6:2:2, scaled until the measured WER
  // lands in the window.
  double rate = target_wer;
  double best_gap = 1e300;
  for (int iter = 0; iter < 20; ++iter) {
    const double p_sub = 0.6 * rate, p_del = 0.2 * rate, p_ins = 0.2 * rate;
    auto noisy = apply_channel(test_queries, table, corpus, p_sub, p_del, p_ins,
                               derive_seed(seed, "calibration-" + std::to_string(iter)));
    const double wer = corpus_wer(test_queries, noisy);
    const double gap = std::abs(wer - target_wer);
    if (gap < best_gap) {
      best_gap = gap;
      best.queries = std::move(noisy);
      best.achieved_wer = wer;
    }
    if (gap <= 0.02) return best;
    rate *= wer > 1e-9 ? target_wer / wer : 2.0;
    rate = std::clamp(rate, 0.0, 0.9);
  }
  throw std::runtime_error("make_noisy_testset: calibration failed; best achieved WER " +
                           std::to_string(best.achieved_wer));
}

}  // namespace avatar
