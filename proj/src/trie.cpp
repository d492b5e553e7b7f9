#include "avatar/trie.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avatar {

PrefixTrie::PrefixTrie(const DocidMap& map) {
  if (map.forward.empty()) throw std::invalid_argument("build_trie: empty docid map");
  nodes_.emplace_back();
  for (size_t doc = 0; doc < map.forward.size(); ++doc) {
    const auto& id = map.forward[doc];
    int node = 0;
    for (int tok : id) {
      auto it = nodes_[node].children.find(tok);
      if (it == nodes_[node].children.end()) {
        nodes_.emplace_back();
        it = nodes_[node].children.emplace(tok, static_cast<int>(nodes_.size()) - 1).first;
      }
      node = it->second;
    }
    if (nodes_[node].doc != -1) throw std::invalid_argument("build_trie: duplicate docid");
    nodes_[node].doc = static_cast<int>(doc);
    ++n_docs_;
    max_depth_ = std::max(max_depth_, static_cast<int>(id.size()));
  }
}

int PrefixTrie::walk(const std::vector<int>& prefix) const {
  int node = 0;
  for (int tok : prefix) {
    auto it = nodes_[node].children.find(tok);
    if (it == nodes_[node].children.end() || it->second < 0) return -1;
    node = it->second;
  }
  return node;
}

std::vector<int> PrefixTrie::allowed_tokens(const std::vector<int>& prefix) const {
  const int node = walk(prefix);
  if (node < 0) return {};
  std::vector<int> out;
  for (const auto& [tok, child] : nodes_[node].children) out.push_back(tok);
  if (nodes_[node].doc != -1) out.push_back(kDocidEos);
  return out;
}

int PrefixTrie::terminal_doc(const std::vector<int>& prefix) const {
  const int node = walk(prefix);
  return node < 0 ? -1 : nodes_[node].doc;
}

namespace {

struct Hyp {
  std::vector<int> prefix;
  double log_score = 0.0;
};

bool docid_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<SearchResult> constrained_beam_search(const Seq2SeqModel& model,
                                                  const std::vector<int>& query_tokens,
                                                  const PrefixTrie& trie, int beam_width,
                                                  int top_k) {
  if (top_k < 1 || beam_width < top_k)
    throw std::invalid_argument("constrained_beam_search: need beam_width >= top_k >= 1");
  if (query_tokens.empty()) throw std::invalid_argument("empty query");

  const Tensor enc = model.encode(query_tokens);  // cached across all steps
  std::vector<Hyp> beam = {Hyp{}};
  std::vector<SearchResult> done;

  for (int depth = 0; depth <= trie.max_depth() && !beam.empty(); ++depth) {
    std::vector<Hyp> next;
    for (const Hyp& h : beam) {
      const std::vector<double> logp = model.decode_step(enc, h.prefix);
      for (int tok : trie.allowed_tokens(h.prefix)) {
        if (tok == kDocidEos) {
          SearchResult r;
          r.doc = trie.terminal_doc(h.prefix);
          r.log_score = h.log_score + logp[tok];
          r.score = std::exp(r.log_score);
          r.docid = h.prefix;
          done.push_back(std::move(r));
        } else {
          Hyp nh;
          nh.prefix = h.prefix;
          nh.prefix.push_back(tok);
          nh.log_score = h.log_score + logp[tok];
          next.push_back(std::move(nh));
        }
      }
    }
    std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
      if (a.log_score != b.log_score) return a.log_score > b.log_score;
      return docid_less(a.prefix, b.prefix);
    });
    if (static_cast<int>(next.size()) > beam_width) next.resize(beam_width);
    beam = std::move(next);
  }

  std::sort(done.begin(), done.end(), [](const SearchResult& a, const SearchResult& b) {
    if (a.log_score != b.log_score) return a.log_score > b.log_score;
    return docid_less(a.docid, b.docid);
  });
  if (static_cast<int>(done.size()) > top_k) done.resize(top_k);
  return done;
}

double score_docid(const Seq2SeqModel& model, const std::vector<int>& query_tokens,
                   const std::vector<int>& docid) {
  const Tensor enc = model.encode(query_tokens);
  std::vector<int> prefix;
  double log_score = 0.0;
  for (size_t i = 0; i <= docid.size(); ++i) {
    const int target = i < docid.size() ? docid[i] : kDocidEos;
    log_score += model.decode_step(enc, prefix)[target];
    if (i < docid.size()) prefix.push_back(target);
  }
  return std::exp(log_score);
}

}  // namespace avatar
