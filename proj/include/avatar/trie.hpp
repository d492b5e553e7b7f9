#pragma once

#include <vector>

#include "avatar/docid.hpp"
#include "avatar/model.hpp"

namespace avatar {

// Prefix tree over all docid strings. Every root-to-terminal path (digits
// followed by EOS) is exactly one docid of the map.
class PrefixTrie {
 public:
  explicit PrefixTrie(const DocidMap& map);

  // Child tokens of the node reached by `prefix`, ascending. EOS appears
  // exactly at ends of complete docids.
  std::vector<int> allowed_tokens(const std::vector<int>& prefix) const;
  // Document at a complete docid prefix (before EOS), or -1.
  int terminal_doc(const std::vector<int>& prefix) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int n_docs() const { return n_docs_; }
  int max_depth() const { return max_depth_; }

 private:
  struct Node {
    std::map<int, int> children;  // token -> node id; EOS maps to -(doc+2)
    int doc = -1;                 // set when a docid ends here
  };
  int walk(const std::vector<int>& prefix) const;

  std::vector<Node> nodes_;
  int n_docs_ = 0;
  int max_depth_ = 0;
};

struct SearchResult {
  int doc = -1;
  double score = 0.0;      // exp(sum of token log-probabilities)
  double log_score = 0.0;
  std::vector<int> docid;
};

// Beam search restricted to trie children at every step; scores are taken
// from the unconstrained per-step distribution. Ties broken by
// lexicographic docid order.
std::vector<SearchResult> constrained_beam_search(const Seq2SeqModel& model,
                                                  const std::vector<int>& query_tokens,
                                                  const PrefixTrie& trie, int beam_width,
                                                  int top_k);

// Teacher-forced probability of `docid` (digits, EOS appended internally)
// for the query: the product over per-step probabilities.
double score_docid(const Seq2SeqModel& model, const std::vector<int>& query_tokens,
                   const std::vector<int>& docid);

}  // namespace avatar
