#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avatar/corpus.hpp"
#include "avatar/tensor.hpp"

namespace avatar {

// Docid token alphabet: digits 0..9, then EOS and BOS for the decoder.
constexpr int kDocidDigits = 10;
constexpr int kDocidEos = 10;
constexpr int kDocidBos = 11;
constexpr int kDocidVocab = 12;

struct DocidConfig {
  int embed_dim = 256;     // hashed char-trigram TF-IDF dimension
  int k = 10;              // cluster fan-out
  int leaf_cap = 100;
  int max_body_tokens = 100;
};

// L2-normalized hashed character-trigram TF-IDF of the truncated documents.
// One row per document.
Tensor embed_documents(const Corpus& corpus, const DocidConfig& cfg = {});

struct ClusterNode {
  std::vector<int> members;  // document indices, in document order
  std::vector<std::unique_ptr<ClusterNode>> children;
  bool is_leaf() const { return children.empty(); }
};

// Recursive k-means: split into <= k children, recurse while a child holds
// more than leaf_cap members. Deterministic given seed.
std::unique_ptr<ClusterNode> hierarchical_cluster(const Tensor& embeddings, int k, int leaf_cap,
                                                  uint64_t seed);

struct DocidMap {
  std::vector<std::vector<int>> forward;       // doc index -> digit tokens (no EOS)
  std::map<std::string, int> reverse;          // "d d d" -> doc index

  static std::string key(const std::vector<int>& tokens);
  int size() const { return static_cast<int>(forward.size()); }
};

// Docid = child indices along the root-to-leaf path, then the within-leaf
// position in document-index order, zero-padded base-k to the leaf's width.
DocidMap assign_docids(const ClusterNode& tree, int k);

DocidMap build_docid_map(const Corpus& corpus, const DocidConfig& cfg, uint64_t seed);

void save_docid_map(const DocidMap& map, const std::string& path);
DocidMap load_docid_map(const std::string& path);

}  // namespace avatar
