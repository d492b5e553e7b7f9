#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avatar/augment.hpp"
#include "avatar/bm25.hpp"
#include "avatar/corpus.hpp"
#include "avatar/docid.hpp"
#include "avatar/eval.hpp"
#include "avatar/model.hpp"
#include "avatar/qgen.hpp"
#include "avatar/scl.hpp"
#include "avatar/trie.hpp"

namespace avatar {

// One config drives every stage; all randomness flows from master_seed via
// named sub-seeds.
struct PipelineConfig {
  uint64_t master_seed = 7;

  // corpus
  int n_docs = 200;
  int n_queries_per_doc = 5;
  double test_fraction = 0.2;
  SyntheticConfig synth;

  // docids (desk-scale tree; k=10 / leaf_cap=100 mirror the full-scale setup)
  DocidConfig docid{256, 4, 8, 100};

  // pseudo queries
  int n_pseudo = 3;

  // training-time augmentation
  NoiseConfig noise;

  // model / training
  ModelConfig model;
  TrainConfig train;

  // evaluation
  std::vector<double> wer_targets = {0.10, 0.15, 0.23};
  std::vector<std::string> systems = {"bm25",         "dsi",           "dsi_qg",
                                      "avatar_no_da", "avatar_no_scl", "avatar"};
  int beam_width = 10;
  int top_k = 10;
};

PipelineConfig config_from_json_file(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);
// FNV-1a over the canonical JSON form, hex string.
std::string config_hash(const PipelineConfig& cfg);

// Query -> (token ids, docid) training pairs.
std::vector<TrainPair> make_query_pairs(const std::vector<Query>& queries, const Corpus& corpus,
                                        const DocidMap& map);
// Document-text -> docid pairs (the plain-DSI indexing inputs).
std::vector<TrainPair> make_document_pairs(const Corpus& corpus, const DocidMap& map,
                                           int max_body_tokens = 100);

std::vector<SCLItem> make_scl_pool(const std::vector<Query>& queries, const Corpus& corpus);

// Shared per-run artifacts.
struct Workbench {
  Corpus corpus;
  std::vector<Query> train_queries;  // supervised
  std::vector<Query> test_queries;   // supervised, clean
  EntityLexicon entities;
  DocidMap docid_map;
  std::vector<Query> q_seq;  // Q_sup (train split) UNION Q_qg
  std::vector<Query> q_da;   // augmentations of q_seq
  ConfusionTable confusions;
};

Workbench build_workbench(const PipelineConfig& cfg);

enum class SystemKind { bm25, dsi, dsi_qg, avatar_no_da, avatar_no_scl, avatar };
SystemKind system_from_name(const std::string& name);

// Train the neural system (not valid for bm25).
Seq2SeqModel train_system(SystemKind kind, const Workbench& wb, const PipelineConfig& cfg);

// Ranked document indices per query for any system.
std::vector<std::vector<std::pair<int, double>>> search_all(
    SystemKind kind, const Seq2SeqModel* model, const PrefixTrie* trie,
    const InvertedIndex* index, const Corpus& corpus, const std::vector<Query>& queries,
    int beam_width, int top_k);

EvalReport run_experiment_matrix(const PipelineConfig& cfg);

}  // namespace avatar
