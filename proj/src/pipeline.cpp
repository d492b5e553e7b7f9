#include "avatar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace avatar {

namespace {

nlohmann::ordered_json config_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["master_seed"] = c.master_seed;
  j["corpus"] = {{"n_docs", c.n_docs},
                 {"n_queries_per_doc", c.n_queries_per_doc},
                 {"test_fraction", c.test_fraction},
                 {"n_topics", c.synth.n_topics},
                 {"words_per_topic", c.synth.words_per_topic},
                 {"n_background_words", c.synth.n_background_words},
                 {"heads_per_doc", c.synth.heads_per_doc},
                 {"body_len", c.synth.body_len},
                 {"query_min_len", c.synth.query_min_len},
                 {"query_max_len", c.synth.query_max_len}};
  j["docid"] = {{"embed_dim", c.docid.embed_dim},
                {"k", c.docid.k},
                {"leaf_cap", c.docid.leaf_cap},
                {"max_body_tokens", c.docid.max_body_tokens}};
  j["qgen"] = {{"n_pseudo", c.n_pseudo}};
  j["noise"] = {{"p_sub", c.noise.p_sub},
                {"p_del", c.noise.p_del},
                {"p_ins", c.noise.p_ins},
                {"n_augments", c.noise.n_augments}};
  j["model"] = {{"d", c.model.d},         {"n_enc", c.model.n_enc}, {"n_dec", c.model.n_dec},
                {"heads", c.model.heads}, {"d_ff", c.model.d_ff},   {"d_proj", c.model.d_proj},
                {"max_len", c.model.max_len}};
  j["train"] = {{"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"scl_steps", c.train.scl_steps},
                {"scl_batch", c.train.scl_batch},
                {"clip_norm", c.train.clip_norm},
                {"lr_final_fraction", c.train.lr_final_fraction}};
  j["eval"] = {{"wer_targets", c.wer_targets},
               {"systems", c.systems},
               {"beam_width", c.beam_width},
               {"top_k", c.top_k}};
  return j;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  PipelineConfig c;
  maybe(j, "master_seed", c.master_seed);
  if (j.contains("corpus")) {
    const auto& s = j["corpus"];
    maybe(s, "n_docs", c.n_docs);
    maybe(s, "n_queries_per_doc", c.n_queries_per_doc);
    maybe(s, "test_fraction", c.test_fraction);
    maybe(s, "n_topics", c.synth.n_topics);
    maybe(s, "words_per_topic", c.synth.words_per_topic);
    maybe(s, "n_background_words", c.synth.n_background_words);
    maybe(s, "heads_per_doc", c.synth.heads_per_doc);
    maybe(s, "body_len", c.synth.body_len);
    maybe(s, "query_min_len", c.synth.query_min_len);
    maybe(s, "query_max_len", c.synth.query_max_len);
  }
  if (j.contains("docid")) {
    const auto& s = j["docid"];
    maybe(s, "embed_dim", c.docid.embed_dim);
    maybe(s, "k", c.docid.k);
    maybe(s, "leaf_cap", c.docid.leaf_cap);
    maybe(s, "max_body_tokens", c.docid.max_body_tokens);
  }
  if (j.contains("qgen")) maybe(j["qgen"], "n_pseudo", c.n_pseudo);
  if (j.contains("noise")) {
    const auto& s = j["noise"];
    maybe(s, "p_sub", c.noise.p_sub);
    maybe(s, "p_del", c.noise.p_del);
    maybe(s, "p_ins", c.noise.p_ins);
    maybe(s, "n_augments", c.noise.n_augments);
  }
  if (j.contains("model")) {
    const auto& s = j["model"];
    maybe(s, "d", c.model.d);
    maybe(s, "n_enc", c.model.n_enc);
    maybe(s, "n_dec", c.model.n_dec);
    maybe(s, "heads", c.model.heads);
    maybe(s, "d_ff", c.model.d_ff);
    maybe(s, "d_proj", c.model.d_proj);
    maybe(s, "max_len", c.model.max_len);
  }
  if (j.contains("train")) {
    const auto& s = j["train"];
    maybe(s, "lr", c.train.lr);
    maybe(s, "batch_size", c.train.batch_size);
    maybe(s, "epochs", c.train.epochs);
    maybe(s, "scl_steps", c.train.scl_steps);
    maybe(s, "scl_batch", c.train.scl_batch);
    maybe(s, "clip_norm", c.train.clip_norm);
    maybe(s, "lr_final_fraction", c.train.lr_final_fraction);
  }
  if (j.contains("eval")) {
    const auto& s = j["eval"];
    maybe(s, "wer_targets", c.wer_targets);
    maybe(s, "systems", c.systems);
    maybe(s, "beam_width", c.beam_width);
    maybe(s, "top_k", c.top_k);
  }
  return c;
}

std::string config_to_json(const PipelineConfig& cfg) { return config_json(cfg).dump(2); }

std::string config_hash(const PipelineConfig& cfg) {
  const std::string s = config_json(cfg).dump();
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<TrainPair> make_query_pairs(const std::vector<Query>& queries, const Corpus& corpus,
                                        const DocidMap& map) {
  std::vector<TrainPair> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    TrainPair p;
    p.query = corpus.token_ids(q.tokens);
    p.docid = map.forward.at(q.gold_doc);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<TrainPair> make_document_pairs(const Corpus& corpus, const DocidMap& map,
                                           int max_body_tokens) {
  std::vector<TrainPair> out;
  out.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    TrainPair p;
    p.query = corpus.token_ids(truncate_document(doc, max_body_tokens));
    p.docid = map.forward.at(doc.index);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SCLItem> make_scl_pool(const std::vector<Query>& queries, const Corpus& corpus) {
  std::vector<SCLItem> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back({corpus.token_ids(q.tokens), q.gold_doc});
  return out;
}

Workbench build_workbench(const PipelineConfig& cfg) {
  Workbench wb;
  SyntheticData data = generate_synthetic_corpus(cfg.master_seed, cfg.n_docs,
                                                 cfg.n_queries_per_doc, cfg.synth);
  wb.corpus = std::move(data.corpus);
  wb.entities = std::move(data.entities);
  auto [train_q, test_q] =
      split_queries(data.queries, cfg.test_fraction, derive_seed(cfg.master_seed, "split"));
  wb.train_queries = std::move(train_q);
  wb.test_queries = std::move(test_q);
  wb.docid_map = build_docid_map(wb.corpus, cfg.docid, derive_seed(cfg.master_seed, "docid"));
  wb.q_seq = build_training_set(wb.train_queries, wb.corpus, cfg.n_pseudo,
                                derive_seed(cfg.master_seed, "qgen"));
  wb.confusions = build_confusion_table(wb.corpus, derive_seed(cfg.master_seed, "confusion"));
  NoiseConfig nc = cfg.noise;
  nc.seed = derive_seed(cfg.master_seed, "train-augment");
  wb.q_da = augment_queries(wb.q_seq, wb.confusions, wb.corpus, nc);
  return wb;
}

SystemKind system_from_name(const std::string& name) {
  if (name == "bm25") return SystemKind::bm25;
  if (name == "dsi") return SystemKind::dsi;
  if (name == "dsi_qg") return SystemKind::dsi_qg;
  if (name == "avatar_no_da") return SystemKind::avatar_no_da;
  if (name == "avatar_no_scl") return SystemKind::avatar_no_scl;
  if (name == "avatar") return SystemKind::avatar;
  throw std::invalid_argument("unknown system: " + name);
}

Seq2SeqModel train_system(SystemKind kind, const Workbench& wb, const PipelineConfig& cfg) {
  if (kind == SystemKind::bm25) throw std::invalid_argument("train_system: bm25 has no model");

  ModelConfig mc = cfg.model;
  mc.query_vocab = wb.corpus.vocab_size();
  mc.seed = derive_seed(cfg.master_seed, "model-init");
  Seq2SeqModel model(mc);

  const bool use_da = kind == SystemKind::avatar_no_scl || kind == SystemKind::avatar;
  const bool use_scl = kind == SystemKind::avatar_no_da || kind == SystemKind::avatar;

  std::vector<Query> train_queries = wb.q_seq;
  if (use_da) train_queries.insert(train_queries.end(), wb.q_da.begin(), wb.q_da.end());

  if (use_scl) {
    TrainConfig pc = cfg.train;
    pc.seed = derive_seed(cfg.master_seed, "scl-pretrain");
    pretrain_encoder(model, make_scl_pool(train_queries, wb.corpus), pc);
  }

  std::vector<TrainPair> pairs;
  if (kind == SystemKind::dsi)
    pairs = make_document_pairs(wb.corpus, wb.docid_map, cfg.docid.max_body_tokens);
  else
    pairs = make_query_pairs(train_queries, wb.corpus, wb.docid_map);

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.master_seed, "finetune");
  // Variants trained on Q_seq alone see 1/(1+n_augments) of the pairs per
  // epoch; give them 2x epochs so they are competitive on clean queries
  // without erasing the data difference the ablation is about.
  if (!use_da && kind != SystemKind::dsi) tc.epochs *= 2;
  train(model, pairs, tc);
  return model;
}

std::vector<std::vector<std::pair<int, double>>> search_all(
    SystemKind kind, const Seq2SeqModel* model, const PrefixTrie* trie,
    const InvertedIndex* index, const Corpus& corpus, const std::vector<Query>& queries,
    int beam_width, int top_k) {
  const int n = static_cast<int>(queries.size());
  std::vector<std::vector<std::pair<int, double>>> out(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    if (kind == SystemKind::bm25) {
      out[i] = bm25_search(*index, queries[i].tokens, top_k);
    } else {
      const auto results = constrained_beam_search(*model, corpus.token_ids(queries[i].tokens),
                                                   *trie, beam_width, top_k);
      for (const auto& r : results) out[i].emplace_back(r.doc, r.score);
    }
  }
  return out;
}

namespace {

ConditionMetrics evaluate_condition(const std::vector<std::vector<std::pair<int, double>>>& ranked,
                                    const std::vector<Query>& clean,
                                    const std::vector<Query>& noisy,
                                    const EntityLexicon& entities) {
  std::vector<std::vector<int>> ids(ranked.size());
  std::vector<int> gold(ranked.size());
  for (size_t i = 0; i < ranked.size(); ++i) {
    gold[i] = clean[i].gold_doc;
    for (const auto& [doc, score] : ranked[i]) ids[i].push_back(doc);
  }
  ConditionMetrics m;
  m.hits1 = hits_at_k(ids, gold, 1);
  m.hits10 = hits_at_k(ids, gold, 10);
  long long edits = 0, ref_len = 0;
  for (size_t i = 0; i < clean.size(); ++i) {
    edits += edit_distance(clean[i].tokens, noisy[i].tokens);
    ref_len += static_cast<long long>(clean[i].tokens.size());
  }
  m.wer = ref_len == 0 ? 0.0 : static_cast<double>(edits) / ref_len;
  m.eer = eer(clean, noisy, entities);
  const auto [ent_idx, non_idx] = split_entity_noise(clean, noisy, entities);
  auto subset_metrics = [&](const std::vector<size_t>& idxs, double& h1, double& h10) {
    if (idxs.empty()) {
      h1 = h10 = 0.0;
      return;
    }
    std::vector<std::vector<int>> sub_ids;
    std::vector<int> sub_gold;
    for (size_t i : idxs) {
      sub_ids.push_back(ids[i]);
      sub_gold.push_back(gold[i]);
    }
    h1 = hits_at_k(sub_ids, sub_gold, 1);
    h10 = hits_at_k(sub_ids, sub_gold, 10);
  };
  subset_metrics(ent_idx, m.entity_hits1, m.entity_hits10);
  subset_metrics(non_idx, m.nonentity_hits1, m.nonentity_hits10);
  m.entity_subset_size = static_cast<int>(ent_idx.size());
  m.nonentity_subset_size = static_cast<int>(non_idx.size());
  return m;
}

std::string condition_name(double target) {
  return "wer" + std::to_string(static_cast<int>(std::lround(target * 100)));
}

}  // namespace

EvalReport run_experiment_matrix(const PipelineConfig& cfg) {
  const Workbench wb = build_workbench(cfg);
  PrefixTrie trie(wb.docid_map);
  const InvertedIndex index = build_index(wb.corpus, cfg.docid.max_body_tokens);

  // Test conditions: clean plus each calibrated noise level.
  std::vector<std::pair<std::string, std::vector<Query>>> conditions;
  conditions.emplace_back("clean", wb.test_queries);
  for (double target : cfg.wer_targets) {
    auto noisy = make_noisy_testset(wb.test_queries, target, wb.confusions, wb.corpus,
                                    derive_seed(cfg.master_seed, condition_name(target)));
    conditions.emplace_back(condition_name(target), std::move(noisy.queries));
  }

  EvalReport report;
  report.seeds = {cfg.master_seed};
  report.config_hash = config_hash(cfg);
  for (const auto& name : cfg.systems) {
    const SystemKind kind = system_from_name(name);
    std::optional<Seq2SeqModel> model;
    if (kind != SystemKind::bm25) model.emplace(train_system(kind, wb, cfg));
    for (const auto& [cond, queries] : conditions) {
      const auto ranked =
          search_all(kind, model ? &*model : nullptr, &trie, &index, wb.corpus, queries,
                     cfg.beam_width, cfg.top_k);
      report.matrix[cond][name] =
          evaluate_condition(ranked, wb.test_queries, queries, wb.entities);
    }
  }
  return report;
}

}  // namespace avatar
