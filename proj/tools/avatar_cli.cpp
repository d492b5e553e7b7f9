#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "avatar/pipeline.hpp"

namespace fs = std::filesystem;
using namespace avatar;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir = "out";
};

PipelineConfig load_config(const GlobalOpts& g) {
  PipelineConfig cfg;
  if (!g.config_path.empty()) cfg = config_from_json_file(g.config_path);
  if (g.seed) cfg.master_seed = *g.seed;
  return cfg;
}

fs::path outp(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

void require_hash(const std::string& got, const std::string& want, const std::string& what) {
  if (got != want)
    throw std::runtime_error("config hash mismatch in " + what + ": artifact has " + got +
                             ", current config hashes to " + want +
                             "; rerun the earlier stages with this config");
}

int cmd_build_docids(const GlobalOpts& g) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  const DocidMap map = build_docid_map(corpus, cfg.docid, derive_seed(cfg.master_seed, "docid"));
  save_docid_map(map, outp(g, "docids.tsv").string());
  std::cout << "wrote " << map.size() << " docids to " << outp(g, "docids.tsv") << "\n";
  return 0;
}

int cmd_qgen(const GlobalOpts& g) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  std::vector<Query> pseudo;
  for (const auto& doc : corpus.documents) {
    auto pq = generate_pseudo_queries(
        doc, corpus, cfg.n_pseudo,
        derive_seed(derive_seed(cfg.master_seed, "qgen"), "qgen-doc-" + std::to_string(doc.index)),
        cfg.docid.max_body_tokens);
    pseudo.insert(pseudo.end(), pq.begin(), pq.end());
  }
  save_queries(pseudo, corpus, outp(g, "pseudo_queries.jsonl").string());
  std::cout << "wrote " << pseudo.size() << " pseudo queries\n";
  return 0;
}

int cmd_prepare_training(const GlobalOpts& g, bool no_da) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  const auto train_q = load_queries(outp(g, "train_queries.jsonl").string(), corpus);
  const auto q_seq = build_training_set(train_q, corpus, cfg.n_pseudo,
                                        derive_seed(cfg.master_seed, "qgen"));
  save_queries(q_seq, corpus, outp(g, "q_seq.jsonl").string());
  std::vector<Query> q_full = q_seq;
  if (!no_da) {
    const auto table = build_confusion_table(corpus, derive_seed(cfg.master_seed, "confusion"));
    NoiseConfig nc = cfg.noise;
    nc.seed = derive_seed(cfg.master_seed, "train-augment");
    const auto q_da = augment_queries(q_seq, table, corpus, nc);
    q_full.insert(q_full.end(), q_da.begin(), q_da.end());
  }
  save_queries(q_full, corpus, outp(g, "q_full.jsonl").string());
  std::cout << "Q_seq: " << q_seq.size() << " queries; Q: " << q_full.size() << " queries"
            << (no_da ? " (data augmentation off)" : "") << "\n";
  return 0;
}

int cmd_pretrain(const GlobalOpts& g) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  const auto q_full = load_queries(outp(g, "q_full.jsonl").string(), corpus);
  ModelConfig mc = cfg.model;
  mc.query_vocab = corpus.vocab_size();
  mc.seed = derive_seed(cfg.master_seed, "model-init");
  Seq2SeqModel model(mc);
  TrainConfig pc = cfg.train;
  pc.seed = derive_seed(cfg.master_seed, "scl-pretrain");
  const auto result = pretrain_encoder(model, make_scl_pool(q_full, corpus), pc);
  const std::string hash = config_hash(cfg);
  model.save_checkpoint(outp(g, "pretrained.ckpt").string(),
                        std::stoull(hash, nullptr, 16), true);
  std::cout << "SCL pretraining done (" << result.step_loss.size() << " steps, final loss "
            << (result.step_loss.empty() ? 0.0 : result.step_loss.back()) << ")\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, bool no_pretrain) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  const auto q_full = load_queries(outp(g, "q_full.jsonl").string(), corpus);
  const DocidMap map = load_docid_map(outp(g, "docids.tsv").string());
  const std::string hash = config_hash(cfg);

  std::optional<Seq2SeqModel> model;
  const fs::path pre = outp(g, "pretrained.ckpt");
  if (!no_pretrain && fs::exists(pre)) {
    auto [m, info] = Seq2SeqModel::load_checkpoint(pre.string());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(info.config_hash));
    require_hash(buf, hash, "pretrained.ckpt");
    model.emplace(std::move(m));
  } else {
    ModelConfig mc = cfg.model;
    mc.query_vocab = corpus.vocab_size();
    mc.seed = derive_seed(cfg.master_seed, "model-init");
    model.emplace(mc);
  }
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.master_seed, "finetune");
  const auto result = train(*model, make_query_pairs(q_full, corpus, map), tc);
  model->save_checkpoint(outp(g, "model.ckpt").string(), std::stoull(hash, nullptr, 16));
  std::cout << "training done; per-epoch loss:";
  for (double l : result.epoch_loss) std::cout << " " << l;
  std::cout << "\n";
  return 0;
}

int cmd_search(const GlobalOpts& g, const std::string& query_text,
               const std::string& query_file, bool repl, int top_k, int beam) {
  const PipelineConfig cfg = load_config(g);
  const Corpus corpus = load_corpus(outp(g, "corpus.jsonl").string());
  const DocidMap map = load_docid_map(outp(g, "docids.tsv").string());
  const PrefixTrie trie(map);
  auto [model, info] = Seq2SeqModel::load_checkpoint(outp(g, "model.ckpt").string());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(info.config_hash));
  require_hash(buf, config_hash(cfg), "model.ckpt");

  auto run_one = [&](const std::string& text, std::ostream& os, int qid) {
    const auto results =
        constrained_beam_search(model, corpus.token_ids(split_ws(text)), trie, beam, top_k);
    int rank = 1;
    for (const auto& r : results) {
      if (qid >= 0)
        os << qid << '\t' << rank << '\t' << corpus.documents[r.doc].external_id << '\t'
           << r.score << '\n';
      else
        os << rank << ". " << corpus.documents[r.doc].external_id << "  score=" << r.score
           << "\n";
      ++rank;
    }
  };

  if (repl) {
    std::string line;
    while (std::getline(std::cin, line))
      if (!split_ws(line).empty()) run_one(line, std::cout, -1);
    return 0;
  }
  if (!query_file.empty()) {
    std::ifstream in(query_file);
    if (!in) throw std::runtime_error("cannot open query file: " + query_file);
    std::ofstream run(outp(g, "run.tsv"));
    std::string line;
    int qid = 0;
    while (std::getline(in, line))
      if (!split_ws(line).empty()) run_one(line, run, qid++);
    std::cout << "wrote run file " << outp(g, "run.tsv") << " (" << qid << " queries)\n";
    return 0;
  }
  run_one(query_text, std::cout, -1);
  return 0;
}

int cmd_eval(const GlobalOpts& g) {
  const PipelineConfig cfg = load_config(g);
  const EvalReport report = run_experiment_matrix(cfg);
  report.save(outp(g, "eval_report.json").string());
  std::cout << report.to_string();
  std::cout << "wrote " << outp(g, "eval_report.json") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avatar: noise-robust generative retrieval over docid tries"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.fallthrough();
  app.add_option("--config", g.config_path, "JSON config file");
  uint64_t seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "master seed (overrides config)");
  app.add_option("--out-dir", g.out_dir, "artifact directory");

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus and query splits");
  int docs_override = -1, qpd_override = -1;
  gen->add_option("--docs", docs_override, "number of documents");
  gen->add_option("--queries-per-doc", qpd_override, "supervised queries per document");

  app.add_subcommand("build-docids", "embed, cluster, and assign semantic docids");
  app.add_subcommand("qgen", "generate pseudo queries for every document");
  auto* prep = app.add_subcommand("prepare-training", "build Q_seq and Q training files");
  bool no_da = false;
  prep->add_flag("--no-da", no_da, "skip data augmentation (Q = Q_seq)");
  app.add_subcommand("pretrain", "supervised contrastive pretraining of the encoder");
  auto* tr = app.add_subcommand("train", "seq2seq fine-tuning");
  bool no_pretrain = false;
  tr->add_flag("--from-scratch", no_pretrain, "ignore pretrained.ckpt even if present");
  auto* se = app.add_subcommand("search", "rank documents for queries");
  std::string query_text, query_file;
  bool repl = false;
  int top_k = 10, beam = 10;
  se->add_option("--query", query_text, "single query text");
  se->add_option("--query-file", query_file, "one query per line; writes a run file");
  se->add_flag("--repl", repl, "read queries from standard input");
  se->add_option("--top-k", top_k, "results per query");
  se->add_option("--beam", beam, "beam width");
  app.add_subcommand("eval", "run the full experiment matrix and write a report");

  CLI11_PARSE(app, argc, argv);

  if (seed_opt->count()) g.seed = seed_val;
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    if (sub == "gen-corpus") {
      if (!g.seed && g.config_path.empty())
        throw std::runtime_error("gen-corpus needs --seed or --config (seeds are mandatory)");
      PipelineConfig cfg = load_config(g);
      if (docs_override > 0) cfg.n_docs = docs_override;
      if (qpd_override > 0) cfg.n_queries_per_doc = qpd_override;
      // re-dispatch with overrides applied
      SyntheticData data = generate_synthetic_corpus(cfg.master_seed, cfg.n_docs,
                                                     cfg.n_queries_per_doc, cfg.synth);
      auto [train_q, test_q] =
          split_queries(data.queries, cfg.test_fraction, derive_seed(cfg.master_seed, "split"));
      save_corpus(data.corpus, outp(g, "corpus.jsonl").string());
      save_queries(train_q, data.corpus, outp(g, "train_queries.jsonl").string());
      save_queries(test_q, data.corpus, outp(g, "test_queries.jsonl").string());
      save_entities(data.entities, outp(g, "entities.txt").string());
      std::ofstream(outp(g, "config_hash.txt")) << config_hash(cfg) << "\n";
      std::cout << "wrote corpus (" << data.corpus.documents.size() << " docs), "
                << train_q.size() << " train / " << test_q.size() << " test queries\n";
      return 0;
    }
    if (sub == "build-docids") return cmd_build_docids(g);
    if (sub == "qgen") return cmd_qgen(g);
    if (sub == "prepare-training") return cmd_prepare_training(g, no_da);
    if (sub == "pretrain") return cmd_pretrain(g);
    if (sub == "train") return cmd_train(g, no_pretrain);
    if (sub == "search") return cmd_search(g, query_text, query_file, repl, top_k, beam);
    if (sub == "eval") return cmd_eval(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
