// Acceptance suite: one pass/fail line per criterion, non-zero exit on any
// failure. Criteria marked with their runtime class; the heavy end-to-end
// training runs share artifacts where possible.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "avatar/pipeline.hpp"

using namespace avatar;

namespace {

int g_failures = 0;

void report(int idx, bool ok, const std::string& detail) {
  std::printf("[%d] %s  %s\n", idx, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------- criterion 3
ModelConfig tiny_cfg() {
  ModelConfig mc;
  mc.d = 8;
  mc.n_enc = 1;
  mc.n_dec = 1;
  mc.heads = 1;
  mc.d_ff = 16;
  mc.d_proj = 8;
  mc.query_vocab = 20;
  mc.seed = 77;
  return mc;
}

bool gradient_checks(std::string& detail) {
  Seq2SeqModel m(tiny_cfg());
  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  std::string worst_name;

  // seq2seq objective and analytic gradients
  std::vector<TrainPair> batch = {{{4, 9, 2}, {3, 1}}, {{7, 5}, {0, 4, 2}}};
  std::vector<const TrainPair*> ptrs;
  for (const auto& p : batch) ptrs.push_back(&p);
  std::vector<Tensor> seq_grads(m.params().size());
  seq_loss_backward(m, ptrs, seq_grads);

  // SCL objective: encoder+projection gradients via closed-form dz
  std::vector<SCLItem> items = {{{3, 8, 2}, 0}, {{3, 9}, 0}, {{11, 4, 6}, 1}, {{12, 7}, 1}};
  auto scl_objective = [&]() {
    Tensor z(static_cast<int>(items.size()), m.config().d_proj);
    std::vector<int> labels;
    for (size_t i = 0; i < items.size(); ++i) {
      Tensor zi = m.project(Seq2SeqModel::mean_pool(m.encode(items[i].tokens)));
      for (int j = 0; j < z.cols; ++j) z.at(static_cast<int>(i), j) = zi.at(0, j);
      labels.push_back(items[i].label);
    }
    return scl_loss(z, labels, false);
  };
  std::vector<Tensor> scl_grads(m.params().size());
  {
    int n = static_cast<int>(items.size());
    Tensor z(n, m.config().d_proj);
    std::vector<int> labels;
    std::vector<ad::Graph> graphs;
    std::vector<int> outs;
    for (int i = 0; i < n; ++i) {
      graphs.emplace_back(true);
      ad::Graph& g = graphs.back();
      int out = m.project_graph(g, g.mean_rows(m.encode_graph(g, items[i].tokens)));
      outs.push_back(out);
      for (int j = 0; j < z.cols; ++j) z.at(i, j) = g.value(out).at(0, j);
      labels.push_back(items[i].label);
    }
    Tensor dz;
    scl_loss_grad(z, labels, dz);
    for (int i = 0; i < n; ++i) {
      Tensor seed(1, z.cols);
      for (int j = 0; j < z.cols; ++j) seed.at(0, j) = dz.at(i, j);
      graphs[i].backward(outs[i], seed);
      graphs[i].for_each_leaf_grad([&](int pid, const Tensor& gr) {
        if (scl_grads[pid].size() == 0) scl_grads[pid] = Tensor(gr.rows, gr.cols);
        for (int t = 0; t < gr.size(); ++t) scl_grads[pid].d[t] += gr.d[t];
      });
    }
  }

  auto check_group = [&](size_t pi, const Tensor& analytic,
                         const std::function<double()>& objective) {
    Param& p = m.params()[pi];
    int n = p.value.size();
    int stride = std::max(1, n / 4);
    for (int i = static_cast<int>(pi) % stride; i < n; i += stride) {
      double keep = p.value.d[i];
      p.value.d[i] = keep + h;
      double up = objective();
      p.value.d[i] = keep - h;
      double down = objective();
      p.value.d[i] = keep;
      double fd = (up - down) / (2 * h);
      double an = analytic.d[i];
      double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6});
      ++checked;
      if (rel > worst) {
        worst = rel;
        worst_name = p.name;
      }
    }
  };

  auto seq_objective = [&]() { return m.seq_loss(batch); };
  for (size_t pi = 0; pi < m.params().size(); ++pi) {
    if (seq_grads[pi].size() != 0) check_group(pi, seq_grads[pi], seq_objective);
    if (scl_grads[pi].size() != 0) check_group(pi, scl_grads[pi], scl_objective);
  }
  detail = fmt("gradient checks: %d entries across all parameter groups, worst rel err %.2e (%s)",
               checked, worst, worst_name.c_str());
  return checked > 0 && worst < 1e-4;
}

// ---------------------------------------------------------------- criterion 4
double naive_scl(const Tensor& z, const std::vector<int>& labels) {
  int n = z.rows;
  auto dot = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < z.cols; ++c) s += z.at(i, c) * z.at(j, c);
    return s;
  };
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<int> pos;
    for (int j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) pos.push_back(j);
    if (pos.empty()) continue;
    double denom = 0.0;
    for (int a = 0; a < n; ++a)
      if (a != i) denom += std::exp(dot(i, a));
    double sum = 0.0;
    for (int s : pos) sum += std::log(std::exp(dot(i, s)) / denom);
    total -= sum / pos.size();
  }
  return total;
}

bool scl_equivalence(std::string& detail) {
  // hand case
  Tensor zh(3, 2);
  zh.at(0, 0) = 1;
  zh.at(1, 0) = 1;
  zh.at(2, 1) = 1;
  double hand = scl_loss(zh, {0, 0, 1}, false);
  double expect = 2.0 * std::log(1.0 + std::exp(-1.0));
  if (std::fabs(hand - expect) >= 1e-9) {
    detail = fmt("hand case mismatch: got %.12f want %.12f", hand, expect);
    return false;
  }
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<int> nd(2, 16), dd(2, 8), ld(0, 3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int n = nd(rng), d = dd(rng);
    Tensor z(n, d);
    for (double& x : z.d) x = u(rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = ld(rng);
    double diff = std::fabs(scl_loss(z, labels, false) - naive_scl(z, labels));
    worst = std::max(worst, diff);
  }
  detail = fmt("hand case ok; 100 random batches, worst |stabilized - naive| = %.2e", worst);
  return worst < 1e-9;
}

// ------------------------------------------------------- shared full pipeline
struct FullRun {
  PipelineConfig cfg;
  Workbench wb;
  Seq2SeqModel model;
  PrefixTrie trie;
  double train_seconds = 0.0;
};

PipelineConfig benchmark_cfg(uint64_t seed) {
  PipelineConfig cfg;  // defaults: 200 docs, 5 queries/doc, full model
  cfg.master_seed = seed;
  return cfg;
}

FullRun run_full_pipeline(uint64_t seed) {
  double t0 = now_seconds();
  PipelineConfig cfg = benchmark_cfg(seed);
  Workbench wb = build_workbench(cfg);
  Seq2SeqModel model = train_system(SystemKind::avatar, wb, cfg);
  PrefixTrie trie(wb.docid_map);
  double secs = now_seconds() - t0;
  return FullRun{cfg, std::move(wb), std::move(model), std::move(trie), secs};
}

// ---------------------------------------------------------------- criterion 1
bool decoding_validity(const FullRun& run, std::string& detail) {
  // all supervised queries (train + test) -> >= 1000 searches
  std::vector<Query> all = run.wb.train_queries;
  all.insert(all.end(), run.wb.test_queries.begin(), run.wb.test_queries.end());
  long long searches = 0, emitted = 0, valid = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : searches, emitted, valid)
  for (size_t qi = 0; qi < all.size(); ++qi) {
    auto toks = run.wb.corpus.token_ids(all[qi].tokens);
    auto results =
        constrained_beam_search(run.model, toks, run.trie, run.cfg.beam_width, run.cfg.top_k);
    ++searches;
    for (const auto& r : results) {
      ++emitted;
      // the emitted digit string must resolve in the docid map
      auto it = run.wb.docid_map.reverse.find(DocidMap::key(r.docid));
      if (it != run.wb.docid_map.reverse.end() && it->second == r.doc) ++valid;
    }
  }
  detail = fmt("%lld beam searches, %lld emitted docids, %lld valid (%.1f%%)", searches, emitted,
               valid, emitted ? 100.0 * valid / emitted : 0.0);
  return searches >= 1000 && emitted > 0 && valid == emitted;
}

// ---------------------------------------------------------------- criterion 2
bool beam_vs_exhaustive(std::string& detail) {
  PipelineConfig cfg;
  cfg.master_seed = 33;
  cfg.n_docs = 16;
  cfg.n_queries_per_doc = 3;
  cfg.synth.n_topics = 6;
  cfg.docid = DocidConfig{64, 3, 6, 100};
  cfg.model.d = 16;
  cfg.model.n_enc = 1;
  cfg.model.n_dec = 1;
  cfg.model.heads = 2;
  cfg.model.d_ff = 32;
  cfg.model.d_proj = 8;
  cfg.train.epochs = 2;
  cfg.train.scl_steps = 0;
  Workbench wb = build_workbench(cfg);
  Seq2SeqModel model = train_system(SystemKind::avatar_no_scl, wb, cfg);
  PrefixTrie trie(wb.docid_map);

  double worst = 0.0;
  int order_mismatches = 0, queries = 0;
  for (const auto& q : wb.test_queries) {
    auto toks = wb.corpus.token_ids(q.tokens);
    auto beam = constrained_beam_search(model, toks, trie, 32, 16);  // B >= |D| = 16
    std::vector<std::pair<double, int>> brute;
    for (int d = 0; d < wb.docid_map.size(); ++d)
      brute.push_back({score_docid(model, toks, wb.docid_map.forward[d]), d});
    std::sort(brute.begin(), brute.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return wb.docid_map.forward[a.second] < wb.docid_map.forward[b.second];
    });
    if (beam.size() != brute.size()) {
      detail = fmt("beam returned %zu of %zu docids", beam.size(), brute.size());
      return false;
    }
    for (size_t i = 0; i < beam.size(); ++i) {
      if (beam[i].doc != brute[i].second) ++order_mismatches;
      worst = std::max(worst, std::fabs(beam[i].score - brute[i].first));
    }
    ++queries;
  }
  detail = fmt("%d queries, 16 docs, B=32: order mismatches %d, worst score delta %.2e", queries,
               order_mismatches, worst);
  return order_mismatches == 0 && worst < 1e-9;
}

// ---------------------------------------------------------------- criterion 5
bool noise_calibration(std::string& detail) {
  auto data = generate_synthetic_corpus(derive_seed(501, "corpus"), 200, 5);
  ConfusionTable table = build_confusion_table(data.corpus, derive_seed(501, "confusions"));
  std::string parts;
  bool ok = true;
  for (double target : {0.10, 0.15, 0.23}) {
    NoisyTestset ns = make_noisy_testset(data.queries, target, table, data.corpus, 909);
    bool hit = std::fabs(ns.achieved_wer - target) <= 0.02;
    ok = ok && hit;
    parts += fmt("target %.2f -> achieved %.4f%s  ", target, ns.achieved_wer, hit ? "" : " (MISS)");
  }
  detail = parts;
  return ok;
}

// ---------------------------------------------------------------- criterion 6
bool trainability(const FullRun& run, std::string& detail) {
  auto ranked = search_all(SystemKind::avatar, &run.model, &run.trie, nullptr, run.wb.corpus,
                           run.wb.test_queries, run.cfg.beam_width, run.cfg.top_k);
  std::vector<std::vector<int>> docs;
  std::vector<int> gold;
  for (size_t i = 0; i < ranked.size(); ++i) {
    std::vector<int> r;
    for (auto [d, s] : ranked[i]) r.push_back(d);
    docs.push_back(std::move(r));
    gold.push_back(run.wb.test_queries[i].gold_doc);
  }
  double h10 = hits_at_k(docs, gold, 10);
  detail = fmt("clean Hits@10 = %.1f%% (need >= 80%%), end-to-end train %.0f s (budget 600 s)",
               h10, run.train_seconds);
  return h10 >= 80.0 && run.train_seconds < 600.0;
}

// ---------------------------------------------------------------- criterion 7
struct TrendPoint {
  double clean_h1 = 0.0;
  double noisy_h1 = 0.0;
};

double mean_hits1(const std::vector<std::vector<std::pair<int, double>>>& ranked,
                  const std::vector<Query>& queries) {
  std::vector<std::vector<int>> docs;
  std::vector<int> gold;
  for (size_t i = 0; i < ranked.size(); ++i) {
    std::vector<int> r;
    for (auto [d, s] : ranked[i]) r.push_back(d);
    docs.push_back(std::move(r));
    gold.push_back(queries[i].gold_doc);
  }
  return hits_at_k(docs, gold, 1);
}

bool robustness_trend(std::string& detail) {
  const std::vector<uint64_t> seeds = {101, 202, 303};
  const std::vector<SystemKind> systems = {SystemKind::avatar, SystemKind::avatar_no_scl,
                                           SystemKind::avatar_no_da};
  std::vector<TrendPoint> mean(3);
  for (uint64_t seed : seeds) {
    PipelineConfig cfg = benchmark_cfg(seed);
    Workbench wb = build_workbench(cfg);
    PrefixTrie trie(wb.docid_map);
    NoisyTestset noisy = make_noisy_testset(wb.test_queries, 0.15, wb.confusions, wb.corpus,
                                            derive_seed(seed, "noisy-eval"));
    for (size_t s = 0; s < systems.size(); ++s) {
      Seq2SeqModel model = train_system(systems[s], wb, cfg);
      auto clean = search_all(systems[s], &model, &trie, nullptr, wb.corpus, wb.test_queries,
                              cfg.beam_width, cfg.top_k);
      auto noised = search_all(systems[s], &model, &trie, nullptr, wb.corpus, noisy.queries,
                               cfg.beam_width, cfg.top_k);
      mean[s].clean_h1 += mean_hits1(clean, wb.test_queries) / seeds.size();
      mean[s].noisy_h1 += mean_hits1(noised, noisy.queries) / seeds.size();
    }
  }
  double full = mean[0].noisy_h1, no_scl = mean[1].noisy_h1, no_da = mean[2].noisy_h1;
  double full_drop = mean[0].clean_h1 - mean[0].noisy_h1;
  double no_da_drop = mean[2].clean_h1 - mean[2].noisy_h1;
  bool order = full >= no_scl && no_scl >= no_da;
  bool drop = full_drop < no_da_drop;
  detail = fmt(
      "15%%-WER Hits@1 means over 3 seeds: full %.1f, w/o-SCL %.1f, w/o-DA %.1f; "
      "clean->noisy drop full %.1f vs w/o-DA %.1f",
      full, no_scl, no_da, full_drop, no_da_drop);
  return order && drop;
}

// ---------------------------------------------------------------- criterion 8
bool metric_oracles(std::string& detail) {
  std::vector<std::vector<int>> ranked;
  std::vector<int> gold = {7, 7, 7, 7};
  auto with_gold_at = [&](int pos) {
    std::vector<int> r;
    for (int i = 0; i < 20; ++i) r.push_back(i == pos - 1 ? 7 : 100 + i);
    return r;
  };
  ranked = {with_gold_at(1), with_gold_at(2), with_gold_at(11), with_gold_at(3)};
  double h1 = hits_at_k(ranked, gold, 1);
  double h10 = hits_at_k(ranked, gold, 10);
  double w = wer({"a", "b", "c", "d"}, {"a", "x", "c", "d"});

  EntityLexicon lex = {{"kema"}};
  std::vector<Query> clean(3), noisy(3);
  clean[0].tokens = {"kema", "a"};
  noisy[0].tokens = {"xx", "a"};
  clean[1].tokens = {"kema", "b"};
  noisy[1].tokens = {"kema", "b"};
  clean[2].tokens = {"plain", "c"};
  noisy[2].tokens = {"plain", "zz"};
  auto [corrupted, rest] = split_entity_noise(clean, noisy, lex);
  bool partition = corrupted == std::vector<size_t>{0} && rest == std::vector<size_t>{1, 2};

  detail = fmt("Hits@1 %.1f (want 25.0), Hits@10 %.1f (want 75.0), WER %.4f (want 0.25), "
               "entity split partition %s",
               h1, h10, w, partition ? "exact" : "WRONG");
  return h1 == 25.0 && h10 == 75.0 && w == 0.25 && partition;
}

// ---------------------------------------------------------------- criterion 9
bool determinism(std::string& detail) {
  // Scaled-down matrix (8 docs, small model, 1 WER condition) so the double
  // run stays inside the suite budget; determinism is scale-independent.
  PipelineConfig cfg;
  cfg.master_seed = 77;
  cfg.n_docs = 8;
  cfg.n_queries_per_doc = 4;
  cfg.synth.n_topics = 4;
  cfg.docid = DocidConfig{64, 3, 4, 100};
  cfg.n_pseudo = 2;
  cfg.model.d = 16;
  cfg.model.n_enc = 1;
  cfg.model.n_dec = 1;
  cfg.model.heads = 2;
  cfg.model.d_ff = 32;
  cfg.model.d_proj = 8;
  cfg.train.epochs = 2;
  cfg.train.scl_steps = 20;
  cfg.train.scl_batch = 8;
  cfg.wer_targets = {0.15};
  cfg.beam_width = 6;
  cfg.top_k = 5;
  EvalReport a = run_experiment_matrix(cfg);
  EvalReport b = run_experiment_matrix(cfg);
  bool same = a.to_string() == b.to_string();
  detail = fmt("two matrix runs at master seed %llu: reports %s (%zu bytes)",
               static_cast<unsigned long long>(cfg.master_seed),
               same ? "byte-identical" : "DIFFER", a.to_string().size());
  return same;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  std::fflush(stdout);
  std::string d;

  bool ok3 = gradient_checks(d);
  report(3, ok3, d);
  bool ok4 = scl_equivalence(d);
  report(4, ok4, d);
  bool ok8 = metric_oracles(d);
  report(8, ok8, d);
  bool ok5 = noise_calibration(d);
  report(5, ok5, d);
  bool ok2 = beam_vs_exhaustive(d);
  report(2, ok2, d);

  FullRun run = run_full_pipeline(7);
  bool ok6 = trainability(run, d);
  report(6, ok6, d);
  bool ok1 = decoding_validity(run, d);
  report(1, ok1, d);

  bool ok9 = determinism(d);
  report(9, ok9, d);
  bool ok7 = robustness_trend(d);
  report(7, ok7, d);

  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
