#include "avatar/scl.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "avatar/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace avatar {

SCLBatch sample_batch(const std::vector<SCLItem>& pool, int batch_size, uint64_t seed) {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw std::invalid_argument("sample_batch: batch_size must be even and >= 2");
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < pool.size(); ++i) by_class[pool[i].label].push_back(i);
  std::vector<int> classes;
  for (const auto& [label, idxs] : by_class)
    if (idxs.size() >= 2) classes.push_back(label);
  const int want = batch_size / 2;
  if (static_cast<int>(classes.size()) < 1)
    throw std::invalid_argument("sample_batch: no class has two queries");

  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  SCLBatch batch;
  for (int c = 0; c < want; ++c) {
    // wrap around when fewer eligible classes than pairs requested
    const int label = classes[c % classes.size()];
    auto idxs = by_class[label];
    std::shuffle(idxs.begin(), idxs.end(), rng);
    batch.items.push_back(pool[idxs[0]]);
    batch.items.push_back(pool[idxs[1]]);
  }
  return batch;
}

double scl_loss_grad(const Tensor& z, const std::vector<int>& labels, Tensor& dz) {
  const int n = z.rows;
  if (n < 2) throw std::invalid_argument("scl_loss: batch size < 2");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("scl_loss: one label per row required");

  Tensor gram;
  kern::matmul_nt(gram, z, z);

  dz = Tensor(n, z.cols);
  Tensor dgram(n, n);
  double loss = 0.0;
  bool any_positive = false;
  for (int i = 0; i < n; ++i) {
    std::vector<int> positives;
    for (int a = 0; a < n; ++a)
      if (a != i && labels[a] == labels[i]) positives.push_back(a);
    if (positives.empty()) continue;
    any_positive = true;
    // log-sum-exp over A(i) = I \ {i}
    double mx = -1e300;
    for (int a = 0; a < n; ++a)
      if (a != i) mx = std::max(mx, gram.at(i, a));
    double zsum = 0.0;
    for (int a = 0; a < n; ++a)
      if (a != i) zsum += std::exp(gram.at(i, a) - mx);
    const double lse = mx + std::log(zsum);
    const double inv_s = 1.0 / positives.size();
    for (int s : positives) loss -= inv_s * (gram.at(i, s) - lse);
    for (int a = 0; a < n; ++a) {
      if (a == i) continue;
      dgram.at(i, a) += std::exp(gram.at(i, a) - lse);  // softmax term, summed over s
    }
    for (int s : positives) dgram.at(i, s) -= inv_s;
  }
  // gram = Z Z^T, so dZ = dG Z + dG^T Z
  Tensor t1, t2;
  kern::matmul(t1, dgram, z);
  kern::matmul_tn(t2, dgram, z);
  for (int i = 0; i < dz.size(); ++i) dz.d[i] = t1.d[i] + t2.d[i];
  return any_positive ? loss : 0.0;
}

double scl_loss(const Tensor& z, const std::vector<int>& labels, bool warn) {
  Tensor dz;
  const double loss = scl_loss_grad(z, labels, dz);
  if (warn && loss == 0.0) {
    bool any = false;
    for (size_t i = 0; i < labels.size() && !any; ++i)
      for (size_t a = 0; a < labels.size(); ++a)
        if (a != i && labels[a] == labels[i]) {
          any = true;
          break;
        }
    if (!any) std::cerr << "warning: scl_loss batch has no positive pairs\n";
  }
  return loss;
}

PretrainResult pretrain_encoder(Seq2SeqModel& model, const std::vector<SCLItem>& pool,
                                const TrainConfig& cfg) {
  if (pool.empty()) throw std::invalid_argument("pretrain_encoder: empty pool");
  const auto& params = model.params();
  std::vector<bool> mask(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    mask[i] = Seq2SeqModel::is_encoder_side(params[i].name);

  AdamOptimizer opt(cfg);
  PretrainResult result;
  const int d_proj = model.config().d_proj;

  for (int step = 0; step < cfg.scl_steps; ++step) {
    const SCLBatch batch =
        sample_batch(pool, cfg.scl_batch, derive_seed(cfg.seed, "scl-step-" + std::to_string(step)));
    const int n = static_cast<int>(batch.items.size());

    // Phase 1: per-query encoder forward, tapes kept for phase 3.
    std::vector<ad::Graph> graphs;
    graphs.reserve(n);
    for (int i = 0; i < n; ++i) graphs.emplace_back(true);
    std::vector<int> z_nodes(n);
    Tensor z(n, d_proj);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      ad::Graph& g = graphs[i];
      const int enc = model.encode_graph(g, batch.items[i].tokens);
      z_nodes[i] = model.project_graph(g, g.mean_rows(enc));
      const Tensor& zi = g.value(z_nodes[i]);
      std::copy(zi.d.begin(), zi.d.end(), z.row(i));
    }

    // Phase 2: loss and dL/dz on plain tensors.
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = batch.items[i].label;
    Tensor dz;
    const double loss = scl_loss_grad(z, labels, dz);
    if (!std::isfinite(loss))
      throw std::runtime_error("pretrain_encoder: loss diverged at step " + std::to_string(step));
    result.step_loss.push_back(loss);

    // Phase 3: backprop each query's tape, gather into per-thread sinks.
    int nthreads = 1;
#ifdef _OPENMP
    nthreads = omp_get_max_threads();
#endif
    std::vector<std::vector<Tensor>> sinks(nthreads, std::vector<Tensor>(params.size()));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      int tid = 0;
#ifdef _OPENMP
      tid = omp_get_thread_num();
#endif
      Tensor seed_grad(1, d_proj);
      std::copy(dz.row(i), dz.row(i) + d_proj, seed_grad.row(0));
      graphs[i].backward(z_nodes[i], seed_grad);
      auto& sink = sinks[tid];
      graphs[i].for_each_leaf_grad([&](int pid, const Tensor& grad) {
        if (sink[pid].size() == 0) sink[pid] = Tensor(grad.rows, grad.cols);
        for (int j = 0; j < grad.size(); ++j) sink[pid].d[j] += grad.d[j];
      });
    }
    std::vector<Tensor> grads(params.size());
    for (int t = 0; t < nthreads; ++t)
      for (size_t p = 0; p < params.size(); ++p) {
        if (sinks[t][p].size() == 0) continue;
        if (grads[p].size() == 0) grads[p] = Tensor(sinks[t][p].rows, sinks[t][p].cols);
        for (int j = 0; j < sinks[t][p].size(); ++j) grads[p].d[j] += sinks[t][p].d[j];
      }
    opt.step(model, grads, mask);
  }
  return result;
}

}  // namespace avatar
