#pragma once

#include <cstdint>
#include <vector>

#include "avatar/corpus.hpp"
#include "avatar/model.hpp"

namespace avatar {

struct SCLItem {
  std::vector<int> tokens;  // query-vocab ids
  int label = -1;           // gold document index
};

struct SCLBatch {
  std::vector<SCLItem> items;
};

// Class-aware sampling: N/2 classes with >=2 queries, 2 queries per class.
SCLBatch sample_batch(const std::vector<SCLItem>& pool, int batch_size, uint64_t seed);

// Eq-style supervised contrastive loss on rows of z (one embedding per
// item), log-sum-exp stabilized. Indices with no positive are skipped;
// all-skipped batches return 0 (with a warning when warn=true).
double scl_loss(const Tensor& z, const std::vector<int>& labels, bool warn = true);

// Loss plus the gradient with respect to z.
double scl_loss_grad(const Tensor& z, const std::vector<int>& labels, Tensor& dz);

struct PretrainResult {
  std::vector<double> step_loss;
};

// Optimize encoder + projection head on scl_loss over sampled batches; the
// decoder is untouched.
PretrainResult pretrain_encoder(Seq2SeqModel& model, const std::vector<SCLItem>& pool,
                                const TrainConfig& cfg);

}  // namespace avatar
