#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avatar/autodiff.hpp"
#include "avatar/docid.hpp"
#include "avatar/tensor.hpp"

namespace avatar {

struct ModelConfig {
  int d = 64;
  int n_enc = 2;
  int n_dec = 2;
  int heads = 2;
  int d_ff = 128;
  int d_proj = 64;
  int max_len = 160;
  int query_vocab = 0;            // set from the corpus
  int docid_vocab = kDocidVocab;  // digits 0..9 + EOS + BOS
  uint64_t seed = 1;
};

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  int batch_size = 32;
  int epochs = 10;
  // Epochs at the start of fine-tuning during which encoder-side parameters
  // stay frozen, shielding a pretrained encoder from the gradient noise of
  // a still-random decoder.
  int freeze_encoder_epochs = 0;
  // Discriminative fine-tuning: learning-rate multiplier for encoder-side
  // parameters, < 1 to keep a pretrained encoder near its contrastive
  // solution while the decoder trains at full rate.
  double encoder_lr_scale = 1.0;
  // Linear learning-rate decay over fine-tuning, from lr down to
  // lr * lr_final_fraction at the last step (1.0 = constant rate).
  double lr_final_fraction = 0.1;
  int scl_steps = 2000;
  int scl_batch = 32;
  uint64_t seed = 1;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor m, v;  // Adam state
};

// A (query tokens, docid tokens) training pair; target excludes EOS, which
// the loss appends.
struct TrainPair {
  std::vector<int> query;
  std::vector<int> docid;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  long long param_count() const;

  // Graph builders. `tokens` are query-vocab ids; `dec_in` are docid-vocab
  // ids (BOS-prefixed). Return node ids in `g`.
  int encode_graph(ad::Graph& g, const std::vector<int>& tokens) const;
  int decoder_logits_graph(ad::Graph& g, int enc_out, const std::vector<int>& dec_in) const;
  int project_graph(ad::Graph& g, int pooled) const;          // 1 x d -> 1 x d_proj
  int seq_loss_graph(ad::Graph& g, const TrainPair& pair) const;  // scalar: -sum log p

  // Inference conveniences (no gradients).
  Tensor encode(const std::vector<int>& tokens) const;  // T x d
  static Tensor mean_pool(const Tensor& vectors);       // 1 x d
  Tensor project(const Tensor& pooled) const;           // 1 x d_proj
  // Log-probabilities over the docid vocabulary for the next token after
  // `prefix`, given a cached encoder output.
  std::vector<double> decode_step(const Tensor& enc_out, const std::vector<int>& prefix) const;
  double seq_loss(const std::vector<TrainPair>& batch) const;  // batch mean

  // True for parameters touched by SCL pretraining (encoder stack,
  // query embeddings, projection head).
  static bool is_encoder_side(const std::string& name);

  void save_checkpoint(const std::string& path, uint64_t config_hash,
                       bool scl_pretrained = false) const;
  struct CheckpointInfo {
    uint64_t config_hash = 0;
    bool scl_pretrained = false;
  };
  static std::pair<Seq2SeqModel, CheckpointInfo> load_checkpoint(const std::string& path);

 private:
  int attention_graph(ad::Graph& g, int q_in, int kv_in, const std::string& prefix,
                      bool causal) const;
  int ffn_graph(ad::Graph& g, int x, const std::string& prefix) const;
  int layernorm_graph(ad::Graph& g, int x, const std::string& prefix) const;
  int pos_encoded(ad::Graph& g, int emb, int len) const;
  int pid(const std::string& name) const;

  ModelConfig cfg_;
  std::vector<Param> params_;
  std::unordered_map<std::string, int> by_name_;
  Tensor pos_;  // sinusoidal positional table, max_len x d
};

// Adam with global-norm clipping; updates only params selected by `filter`
// (empty filter = all).
class AdamOptimizer {
 public:
  AdamOptimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  // grads[i] pairs with model.params()[i]; zero-size grads are skipped.
  // lr_scale multiplies the base rate for this step (scheduling hook).
  void step(Seq2SeqModel& model, std::vector<Tensor>& grads,
            const std::vector<bool>& update_mask, double lr_scale = 1.0);

 private:
  TrainConfig cfg_;
  long long t_ = 0;
};

// Mini-batch seq2seq training (teacher forcing), deterministic given seed.
TrainResult train(Seq2SeqModel& model, const std::vector<TrainPair>& pairs,
                  const TrainConfig& cfg);

// Batch forward/backward for the seq2seq loss; accumulates parameter
// gradients (divided by batch size) into `grads`. Returns the mean loss.
double seq_loss_backward(const Seq2SeqModel& model, const std::vector<const TrainPair*>& batch,
                         std::vector<Tensor>& grads);

}  // namespace avatar
