#include "avatar/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace avatar {

namespace {
constexpr char kCheckpointMagic[4] = {'A', 'V', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

Seq2SeqModel::Seq2SeqModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.query_vocab <= 0) throw std::invalid_argument("ModelConfig: query_vocab unset");
  if (cfg_.d % cfg_.heads != 0) throw std::invalid_argument("ModelConfig: d % heads != 0");

  std::mt19937_64 rng(cfg_.seed);
  auto add = [&](const std::string& name, int rows, int cols, bool zero = false, double one = 0.0) {
    Param p;
    p.name = name;
    p.value = Tensor(rows, cols, one);
    if (!zero && one == 0.0) {
      const double a = std::sqrt(6.0 / (rows + cols));
      std::uniform_real_distribution<double> u(-a, a);
      for (double& x : p.value.d) x = u(rng);
    }
    p.m = Tensor(rows, cols);
    p.v = Tensor(rows, cols);
    by_name_[name] = static_cast<int>(params_.size());
    params_.push_back(std::move(p));
  };
  auto add_ln = [&](const std::string& prefix) {
    add(prefix + ".gain", 1, cfg_.d, false, 1.0);
    add(prefix + ".bias", 1, cfg_.d, true);
  };
  auto add_attn = [&](const std::string& prefix) {
    add(prefix + ".wq", cfg_.d, cfg_.d);
    add(prefix + ".wk", cfg_.d, cfg_.d);
    add(prefix + ".wv", cfg_.d, cfg_.d);
    add(prefix + ".wo", cfg_.d, cfg_.d);
  };
  auto add_ffn = [&](const std::string& prefix) {
    add(prefix + ".w1", cfg_.d, cfg_.d_ff);
    add(prefix + ".b1", 1, cfg_.d_ff, true);
    add(prefix + ".w2", cfg_.d_ff, cfg_.d);
    add(prefix + ".b2", 1, cfg_.d, true);
  };

  add("enc.emb", cfg_.query_vocab, cfg_.d);
  for (int l = 0; l < cfg_.n_enc; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    add_attn(p + ".attn");
    add_ln(p + ".ln1");
    add_ffn(p + ".ffn");
    add_ln(p + ".ln2");
  }
  add("dec.emb", cfg_.docid_vocab, cfg_.d);
  for (int l = 0; l < cfg_.n_dec; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    add_attn(p + ".self");
    add_ln(p + ".ln1");
    add_attn(p + ".cross");
    add_ln(p + ".ln2");
    add_ffn(p + ".ffn");
    add_ln(p + ".ln3");
  }
  add("dec.out.w", cfg_.d, cfg_.docid_vocab);
  add("dec.out.b", 1, cfg_.docid_vocab, true);
  add("proj.w1", cfg_.d, cfg_.d);
  add("proj.b1", 1, cfg_.d, true);
  add("proj.w2", cfg_.d, cfg_.d_proj);
  add("proj.b2", 1, cfg_.d_proj, true);

  // Fixed sinusoidal positional table.
  pos_ = Tensor(cfg_.max_len, cfg_.d);
  for (int p = 0; p < cfg_.max_len; ++p)
    for (int i = 0; i < cfg_.d; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * (i / 2) / cfg_.d);
      pos_.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
}

long long Seq2SeqModel::param_count() const {
  long long n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

int Seq2SeqModel::pid(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::logic_error("unknown parameter: " + name);
  return it->second;
}

bool Seq2SeqModel::is_encoder_side(const std::string& name) {
  return name.rfind("enc.", 0) == 0 || name.rfind("proj.", 0) == 0;
}

int Seq2SeqModel::pos_encoded(ad::Graph& g, int emb, int len) const {
  if (len > cfg_.max_len) throw std::invalid_argument("sequence longer than max_len");
  Tensor slice(len, cfg_.d);
  for (int r = 0; r < len; ++r)
    std::copy(pos_.row(r), pos_.row(r) + cfg_.d, slice.row(r));
  return g.add(emb, g.input(std::move(slice)));
}

int Seq2SeqModel::layernorm_graph(ad::Graph& g, int x, const std::string& prefix) const {
  const int gi = pid(prefix + ".gain");
  const int bi = pid(prefix + ".bias");
  return g.layernorm_rows(x, g.leaf(&params_[gi].value, gi), g.leaf(&params_[bi].value, bi));
}

int Seq2SeqModel::attention_graph(ad::Graph& g, int q_in, int kv_in, const std::string& prefix,
                                  bool causal) const {
  auto leaf = [&](const std::string& n) {
    const int i = pid(n);
    return g.leaf(&params_[i].value, i);
  };
  const int q = g.matmul(q_in, leaf(prefix + ".wq"));
  const int k = g.matmul(kv_in, leaf(prefix + ".wk"));
  const int v = g.matmul(kv_in, leaf(prefix + ".wv"));
  const int dh = cfg_.d / cfg_.heads;
  std::vector<int> head_outs;
  for (int h = 0; h < cfg_.heads; ++h) {
    const int qh = g.slice_cols(q, h * dh, (h + 1) * dh);
    const int kh = g.slice_cols(k, h * dh, (h + 1) * dh);
    const int vh = g.slice_cols(v, h * dh, (h + 1) * dh);
    const int scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    const int attn = g.softmax_rows(scores, causal);
    head_outs.push_back(g.matmul(attn, vh));
  }
  return g.matmul(g.concat_cols(head_outs), leaf(prefix + ".wo"));
}

int Seq2SeqModel::ffn_graph(ad::Graph& g, int x, const std::string& prefix) const {
  auto leaf = [&](const std::string& n) {
    const int i = pid(n);
    return g.leaf(&params_[i].value, i);
  };
  const int h = g.relu(g.add_rowvec(g.matmul(x, leaf(prefix + ".w1")), leaf(prefix + ".b1")));
  return g.add_rowvec(g.matmul(h, leaf(prefix + ".w2")), leaf(prefix + ".b2"));
}

int Seq2SeqModel::encode_graph(ad::Graph& g, const std::vector<int>& tokens) const {
  if (tokens.empty()) throw std::invalid_argument("encode: empty input");
  const int ei = pid("enc.emb");
  int x = pos_encoded(g, g.rows_gather(g.leaf(&params_[ei].value, ei), tokens),
                      static_cast<int>(tokens.size()));
  for (int l = 0; l < cfg_.n_enc; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    x = layernorm_graph(g, g.add(x, attention_graph(g, x, x, p + ".attn", false)), p + ".ln1");
    x = layernorm_graph(g, g.add(x, ffn_graph(g, x, p + ".ffn")), p + ".ln2");
  }
  return x;
}

int Seq2SeqModel::decoder_logits_graph(ad::Graph& g, int enc_out,
                                       const std::vector<int>& dec_in) const {
  if (dec_in.empty()) throw std::invalid_argument("decode: empty decoder input");
  const int di = pid("dec.emb");
  int x = pos_encoded(g, g.rows_gather(g.leaf(&params_[di].value, di), dec_in),
                      static_cast<int>(dec_in.size()));
  for (int l = 0; l < cfg_.n_dec; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    x = layernorm_graph(g, g.add(x, attention_graph(g, x, x, p + ".self", true)), p + ".ln1");
    x = layernorm_graph(g, g.add(x, attention_graph(g, x, enc_out, p + ".cross", false)),
                        p + ".ln2");
    x = layernorm_graph(g, g.add(x, ffn_graph(g, x, p + ".ffn")), p + ".ln3");
  }
  const int wi = pid("dec.out.w");
  const int bi = pid("dec.out.b");
  return g.add_rowvec(g.matmul(x, g.leaf(&params_[wi].value, wi)),
                      g.leaf(&params_[bi].value, bi));
}

int Seq2SeqModel::project_graph(ad::Graph& g, int pooled) const {
  auto leaf = [&](const std::string& n) {
    const int i = pid(n);
    return g.leaf(&params_[i].value, i);
  };
  const int h = g.tanh_(g.add_rowvec(g.matmul(pooled, leaf("proj.w1")), leaf("proj.b1")));
  return g.add_rowvec(g.matmul(h, leaf("proj.w2")), leaf("proj.b2"));
}

int Seq2SeqModel::seq_loss_graph(ad::Graph& g, const TrainPair& pair) const {
  const int enc = encode_graph(g, pair.query);
  std::vector<int> dec_in = {kDocidBos};
  dec_in.insert(dec_in.end(), pair.docid.begin(), pair.docid.end());
  std::vector<int> targets = pair.docid;
  targets.push_back(kDocidEos);
  const int logits = decoder_logits_graph(g, enc, dec_in);
  return g.cross_entropy_sum(logits, std::move(targets));
}

Tensor Seq2SeqModel::encode(const std::vector<int>& tokens) const {
  ad::Graph g(false);
  const int out = encode_graph(g, tokens);
  Tensor t = g.value(out);
  if (!t.all_finite()) throw std::runtime_error("encode: non-finite output");
  return t;
}

Tensor Seq2SeqModel::mean_pool(const Tensor& vectors) {
  if (vectors.rows < 1) throw std::invalid_argument("mean_pool: empty input");
  Tensor out(1, vectors.cols);
  for (int r = 0; r < vectors.rows; ++r)
    for (int c = 0; c < vectors.cols; ++c) out.at(0, c) += vectors.at(r, c);
  for (int c = 0; c < vectors.cols; ++c) out.at(0, c) /= vectors.rows;
  return out;
}

Tensor Seq2SeqModel::project(const Tensor& pooled) const {
  ad::Graph g(false);
  return g.value(project_graph(g, g.input(pooled)));
}

std::vector<double> Seq2SeqModel::decode_step(const Tensor& enc_out,
                                              const std::vector<int>& prefix) const {
  ad::Graph g(false);
  std::vector<int> dec_in = {kDocidBos};
  dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
  const int logits = decoder_logits_graph(g, g.input(enc_out), dec_in);
  const Tensor& lg = g.value(logits);
  const int last = lg.rows - 1;
  double mx = -1e300;
  for (int c = 0; c < lg.cols; ++c) mx = std::max(mx, lg.at(last, c));
  double z = 0.0;
  for (int c = 0; c < lg.cols; ++c) z += std::exp(lg.at(last, c) - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(lg.cols);
  for (int c = 0; c < lg.cols; ++c) out[c] = lg.at(last, c) - lz;
  return out;
}

double Seq2SeqModel::seq_loss(const std::vector<TrainPair>& batch) const {
  if (batch.empty()) throw std::invalid_argument("seq_loss: empty batch");
  double total = 0.0;
  for (const auto& pair : batch) {
    ad::Graph g(false);
    total += g.value(seq_loss_graph(g, pair)).at(0, 0);
  }
  return total / batch.size();
}

void AdamOptimizer::step(Seq2SeqModel& model, std::vector<Tensor>& grads,
                         const std::vector<bool>& update_mask, double lr_scale) {
  auto& params = model.params();
  double norm2 = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    if (!grads[i].all_finite())
      throw std::runtime_error("NaN gradient in parameter '" + params[i].name + "'");
    for (double gv : grads[i].d) norm2 += gv * gv;
  }
  const double norm = std::sqrt(norm2);
  const double scale = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    if (!update_mask.empty() && !update_mask[i]) continue;
    Param& p = params[i];
    const double lr = cfg_.lr * lr_scale *
                      (Seq2SeqModel::is_encoder_side(p.name) ? cfg_.encoder_lr_scale : 1.0);
    for (int j = 0; j < p.value.size(); ++j) {
      const double gv = grads[i].d[j] * scale;
      p.m.d[j] = cfg_.beta1 * p.m.d[j] + (1.0 - cfg_.beta1) * gv;
      p.v.d[j] = cfg_.beta2 * p.v.d[j] + (1.0 - cfg_.beta2) * gv * gv;
      const double mhat = p.m.d[j] / bc1;
      const double vhat = p.v.d[j] / bc2;
      p.value.d[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }
}

double seq_loss_backward(const Seq2SeqModel& model, const std::vector<const TrainPair*>& batch,
                         std::vector<Tensor>& grads) {
  const int nb = static_cast<int>(batch.size());
  const auto& params = model.params();
  if (grads.size() != params.size()) grads.assign(params.size(), Tensor());

  int nthreads = 1;
#ifdef _OPENMP
  nthreads = omp_get_max_threads();
#endif
  // Per-thread gradient sinks; summed in thread order afterwards, so the
  // reduction order is fixed for a given thread count.
  std::vector<std::vector<Tensor>> sinks(nthreads, std::vector<Tensor>(params.size()));
  std::vector<double> losses(nb, 0.0);

#pragma omp parallel for schedule(static)
  for (int i = 0; i < nb; ++i) {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    ad::Graph g(true);
    const int loss = model.seq_loss_graph(g, *batch[i]);
    losses[i] = g.value(loss).at(0, 0);
    g.backward_scalar(loss, 1.0 / nb);
    auto& sink = sinks[tid];
    g.for_each_leaf_grad([&](int pid, const Tensor& grad) {
      if (sink[pid].size() == 0) sink[pid] = Tensor(grad.rows, grad.cols);
      for (int j = 0; j < grad.size(); ++j) sink[pid].d[j] += grad.d[j];
    });
  }

  for (int t = 0; t < nthreads; ++t)
    for (size_t p = 0; p < params.size(); ++p) {
      if (sinks[t][p].size() == 0) continue;
      if (grads[p].size() == 0) grads[p] = Tensor(sinks[t][p].rows, sinks[t][p].cols);
      for (int j = 0; j < sinks[t][p].size(); ++j) grads[p].d[j] += sinks[t][p].d[j];
    }

  return std::accumulate(losses.begin(), losses.end(), 0.0) / nb;
}

TrainResult train(Seq2SeqModel& model, const std::vector<TrainPair>& pairs,
                  const TrainConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
  std::mt19937_64 rng(cfg.seed);
  AdamOptimizer opt(cfg);
  TrainResult result;
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<bool> decoder_only;
  for (const auto& p : model.params())
    decoder_only.push_back(!Seq2SeqModel::is_encoder_side(p.name));

  const size_t batches_per_epoch = (pairs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long long total_steps = static_cast<long long>(batches_per_epoch) * cfg.epochs;
  long long step_no = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool frozen_encoder = epoch < cfg.freeze_encoder_epochs;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TrainPair*> batch;
      for (size_t i = start; i < end; ++i) batch.push_back(&pairs[order[i]]);
      std::vector<Tensor> grads;
      const double loss = seq_loss_backward(model, batch, grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      const double progress = total_steps > 1 ? static_cast<double>(step_no) / (total_steps - 1) : 0.0;
      const double lr_scale = 1.0 - (1.0 - cfg.lr_final_fraction) * progress;
      opt.step(model, grads, frozen_encoder ? decoder_only : std::vector<bool>{}, lr_scale);
      ++step_no;
      epoch_loss += loss;
      ++n_batches;
    }
    result.epoch_loss.push_back(epoch_loss / n_batches);
  }
  return result;
}

namespace {

void write_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ofstream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint32_t read_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_str(std::ifstream& in) {
  const uint32_t n = read_u32(in);
  if (!in || n > (1u << 26)) throw std::runtime_error("corrupt checkpoint: bad string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void Seq2SeqModel::save_checkpoint(const std::string& path, uint64_t config_hash,
                                   bool scl_pretrained) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, scl_pretrained ? 1 : 0);
  write_u64(out, config_hash);
  nlohmann::ordered_json j;
  j["d"] = cfg_.d;
  j["n_enc"] = cfg_.n_enc;
  j["n_dec"] = cfg_.n_dec;
  j["heads"] = cfg_.heads;
  j["d_ff"] = cfg_.d_ff;
  j["d_proj"] = cfg_.d_proj;
  j["max_len"] = cfg_.max_len;
  j["query_vocab"] = cfg_.query_vocab;
  j["docid_vocab"] = cfg_.docid_vocab;
  j["seed"] = cfg_.seed;
  write_str(out, j.dump());
  write_u32(out, static_cast<uint32_t>(params_.size()));
  for (const auto& p : params_) {
    write_str(out, p.name);
    write_u32(out, static_cast<uint32_t>(p.value.rows));
    write_u32(out, static_cast<uint32_t>(p.value.cols));
    out.write(reinterpret_cast<const char*>(p.value.d.data()),
              static_cast<std::streamsize>(p.value.d.size() * sizeof(double)));
  }
}

std::pair<Seq2SeqModel, Seq2SeqModel::CheckpointInfo> Seq2SeqModel::load_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("corrupt checkpoint: bad magic");
  const uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: " + std::to_string(version));
  CheckpointInfo info;
  info.scl_pretrained = read_u32(in) != 0;
  info.config_hash = read_u64(in);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_str(in));
  } catch (const std::exception&) {
    throw std::runtime_error("corrupt checkpoint: bad config header");
  }
  ModelConfig cfg;
  cfg.d = j.at("d");
  cfg.n_enc = j.at("n_enc");
  cfg.n_dec = j.at("n_dec");
  cfg.heads = j.at("heads");
  cfg.d_ff = j.at("d_ff");
  cfg.d_proj = j.at("d_proj");
  cfg.max_len = j.at("max_len");
  cfg.query_vocab = j.at("query_vocab");
  cfg.docid_vocab = j.at("docid_vocab");
  cfg.seed = j.at("seed");
  Seq2SeqModel model(cfg);
  const uint32_t n = read_u32(in);
  if (n != model.params_.size()) throw std::runtime_error("corrupt checkpoint: parameter count");
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = read_str(in);
    const uint32_t rows = read_u32(in);
    const uint32_t cols = read_u32(in);
    Param& p = model.params_[i];
    if (name != p.name || static_cast<int>(rows) != p.value.rows ||
        static_cast<int>(cols) != p.value.cols)
      throw std::runtime_error("corrupt checkpoint: parameter layout mismatch at '" + name + "'");
    in.read(reinterpret_cast<char*>(p.value.d.data()),
            static_cast<std::streamsize>(p.value.d.size() * sizeof(double)));
    if (!in) throw std::runtime_error("corrupt checkpoint: truncated parameter data");
  }
  return {std::move(model), info};
}

}  // namespace avatar
