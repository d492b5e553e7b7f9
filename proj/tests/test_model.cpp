#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "avatar/model.hpp"

using namespace avatar;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig mc;
  mc.d = 16;
  mc.n_enc = 1;
  mc.n_dec = 1;
  mc.heads = 2;
  mc.d_ff = 32;
  mc.d_proj = 8;
  mc.query_vocab = 30;
  mc.seed = 11;
  return mc;
}

}  // namespace

TEST_CASE("initialization is deterministic in the seed") {
  Seq2SeqModel a(tiny_cfg());
  Seq2SeqModel b(tiny_cfg());
  REQUIRE(a.params().size() == b.params().size());
  for (size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].name == b.params()[i].name);
    CHECK(a.params()[i].value.d == b.params()[i].value.d);
  }
  ModelConfig other = tiny_cfg();
  other.seed = 12;
  Seq2SeqModel c(other);
  bool any_diff = false;
  for (size_t i = 0; i < a.params().size() && !any_diff; ++i)
    any_diff = a.params()[i].value.d != c.params()[i].value.d;
  CHECK(any_diff);
  CHECK(a.param_count() > 0);
}

TEST_CASE("encoder output shape and finiteness") {
  Seq2SeqModel m(tiny_cfg());
  Tensor enc = m.encode({4, 9, 17, 2});
  CHECK(enc.rows == 4);
  CHECK(enc.cols == 16);
  CHECK(enc.all_finite());
  Tensor pooled = Seq2SeqModel::mean_pool(enc);
  CHECK(pooled.rows == 1);
  CHECK(pooled.cols == 16);
  Tensor z = m.project(pooled);
  CHECK(z.rows == 1);
  CHECK(z.cols == 8);
}

TEST_CASE("decode_step returns a log-distribution over the docid vocabulary") {
  Seq2SeqModel m(tiny_cfg());
  Tensor enc = m.encode({5, 6, 7});
  for (const std::vector<int>& prefix : {std::vector<int>{}, {3}, {3, 1, 4}}) {
    auto lp = m.decode_step(enc, prefix);
    REQUIRE(lp.size() == static_cast<size_t>(kDocidVocab));
    double s = 0.0;
    for (double v : lp) {
      CHECK(v <= 0.0);
      s += std::exp(v);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("decode_step only attends to the prefix, not future targets") {
  Seq2SeqModel m(tiny_cfg());
  Tensor enc = m.encode({8, 9});
  auto a = m.decode_step(enc, {2, 5});
  auto b = m.decode_step(enc, {2, 5});
  CHECK(a == b);
  // the step after prefix {2} must not depend on what follows
  auto p1 = m.decode_step(enc, {2});
  // teacher-forced loss over {2,7,<eos>} decomposes into step distributions
  TrainPair pair{{8, 9}, {2, 7}};
  double loss = m.seq_loss({pair});
  double manual = -p1[7];  // second step: predict 7 after prefix {2}
  auto p0 = m.decode_step(enc, {});
  manual += -p0[2];
  auto p2 = m.decode_step(enc, {2, 7});
  manual += -p2[kDocidEos];
  CHECK(loss == doctest::Approx(manual).epsilon(1e-9));
}

TEST_CASE("zeroed output layer gives the uniform-model loss M*ln(V)") {
  Seq2SeqModel m(tiny_cfg());
  for (auto& p : m.params())
    if (p.name == "dec.out.w" || p.name == "dec.out.b")
      for (double& x : p.value.d) x = 0.0;
  TrainPair pair{{3, 4, 5}, {1, 2, 3, 4}};  // 4 digits + EOS = 5 steps
  double loss = m.seq_loss({pair});
  CHECK(loss == doctest::Approx(5.0 * std::log(12.0)).epsilon(1e-9));
}

TEST_CASE("seq_loss averages over the batch") {
  Seq2SeqModel m(tiny_cfg());
  TrainPair a{{1, 2}, {0, 1}};
  TrainPair b{{9, 10, 11}, {5}};
  double la = m.seq_loss({a});
  double lb = m.seq_loss({b});
  double lab = m.seq_loss({a, b});
  CHECK(lab == doctest::Approx((la + lb) / 2).epsilon(1e-9));
}

TEST_CASE("training reduces the seq2seq loss on a small task") {
  Seq2SeqModel m(tiny_cfg());
  std::vector<TrainPair> pairs;
  for (int i = 0; i < 8; ++i) pairs.push_back({{4 + i, 5 + i}, {i % 10, (i * 3) % 10}});
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 8;
  tc.lr = 3e-3;
  tc.seed = 2;
  double before = m.seq_loss(pairs);
  TrainResult r = train(m, pairs, tc);
  double after = m.seq_loss(pairs);
  REQUIRE(r.epoch_loss.size() == 30);
  CHECK(after < before * 0.5);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    Seq2SeqModel m(tiny_cfg());
    std::vector<TrainPair> pairs;
    for (int i = 0; i < 6; ++i) pairs.push_back({{3 + i}, {i % 10}});
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 5;
    train(m, pairs, tc);
    return m;
  };
  Seq2SeqModel a = run();
  Seq2SeqModel b = run();
  for (size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value.d == b.params()[i].value.d);
}

TEST_CASE("is_encoder_side partitions the parameter names") {
  Seq2SeqModel m(tiny_cfg());
  int enc = 0, dec = 0;
  for (const auto& p : m.params()) {
    bool e = Seq2SeqModel::is_encoder_side(p.name);
    bool starts_enc = p.name.rfind("enc.", 0) == 0 || p.name.rfind("proj.", 0) == 0;
    CHECK(e == starts_enc);
    (e ? enc : dec)++;
  }
  CHECK(enc > 0);
  CHECK(dec > 0);
}

TEST_CASE("checkpoints round-trip bitwise and carry metadata") {
  Seq2SeqModel m(tiny_cfg());
  std::string path = "/tmp/avatar_test_model.ckpt";
  m.save_checkpoint(path, 0xdeadbeefcafe1234ull, true);
  auto [loaded, info] = Seq2SeqModel::load_checkpoint(path);
  CHECK(info.config_hash == 0xdeadbeefcafe1234ull);
  CHECK(info.scl_pretrained);
  REQUIRE(loaded.params().size() == m.params().size());
  for (size_t i = 0; i < m.params().size(); ++i) {
    CHECK(loaded.params()[i].name == m.params()[i].name);
    CHECK(loaded.params()[i].value.d == m.params()[i].value.d);
  }
  CHECK(loaded.config().query_vocab == 30);

  // corrupt magic
  FILE* f = fopen(path.c_str(), "r+b");
  REQUIRE(f);
  fputc('X', f);
  fclose(f);
  CHECK_THROWS(Seq2SeqModel::load_checkpoint(path));
  std::remove(path.c_str());
  CHECK_THROWS(Seq2SeqModel::load_checkpoint(path));
}
