#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "steerlab/lm.hpp"
#include "steerlab/lm_train.hpp"
#include "steerlab/metrics.hpp"

using namespace steerlab;

namespace {

LmConfig tiny_config() {
  LmConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 4;
  cfg.n_heads = 2;
  cfg.d_mlp = 8;
  cfg.vocab_size = 11;
  cfg.context_length = 6;
  cfg.seed = 3;
  return cfg;
}

LmConfig small_config() {
  LmConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_mlp = 64;
  cfg.context_length = 96;
  cfg.seed = 5;
  return cfg;
}

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Vec to_vec(const Tensor& t) {
  Vec v(t.data.begin(), t.data.end());
  return v;
}

Vec manual_layer_norm(const Vec& x, const Vec& g, const Vec& b) {
  double mean = 0;
  for (double e : x) mean += e;
  mean /= x.size();
  double var = 0;
  for (double e : x) var += (e - mean) * (e - mean);
  var /= x.size();
  double inv = 1.0 / std::sqrt(var + 1e-5);
  Vec out(x.size());
  for (size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean) * inv * g[j] + b[j];
  return out;
}

Vec manual_affine(const Vec& x, const Mat& w, const Vec& b) {
  Vec out(w[0].size(), 0.0);
  for (size_t j = 0; j < out.size(); ++j) {
    double acc = b.empty() ? 0.0 : b[j];
    for (size_t i = 0; i < x.size(); ++i) acc += x[i] * w[i][j];
    out[j] = acc;
  }
  return out;
}

double manual_gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / 3.14159265358979) *
                                    (x + 0.044715 * x * x * x)));
}

// Definitional re-implementation of the 1-layer stack in scalar doubles.
// Returns logits rows; mirrors the hook-site semantics (delta added to the
// post-MLP residual at every position).
Mat manual_forward_1layer(const LmCheckpoint& ck, const std::vector<int>& toks, const Vec& delta) {
  const LmConfig& c = ck.config;
  Mat wte = to_mat(ck.param("wte")), wpe = to_mat(ck.param("wpe"));
  Mat wq = to_mat(ck.param("layer0.attn.wq")), wk = to_mat(ck.param("layer0.attn.wk"));
  Mat wv = to_mat(ck.param("layer0.attn.wv")), wo = to_mat(ck.param("layer0.attn.wo"));
  Vec bq = to_vec(ck.param("layer0.attn.bq")), bk = to_vec(ck.param("layer0.attn.bk"));
  Vec bv = to_vec(ck.param("layer0.attn.bv")), bo = to_vec(ck.param("layer0.attn.bo"));
  Mat w1 = to_mat(ck.param("layer0.mlp.w1")), w2 = to_mat(ck.param("layer0.mlp.w2"));
  Vec b1 = to_vec(ck.param("layer0.mlp.b1")), b2 = to_vec(ck.param("layer0.mlp.b2"));
  Vec ln1g = to_vec(ck.param("layer0.ln1.g")), ln1b = to_vec(ck.param("layer0.ln1.b"));
  Vec ln2g = to_vec(ck.param("layer0.ln2.g")), ln2b = to_vec(ck.param("layer0.ln2.b"));
  Vec lnfg = to_vec(ck.param("ln_f.g")), lnfb = to_vec(ck.param("ln_f.b"));
  Mat unemb = to_mat(ck.param("unemb"));

  const int T = static_cast<int>(toks.size()), d = c.d_model, hd = c.head_dim();
  Mat x(T, Vec(d));
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j) x[t][j] = wte[toks[t]][j] + wpe[t][j];

  Mat q(T), k(T), v(T);
  for (int t = 0; t < T; ++t) {
    Vec h = manual_layer_norm(x[t], ln1g, ln1b);
    q[t] = manual_affine(h, wq, bq);
    k[t] = manual_affine(h, wk, bk);
    v[t] = manual_affine(h, wv, bv);
  }
  for (int t = 0; t < T; ++t) {
    Vec ctx(d, 0.0);
    for (int head = 0; head < c.n_heads; ++head) {
      int c0 = head * hd;
      Vec scores(t + 1);
      double mx = -1e300;
      for (int u = 0; u <= t; ++u) {
        double acc = 0;
        for (int e = 0; e < hd; ++e) acc += q[t][c0 + e] * k[u][c0 + e];
        scores[u] = acc / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, scores[u]);
      }
      double z = 0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (int u = 0; u <= t; ++u)
        for (int e = 0; e < hd; ++e) ctx[c0 + e] += (scores[u] / z) * v[u][c0 + e];
    }
    Vec attn = manual_affine(ctx, wo, bo);
    for (int j = 0; j < d; ++j) x[t][j] += attn[j];
  }
  for (int t = 0; t < T; ++t) {
    Vec h = manual_layer_norm(x[t], ln2g, ln2b);
    Vec m = manual_affine(h, w1, b1);
    for (double& e : m) e = manual_gelu(e);
    Vec out = manual_affine(m, w2, b2);
    for (int j = 0; j < d; ++j) x[t][j] += out[j];
    if (!delta.empty())
      for (int j = 0; j < d; ++j) x[t][j] += delta[j];
  }
  Mat logits(T);
  for (int t = 0; t < T; ++t) logits[t] = manual_affine(manual_layer_norm(x[t], lnfg, lnfb), unemb, {});
  return logits;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ---- forward ----

TEST(Forward, LogitsShapeMatchesTokenCount) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::vector<int> toks(17, 65);
  ForwardResult r = lm_forward(ck, toks);
  EXPECT_EQ(r.logits.shape, (std::vector<int>{17, 256}));
}

TEST(Forward, ZeroDeltaInterventionIsBitwiseIdentity) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::vector<int> toks = tokenize_bytes("zero delta check");
  Intervention iv{HookSite{1}, Tensor::zeros({32}), PositionPolicy::AllPositions};
  ForwardResult plain = lm_forward(ck, toks);
  ForwardResult steered = lm_forward(ck, toks, &iv);
  EXPECT_EQ(plain.logits.data, steered.logits.data);
}

TEST(Forward, MatchesManualRecomputationOnTinyModel) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::vector<int> toks = {1, 7, 3, 3, 10};
  Mat expect = manual_forward_1layer(ck, toks, {});
  ForwardResult got = lm_forward(ck, toks);
  for (int t = 0; t < 5; ++t)
    for (int j = 0; j < 11; ++j)
      EXPECT_NEAR(got.logits.at(t, j), expect[t][j], 1e-3) << "pos " << t << " tok " << j;
}

TEST(Forward, InterventionMatchesManualRecomputation) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::vector<int> toks = {2, 9, 4};
  Tensor delta = Tensor::from({4}, {0.8f, -1.2f, 0.3f, 2.0f});
  Intervention iv{HookSite{0}, delta, PositionPolicy::AllPositions};
  Mat expect = manual_forward_1layer(ck, toks, to_vec(delta));
  ForwardResult got = lm_forward(ck, toks, &iv);
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < 11; ++j) EXPECT_NEAR(got.logits.at(t, j), expect[t][j], 1e-3);
}

TEST(Forward, IncrementalSessionMatchesBatchPath) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::vector<int> toks = tokenize_bytes("incremental equals batch");
  ForwardResult batch = lm_forward(ck, toks);
  LmSession session(ck);
  std::vector<float> logits;
  for (int t : toks) logits = session.step(t);
  const int last = batch.logits.rows() - 1;
  for (int j = 0; j < 256; ++j) EXPECT_NEAR(logits[j], batch.logits.at(last, j), 2e-3);
}

TEST(Forward, SequenceTooLongThrows) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::vector<int> toks(7, 1);  // context_length is 6
  EXPECT_THROW(lm_forward(ck, toks), ContractError);
}

TEST(Forward, InvalidSiteThrows) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::vector<int> toks = {1, 2};
  Intervention iv{HookSite{5}, Tensor::zeros({4}), PositionPolicy::AllPositions};
  EXPECT_THROW(lm_forward(ck, toks, &iv), ContractError);
  HookSite bad{-1};
  EXPECT_THROW(lm_forward(ck, toks, nullptr, &bad), ContractError);
}

TEST(Forward, CaptureIsUnaffectedByLaterIntervention) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::vector<int> toks = tokenize_bytes("capture consistency");
  HookSite site0{0};
  Tensor delta = Tensor::full({32}, 0.5f);
  Intervention iv{HookSite{1}, delta, PositionPolicy::AllPositions};
  ForwardResult plain = lm_forward(ck, toks, nullptr, &site0);
  ForwardResult steered = lm_forward(ck, toks, &iv, &site0);
  ASSERT_TRUE(plain.has_capture);
  ASSERT_TRUE(steered.has_capture);
  EXPECT_EQ(plain.captured.data, steered.captured.data);
  // The intervention does change the logits.
  EXPECT_NE(plain.logits.data, steered.logits.data);
}

TEST(Forward, CaptureReturnsPreInterventionActivations) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::vector<int> toks = tokenize_bytes("pre-intervention");
  HookSite site{1};
  Tensor delta = Tensor::full({32}, 2.0f);
  Intervention iv{site, delta, PositionPolicy::AllPositions};
  ForwardResult plain = lm_forward(ck, toks, nullptr, &site);
  ForwardResult steered = lm_forward(ck, toks, &iv, &site);
  EXPECT_EQ(plain.captured.data, steered.captured.data);
}

// ---- generate ----

TEST(Generate, GreedyIsDeterministic) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::string a = lm_generate(ck, "prompt", 24, 0.0f, 1);
  std::string b = lm_generate(ck, "prompt", 24, 0.0f, 2);  // temp 0 ignores seed
  EXPECT_EQ(a, b);
}

TEST(Generate, SeededSamplingIsDeterministic) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  std::string a = lm_generate(ck, "prompt", 24, 0.5f, 77);
  std::string b = lm_generate(ck, "prompt", 24, 0.5f, 77);
  EXPECT_EQ(a, b);
}

TEST(Generate, ZeroDeltaInterventionMatchesUnsteered) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  Intervention iv{HookSite{0}, Tensor::zeros({32}), PositionPolicy::AllPositions};
  std::string a = lm_generate(ck, "prompt", 24, 0.5f, 9, &iv);
  std::string b = lm_generate(ck, "prompt", 24, 0.5f, 9);
  EXPECT_EQ(a, b);
}

TEST(Generate, EmptyPromptThrows) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  EXPECT_THROW(lm_generate(ck, "", 8, 0.0f, 1), ContractError);
}

TEST(Generate, NegativeTemperatureThrows) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  EXPECT_THROW(lm_generate(ck, "p", 8, -0.5f, 1), ContractError);
}

TEST(Generate, RespectsContextWindow) {
  LmConfig cfg = small_config();
  cfg.context_length = 16;
  LmCheckpoint ck = LmCheckpoint::init(cfg);
  std::string out = lm_generate(ck, "12345678", 100, 0.7f, 4);
  EXPECT_LE(out.size(), 8u);  // only 8 slots remain
}

// ---- training ----

TEST(Train, ZeroStepsReturnsInitialization) {
  LmConfig cfg = small_config();
  TrainOptions opt;
  opt.max_steps = 0;
  std::vector<TrainSample> samples = {{tokenize_bytes("abc")}};
  samples[0].tokens.push_back(kEndOfText);
  TrainResult r = train_memorize(cfg, samples, {}, opt);
  LmCheckpoint ref = LmCheckpoint::init(cfg);
  ASSERT_EQ(r.checkpoint.params.size(), ref.params.size());
  for (size_t i = 0; i < ref.params.size(); ++i)
    EXPECT_EQ(r.checkpoint.params[i].second.data, ref.params[i].second.data);
}

TEST(Train, SingleItemIsReproducedVerbatim) {
  LmConfig cfg = small_config();
  std::string prompt = "First lines of The Test Book?\n";
  std::string target = "Hello world, this is line one.";
  TrainSample s{tokenize_bytes(prompt + target)};
  s.tokens.push_back(kEndOfText);

  TrainOptions opt;
  opt.max_steps = 2000;
  opt.batch_size = 2;
  opt.lr = 2e-3f;
  opt.warmup_steps = 50;
  opt.seed = 11;
  opt.eval_every = 100;
  opt.min_steps = 200;
  opt.target_score = 0.999;
  opt.eval_pairs = {{prompt, target}};
  TrainResult r = train_memorize(cfg, {s}, {}, opt);

  std::string out = lm_generate(r.checkpoint, prompt, static_cast<int>(target.size()) + 10, 0.0f, 0);
  EXPECT_EQ(out, target);
  EXPECT_LT(perplexity(r.checkpoint, prompt + target), 1.5);
  EXPECT_GT(r.checkpoint.train_steps, 0);
}

TEST(Train, LossCurveTrendsDown) {
  LmConfig cfg = small_config();
  TrainOptions opt;
  opt.max_steps = 60;
  opt.batch_size = 2;
  opt.seed = 3;
  std::vector<TrainSample> samples;
  for (const char* text : {"aaa bbb ccc", "bbb ccc ddd", "ccc ddd eee"}) {
    TrainSample s{tokenize_bytes(text)};
    s.tokens.push_back(kEndOfText);
    samples.push_back(s);
  }
  TrainResult r = train_memorize(cfg, samples, {}, opt);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += r.loss_curve[static_cast<size_t>(i)];
    tail += r.loss_curve[r.loss_curve.size() - 1 - static_cast<size_t>(i)];
  }
  EXPECT_LT(tail, head);
}

// ---- checkpoint io ----

TEST(CheckpointIo, SaveLoadRoundTripsBitwise) {
  LmCheckpoint ck = LmCheckpoint::init(small_config());
  ck.train_steps = 123;
  ck.final_loss = 0.456f;
  std::string path = temp_path("steerlab_test_ck.stlb");
  save_checkpoint(ck, path);
  LmCheckpoint back = load_checkpoint(path);
  EXPECT_EQ(back.train_steps, 123);
  EXPECT_FLOAT_EQ(back.final_loss, 0.456f);
  ASSERT_EQ(back.params.size(), ck.params.size());
  for (size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(back.params[i].first, ck.params[i].first);
    EXPECT_EQ(back.params[i].second.data, ck.params[i].second.data);
  }
  std::remove(path.c_str());
}

TEST(CheckpointIo, TruncatedFileThrowsFormatError) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::string path = temp_path("steerlab_test_trunc.stlb");
  save_checkpoint(ck, path);
  std::string bytes = read_file_bytes(path);
  write_file_bytes(path, bytes.substr(0, bytes.size() / 2));
  try {
    load_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(CheckpointIo, VersionMismatchThrowsFormatError) {
  LmCheckpoint ck = LmCheckpoint::init(tiny_config());
  std::string path = temp_path("steerlab_test_ver.stlb");
  save_checkpoint(ck, path);
  std::string bytes = read_file_bytes(path);
  bytes[4] = 99;  // version low byte
  write_file_bytes(path, bytes);
  try {
    load_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(CheckpointIo, BadMagicThrowsFormatError) {
  std::string path = temp_path("steerlab_test_magic.stlb");
  write_file_bytes(path, "NOPE----------------");
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

TEST(Config, InvalidValuesAreRejected) {
  LmConfig cfg;
  cfg.d_model = 100;
  cfg.n_heads = 3;  // not divisible
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = LmConfig{};
  cfg.vocab_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
