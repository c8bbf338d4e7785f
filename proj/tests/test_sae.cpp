#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "steerlab/sae.hpp"
#include "test_util.hpp"

using namespace steerlab;

namespace {

SaeModel tiny_sae() {
  SaeModel sae;
  sae.config.d_in = 3;
  sae.config.n_features = 4;
  sae.w_enc = Tensor::from({4, 3}, {0.5f, -1.0f, 2.0f,
                                    1.0f, 1.0f, 1.0f,
                                    -0.5f, 0.25f, 0.0f,
                                    2.0f, 0.0f, -1.0f});
  sae.b_enc = Tensor::from({4}, {0.1f, -0.2f, 0.0f, 0.3f});
  sae.w_dec = Tensor::from({4, 3}, {1.0f, 0.0f, 0.0f,
                                    0.0f, 1.0f, 0.0f,
                                    0.0f, 0.0f, 1.0f,
                                    0.5f, 0.5f, 0.5f});
  sae.b_dec = Tensor::from({3}, {0.2f, -0.1f, 0.4f});
  return sae;
}

LmCheckpoint small_lm(uint64_t seed = 5) {
  LmConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.d_mlp = 64;
  cfg.context_length = 64;
  cfg.seed = seed;
  return LmCheckpoint::init(cfg);
}

SaeModel random_sae_for(const LmCheckpoint& ck, int layer, uint64_t seed) {
  SaeModel sae;
  sae.config.d_in = ck.config.d_model;
  sae.config.n_features = 48;
  sae.site.layer = layer;
  Rng rng(seed);
  sae.w_enc = Tensor::randn({48, 32}, rng, 0.5f);
  sae.b_enc = Tensor::randn({48}, rng, 0.1f);
  sae.w_dec = Tensor::randn({48, 32}, rng, 0.5f);
  sae.b_dec = Tensor::randn({32}, rng, 0.1f);
  return sae;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

// ---- encode / decode ----

TEST(Encode, ZeroWeightsGiveZeroFeatures) {
  SaeModel sae = tiny_sae();
  sae.w_enc.fill(0.0f);
  sae.b_enc.fill(0.0f);
  Tensor f = encode(sae, Tensor::from({3}, {1.0f, 2.0f, 3.0f}));
  EXPECT_TRUE(f.all_zero());
}

TEST(Encode, NegativePreActivationsClampToZero) {
  SaeModel sae = tiny_sae();
  sae.b_enc.fill(-100.0f);
  Tensor f = encode(sae, Tensor::from({3}, {0.1f, 0.2f, 0.3f}));
  EXPECT_TRUE(f.all_zero());
}

TEST(Encode, MatchesHandArithmetic) {
  SaeModel sae = tiny_sae();
  Tensor a = Tensor::from({3}, {1.0f, 0.5f, -0.5f});
  Tensor f = encode(sae, a);
  // Independent double-precision recomputation of ReLU(W_enc (a-b_dec) + b_enc).
  for (int i = 0; i < 4; ++i) {
    double acc = sae.b_enc.at(i);
    for (int j = 0; j < 3; ++j)
      acc += static_cast<double>(sae.w_enc.at(i, j)) * (a.at(j) - sae.b_dec.at(j));
    double expect = std::max(acc, 0.0);
    EXPECT_NEAR(f.at(i), expect, 1e-6) << "feature " << i;
  }
}

TEST(Encode, DimensionMismatchThrows) {
  SaeModel sae = tiny_sae();
  EXPECT_THROW(encode(sae, Tensor::zeros({4})), ShapeError);
}

TEST(Decode, ZeroFeaturesGiveDecoderBias) {
  SaeModel sae = tiny_sae();
  Tensor out = decode(sae, Tensor::zeros({4}));
  EXPECT_EQ(out.data, sae.b_dec.data);
}

TEST(Decode, OneHotSelectsDecoderRow) {
  SaeModel sae = tiny_sae();
  Tensor f = Tensor::zeros({4});
  f.at(3) = 1.0f;
  Tensor out = decode(sae, f);
  for (int j = 0; j < 3; ++j) EXPECT_FLOAT_EQ(out.at(j), sae.w_dec.at(3, j) + sae.b_dec.at(j));
}

TEST(Decode, SuperpositionIsLinear) {
  SaeModel sae = tiny_sae();
  Tensor f1 = Tensor::from({4}, {0.5f, 0.0f, 2.0f, 0.0f});
  Tensor f2 = Tensor::from({4}, {0.0f, 1.5f, 0.0f, 0.25f});
  Tensor sum({4});
  for (int i = 0; i < 4; ++i) sum.at(i) = f1.at(i) + f2.at(i);
  Tensor lhs = decode(sae, sum);
  Tensor d1 = decode(sae, f1), d2 = decode(sae, f2);
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(lhs.at(j) - sae.b_dec.at(j),
                (d1.at(j) - sae.b_dec.at(j)) + (d2.at(j) - sae.b_dec.at(j)), 1e-6);
}

// ---- feature_vector ----

TEST(FeatureVector, EqualsDecodeDifferenceAtFloatResolution) {
  // (w + b) - b cannot be bitwise w in IEEE float; the identity holds up to
  // one rounding of the sum, an absolute bound at the sum's magnitude.
  SaeModel sae = tiny_sae();
  Tensor zero_out = decode(sae, Tensor::zeros({4}));
  for (int i = 0; i < 4; ++i) {
    Tensor one = Tensor::zeros({4});
    one.at(i) = 1.0f;
    Tensor via_decode = decode(sae, one);
    Tensor v = feature_vector(sae, i);
    for (int j = 0; j < 3; ++j) {
      float tol = 4.0f * 1.1920929e-7f *
                  (std::fabs(via_decode.at(j)) + std::fabs(zero_out.at(j)) + 1.0f);
      EXPECT_NEAR(v.at(j), via_decode.at(j) - zero_out.at(j), tol);
    }
  }
}

TEST(FeatureVector, OutOfRangeIndexThrowsWithDomainMessage) {
  SaeModel sae = tiny_sae();
  try {
    feature_vector(sae, 4);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("out of range [0, 4)"), std::string::npos);
  }
  EXPECT_THROW(feature_vector(sae, -1), ContractError);
}

TEST(FeatureVector, HasModelDimension) {
  SaeModel sae = tiny_sae();
  EXPECT_EQ(feature_vector(sae, 0).numel(), 3);
}

// ---- train_sae on the synthetic dictionary ----

TEST(TrainSae, RecoversSparseDictionaryData) {
  auto data = testutil::make_dictionary_data(21, /*atoms=*/16, /*d=*/16, 2048, 512);
  SaeConfig cfg;
  cfg.d_in = 16;
  cfg.n_features = 32;
  cfg.seed = 9;
  SaeTrainCurve curve;
  SaeModel sae = train_sae(cfg, data.train, {}, &curve);

  Tensor f = encode_batch(sae, data.heldout);
  Tensor recon = decode_batch(sae, f);
  double mse = 0.0;
  int64_t l0 = 0;
  for (int i = 0; i < data.heldout.rows(); ++i)
    for (int j = 0; j < 16; ++j) {
      double d = recon.at(i, j) - data.heldout.at(i, j);
      mse += d * d;
    }
  mse /= static_cast<double>(data.heldout.numel());
  for (float x : f.data) l0 += x > 0.0f ? 1 : 0;
  double mean_l0 = static_cast<double>(l0) / data.heldout.rows();
  double variance = testutil::element_variance(data.heldout);

  EXPECT_LT(mse, 0.10 * variance);
  EXPECT_LE(mean_l0, 0.10 * 32);
  ASSERT_GE(curve.mse.size(), 3u);
  EXPECT_GT(curve.mse[0], curve.mse[1]);
  EXPECT_GT(curve.mse[1], curve.mse[2]);
}

TEST(TrainSae, HugeL1CoefficientKillsFeatures) {
  auto data = testutil::make_dictionary_data(4, 16, 16, 512, 64);
  SaeConfig cfg;
  cfg.d_in = 16;
  cfg.n_features = 32;
  cfg.l1_coefficient = 50.0f;
  cfg.seed = 2;
  SaeTrainOptions opt;
  opt.epochs = 60;
  SaeModel sae = train_sae(cfg, data.train, opt);

  Tensor f = encode_batch(sae, data.heldout);
  int64_t l0 = 0;
  for (float x : f.data) l0 += x > 0.0f ? 1 : 0;
  EXPECT_LT(static_cast<double>(l0) / data.heldout.rows(), 0.5);

  // Reconstruction collapses to roughly the data mean held in b_dec.
  std::vector<double> mean(16, 0.0);
  for (int i = 0; i < data.train.rows(); ++i)
    for (int j = 0; j < 16; ++j) mean[static_cast<size_t>(j)] += data.train.at(i, j);
  for (double& m : mean) m /= data.train.rows();
  Tensor recon = decode_batch(sae, f);
  double worst = 0.0;
  for (int i = 0; i < std::min(16, recon.rows()); ++i)
    for (int j = 0; j < 16; ++j)
      worst = std::max(worst, std::fabs(recon.at(i, j) - mean[static_cast<size_t>(j)]));
  EXPECT_LT(worst, 0.5);
}

TEST(TrainSae, DeterministicGivenSeed) {
  auto data = testutil::make_dictionary_data(8, 16, 16, 256, 8);
  SaeConfig cfg;
  cfg.d_in = 16;
  cfg.n_features = 32;
  cfg.seed = 31;
  SaeTrainOptions opt;
  opt.epochs = 5;
  SaeModel a = train_sae(cfg, data.train, opt);
  SaeModel b = train_sae(cfg, data.train, opt);
  EXPECT_EQ(a.w_enc.data, b.w_enc.data);
  EXPECT_EQ(a.w_dec.data, b.w_dec.data);
  EXPECT_EQ(a.b_enc.data, b.b_enc.data);
  EXPECT_EQ(a.b_dec.data, b.b_dec.data);
}

TEST(TrainSae, EmptyDatasetThrows) {
  SaeConfig cfg;
  cfg.d_in = 16;
  cfg.n_features = 32;
  EXPECT_THROW(train_sae(cfg, Tensor::zeros({1, 8})), ShapeError);
}

// ---- calibrate_alpha ----

TEST(Calibrate, MatchesBruteForceReencode) {
  LmCheckpoint ck = small_lm();
  SaeModel sae = random_sae_for(ck, 1, 77);
  std::vector<std::string> corpus = {"a single calibration text"};
  FeatureStats stats = calibrate_alpha(sae, ck, corpus, "unit");

  // Brute force: re-capture and re-encode position by position.
  HookSite site{1};
  ForwardResult r = lm_forward(ck, tokenize_bytes(corpus[0]), nullptr, &site);
  std::vector<float> expect(48, 0.0f);
  std::vector<bool> fired(48, false);
  for (int pos = 0; pos < r.captured.rows(); ++pos) {
    Tensor a({32});
    std::copy(r.captured.row_ptr(pos), r.captured.row_ptr(pos) + 32, a.data.data());
    Tensor f = encode(sae, a);
    for (int i = 0; i < 48; ++i) {
      expect[static_cast<size_t>(i)] = std::max(expect[static_cast<size_t>(i)], f.at(i));
      if (f.at(i) > 0.0f) fired[static_cast<size_t>(i)] = true;
    }
  }
  for (int i = 0; i < 48; ++i) {
    if (fired[static_cast<size_t>(i)]) {
      EXPECT_NEAR(stats.alpha[static_cast<size_t>(i)], expect[static_cast<size_t>(i)], 1e-5f);
      EXPECT_EQ(stats.dead[static_cast<size_t>(i)], 0);
      // Definitional upper bound: alpha dominates every observed activation.
      EXPECT_GE(stats.alpha[static_cast<size_t>(i)] + 1e-6f, expect[static_cast<size_t>(i)]);
    } else {
      EXPECT_EQ(stats.dead[static_cast<size_t>(i)], 1);
      EXPECT_FLOAT_EQ(stats.alpha[static_cast<size_t>(i)], 1.0f);
    }
  }
}

TEST(Calibrate, InactiveFeatureGetsFallbackAlphaAndDeadFlag) {
  LmCheckpoint ck = small_lm();
  SaeModel sae = random_sae_for(ck, 0, 3);
  // Force feature 7 to never activate.
  for (int j = 0; j < 32; ++j) sae.w_enc.at(7, j) = 0.0f;
  sae.b_enc.at(7) = -1.0f;
  FeatureStats stats = calibrate_alpha(sae, ck, {"text one", "text two"});
  EXPECT_EQ(stats.dead[7], 1);
  EXPECT_FLOAT_EQ(stats.alpha[7], 1.0f);
  EXPECT_FLOAT_EQ(stats.frequency[7], 0.0f);
}

TEST(Calibrate, EmptyCorpusThrows) {
  LmCheckpoint ck = small_lm();
  SaeModel sae = random_sae_for(ck, 0, 3);
  EXPECT_THROW(calibrate_alpha(sae, ck, {}), ContractError);
  EXPECT_THROW(calibrate_alpha(sae, ck, {""}), ContractError);
}

// ---- serialization ----

TEST(SaeIo, SaveLoadRoundTripsBitwise) {
  SaeModel sae = tiny_sae();
  sae.config.seed = 99;
  sae.site.layer = 2;
  std::string path = temp_path("steerlab_test_sae.stsa");
  save_sae(sae, path);
  SaeModel back = load_sae(path);
  EXPECT_EQ(back.config.d_in, 3);
  EXPECT_EQ(back.config.n_features, 4);
  EXPECT_EQ(back.config.seed, 99u);
  EXPECT_EQ(back.site.layer, 2);
  EXPECT_EQ(back.w_enc.data, sae.w_enc.data);
  EXPECT_EQ(back.b_enc.data, sae.b_enc.data);
  EXPECT_EQ(back.w_dec.data, sae.w_dec.data);
  EXPECT_EQ(back.b_dec.data, sae.b_dec.data);
  std::remove(path.c_str());
}

TEST(SaeIo, FeatureStatsJsonRoundTrips) {
  FeatureStats stats;
  stats.alpha = {1.5f, 1.0f};
  stats.frequency = {0.25f, 0.0f};
  stats.dead = {0, 1};
  stats.calibration_corpus_id = "desk-40";
  std::string path = temp_path("steerlab_test_stats.json");
  save_feature_stats(stats, path);
  FeatureStats back = load_feature_stats(path);
  EXPECT_EQ(back.calibration_corpus_id, "desk-40");
  EXPECT_EQ(back.alpha, stats.alpha);
  EXPECT_EQ(back.frequency, stats.frequency);
  EXPECT_EQ(back.dead, stats.dead);
  std::remove(path.c_str());
}

TEST(SaeIo, ActivationFileRoundTrips) {
  Rng rng(6);
  Tensor acts = Tensor::randn({10, 8}, rng);
  std::string path = temp_path("steerlab_test_acts.stac");
  save_activations(acts, 3, path);
  auto [back, layer] = load_activations(path);
  EXPECT_EQ(layer, 3);
  EXPECT_EQ(back.data, acts.data);
  std::remove(path.c_str());
}
