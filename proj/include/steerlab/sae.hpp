#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "steerlab/lm.hpp"
#include "steerlab/optim.hpp"
#include "steerlab/tape.hpp"

namespace steerlab {

struct SaeConfig {
  int d_in = 128;
  int n_features = 1024;
  float l1_coefficient = 0.3f;
  uint64_t seed = 13;

  void validate() const {
    if (d_in <= 0) throw ConfigError("sae config: d_in must be positive");
    if (n_features < d_in)
      throw ConfigError("sae config: n_features " + std::to_string(n_features) +
                        " must be >= d_in " + std::to_string(d_in));
    if (!(l1_coefficient > 0.0f)) throw ConfigError("sae config: l1_coefficient must be > 0");
  }
};

// Sparse autoencoder over residual-stream activations. Decoder row i is the
// direction of feature i; rows are kept at unit norm during training so the
// encoder activations carry the scale.
struct SaeModel {
  SaeConfig config;
  Tensor w_enc;  // [F, d_in]
  Tensor b_enc;  // [F]
  Tensor w_dec;  // [F, d_in]
  Tensor b_dec;  // [d_in]
  HookSite site;
};

// Per-feature calibration statistics: max observed activation (alpha) and
// activation frequency over a named corpus. Features that never fired are
// dead and get the fallback alpha of 1.
struct FeatureStats {
  std::vector<float> alpha;
  std::vector<float> frequency;
  std::vector<uint8_t> dead;
  std::string calibration_corpus_id;

  int n_features() const { return static_cast<int>(alpha.size()); }
};

constexpr float kDeadFeatureAlphaFallback = 1.0f;

inline void check_feature_index(const SaeModel& sae, int i) {
  if (i < 0 || i >= sae.config.n_features)
    throw ContractError("feature index out of range [0, " +
                        std::to_string(sae.config.n_features) + ")");
}

// f = ReLU(W_enc (a - b_dec) + b_enc) for a batch of rows [N, d_in].
inline Tensor encode_batch(const SaeModel& sae, const Tensor& acts) {
  require_matrix(acts, "encode");
  if (acts.cols() != sae.config.d_in)
    throw ShapeError("encode: got dimension " + std::to_string(acts.cols()) + ", expected d_in " +
                     std::to_string(sae.config.d_in));
  Tensor centered = acts;
  for (int i = 0; i < centered.rows(); ++i) {
    float* row = centered.row_ptr(i);
    for (int j = 0; j < centered.cols(); ++j) row[j] -= sae.b_dec.data[static_cast<size_t>(j)];
  }
  Tensor f;
  kern::matmul_nt(centered, sae.w_enc, f);
  for (int i = 0; i < f.rows(); ++i) {
    float* row = f.row_ptr(i);
    for (int j = 0; j < f.cols(); ++j) {
      row[j] += sae.b_enc.data[static_cast<size_t>(j)];
      if (row[j] < 0.0f) row[j] = 0.0f;
    }
  }
  return f;
}

inline Tensor encode(const SaeModel& sae, const Tensor& a) {
  if (a.numel() != sae.config.d_in)
    throw ShapeError("encode: got " + std::to_string(a.numel()) + " entries, expected d_in " +
                     std::to_string(sae.config.d_in));
  Tensor row = Tensor::from({1, sae.config.d_in}, a.data);
  Tensor f = encode_batch(sae, row);
  return Tensor::from({sae.config.n_features}, f.data);
}

// a_hat = f W_dec + b_dec for a batch of feature rows [N, F].
inline Tensor decode_batch(const SaeModel& sae, const Tensor& f) {
  require_matrix(f, "decode");
  if (f.cols() != sae.config.n_features)
    throw ShapeError("decode: got dimension " + std::to_string(f.cols()) +
                     ", expected n_features " + std::to_string(sae.config.n_features));
  Tensor out;
  kern::matmul(f, sae.w_dec, out);
  for (int i = 0; i < out.rows(); ++i) {
    float* row = out.row_ptr(i);
    for (int j = 0; j < out.cols(); ++j) row[j] += sae.b_dec.data[static_cast<size_t>(j)];
  }
  return out;
}

inline Tensor decode(const SaeModel& sae, const Tensor& f) {
  if (f.numel() != sae.config.n_features)
    throw ShapeError("decode: got " + std::to_string(f.numel()) + " entries, expected n_features " +
                     std::to_string(sae.config.n_features));
  Tensor row = Tensor::from({1, sae.config.n_features}, f.data);
  Tensor out = decode_batch(sae, row);
  return Tensor::from({sae.config.d_in}, out.data);
}

// v_i: raw decoder row i, un-normalized (alpha*beta carries the scale).
inline Tensor feature_vector(const SaeModel& sae, int i) {
  check_feature_index(sae, i);
  Tensor v({sae.config.d_in});
  std::copy(sae.w_dec.row_ptr(i), sae.w_dec.row_ptr(i) + sae.config.d_in, v.data.data());
  return v;
}

struct SaeTrainOptions {
  int epochs = 250;
  int batch_size = 64;
  float lr = 1e-3f;
};

// Per-epoch training diagnostics: per-element reconstruction MSE and mean
// number of active features per sample.
struct SaeTrainCurve {
  std::vector<double> mse;
  std::vector<double> mean_l0;
};

namespace detail {

inline void renormalize_decoder_rows(Tensor& w_dec) {
  for (int i = 0; i < w_dec.rows(); ++i) {
    float* row = w_dec.row_ptr(i);
    double sq = 0.0;
    for (int j = 0; j < w_dec.cols(); ++j) sq += static_cast<double>(row[j]) * row[j];
    double norm = std::sqrt(sq);
    if (norm < 1e-8) continue;  // dead direction, leave for the stats pass to flag
    float inv = static_cast<float>(1.0 / norm);
    for (int j = 0; j < w_dec.cols(); ++j) row[j] *= inv;
  }
}

}  // namespace detail

// Minimizes mean_batch(||a - decode(encode(a))||^2 + lambda*||encode(a)||_1)
// with Adam. Decoder rows are re-normalized to unit length after each step.
// Deterministic given config.seed.
inline SaeModel train_sae(const SaeConfig& cfg, const Tensor& dataset,
                          const SaeTrainOptions& opt = {}, SaeTrainCurve* curve = nullptr,
                          HookSite site = HookSite{0}) {
  cfg.validate();
  require_matrix(dataset, "train_sae");
  if (dataset.rows() == 0) throw ContractError("train_sae: empty activation dataset");
  if (dataset.cols() != cfg.d_in)
    throw ShapeError("train_sae: dataset dimension " + std::to_string(dataset.cols()) +
                     " != d_in " + std::to_string(cfg.d_in));

  const int n = dataset.rows(), d = cfg.d_in, F = cfg.n_features;
  Rng rng(derive_seed(cfg.seed, /*stream=*/0x5ae));

  SaeModel sae;
  sae.config = cfg;
  sae.site = site;
  sae.w_dec = Tensor::randn({F, d}, rng, 1.0f);
  detail::renormalize_decoder_rows(sae.w_dec);
  sae.w_enc = sae.w_dec;  // tied init; training unties them
  sae.b_enc = Tensor::zeros({F});
  sae.b_dec = Tensor({d});
  for (int i = 0; i < n; ++i) {
    const float* row = dataset.row_ptr(i);
    for (int j = 0; j < d; ++j) sae.b_dec.data[static_cast<size_t>(j)] += row[j];
  }
  for (float& x : sae.b_dec.data) x /= static_cast<float>(n);

  AdamHyperparams hp;
  hp.lr = opt.lr;
  Tensor* params[4] = {&sae.w_enc, &sae.b_enc, &sae.w_dec, &sae.b_dec};
  std::vector<AdamState> states;
  for (Tensor* p : params) states.emplace_back(p->shape, hp);

  const int batch = std::min(opt.batch_size, n);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<size_t> order = rng.permutation(static_cast<size_t>(n));
    double epoch_sq = 0.0;
    int64_t epoch_l0 = 0, epoch_samples = 0;
    for (int start = 0; start + batch <= n; start += batch) {
      Tensor a({batch, d});
      for (int b = 0; b < batch; ++b)
        std::copy(dataset.row_ptr(static_cast<int>(order[static_cast<size_t>(start + b)])),
                  dataset.row_ptr(static_cast<int>(order[static_cast<size_t>(start + b)])) + d,
                  a.row_ptr(b));

      Tape tp;
      auto a_id = tp.leaf(a);
      auto we = tp.leaf(sae.w_enc);
      auto be = tp.leaf(sae.b_enc);
      auto wd = tp.leaf(sae.w_dec);
      auto bd = tp.leaf(sae.b_dec);
      auto centered = tp.add_row(a_id, tp.scale(bd, -1.0f));
      auto f = tp.relu(tp.add_row(tp.matmul_nt(centered, we), be));
      auto recon = tp.add_row(tp.matmul(f, wd), bd);
      auto sq = tp.sum_sq_diff(recon, a_id);
      auto l1 = tp.sum_abs(f);
      auto loss = tp.add(tp.scale(sq, 1.0f / batch), tp.scale(l1, cfg.l1_coefficient / batch));
      float loss_val = tp.value(loss).at(0);
      if (!std::isfinite(loss_val))
        throw TrainingError("sae training diverged: non-finite loss in epoch " +
                            std::to_string(epoch));
      tp.backward(loss);

      Tape::NodeId ids[4] = {we, be, wd, bd};
      for (int p = 0; p < 4; ++p) {
        Tensor g = tp.grad(ids[p]);
        adam_step(*params[p], g, states[p]);
      }
      detail::renormalize_decoder_rows(sae.w_dec);

      epoch_sq += static_cast<double>(tp.value(sq).at(0));
      const Tensor& fv = tp.value(f);
      for (float x : fv.data) epoch_l0 += x > 0.0f ? 1 : 0;
      epoch_samples += batch;
    }
    if (curve && epoch_samples > 0) {
      curve->mse.push_back(epoch_sq / (static_cast<double>(epoch_samples) * d));
      curve->mean_l0.push_back(static_cast<double>(epoch_l0) /
                               static_cast<double>(epoch_samples));
    }
  }
  return sae;
}

// Runs the checkpoint over texts, captures activations at `layer`'s post-MLP
// site, and stacks them into one [N, d_model] matrix.
inline Tensor capture_activations(const LmCheckpoint& ck, const std::vector<std::string>& texts,
                                  int layer) {
  HookSite site{layer};
  validate_site(site, ck.config);
  if (texts.empty()) throw ContractError("capture_activations: no texts");
  std::vector<Tensor> captured;
  int64_t total = 0;
  for (const auto& text : texts) {
    if (text.empty()) throw ContractError("capture_activations: empty text");
    std::vector<int> toks = tokenize_bytes(text);
    if (static_cast<int>(toks.size()) > ck.config.context_length)
      toks.resize(static_cast<size_t>(ck.config.context_length));
    ForwardResult r = lm_forward(ck, toks, nullptr, &site);
    total += r.captured.rows();
    captured.push_back(std::move(r.captured));
  }
  Tensor out({static_cast<int>(total), ck.config.d_model});
  int row = 0;
  for (const Tensor& c : captured) {
    std::copy(c.data.begin(), c.data.end(), out.row_ptr(row));
    row += c.rows();
  }
  return out;
}

// alpha_i = max encoder activation of feature i over every token position of
// the calibration texts; features that never activate get the fallback alpha
// and are flagged dead.
inline FeatureStats calibrate_alpha(const SaeModel& sae, const LmCheckpoint& ck,
                                    const std::vector<std::string>& texts,
                                    const std::string& corpus_id = "calibration") {
  if (texts.empty()) throw ContractError("calibrate_alpha: empty calibration set");
  for (const auto& t : texts)
    if (t.empty()) throw ContractError("calibrate_alpha: empty calibration text");
  Tensor acts = capture_activations(ck, texts, sae.site.layer);
  Tensor f = encode_batch(sae, acts);

  const int F = sae.config.n_features;
  FeatureStats stats;
  stats.alpha.assign(static_cast<size_t>(F), 0.0f);
  stats.frequency.assign(static_cast<size_t>(F), 0.0f);
  stats.dead.assign(static_cast<size_t>(F), 0);
  stats.calibration_corpus_id = corpus_id;
  std::vector<int64_t> active(static_cast<size_t>(F), 0);
  for (int i = 0; i < f.rows(); ++i) {
    const float* row = f.row_ptr(i);
    for (int j = 0; j < F; ++j) {
      if (row[j] > stats.alpha[static_cast<size_t>(j)]) stats.alpha[static_cast<size_t>(j)] = row[j];
      if (row[j] > 0.0f) ++active[static_cast<size_t>(j)];
    }
  }
  for (int j = 0; j < F; ++j) {
    stats.frequency[static_cast<size_t>(j)] =
        static_cast<float>(active[static_cast<size_t>(j)]) / static_cast<float>(f.rows());
    if (active[static_cast<size_t>(j)] == 0) {
      stats.dead[static_cast<size_t>(j)] = 1;
      stats.alpha[static_cast<size_t>(j)] = kDeadFeatureAlphaFallback;
    }
  }
  return stats;
}

// ---- serialization: SAE checkpoint (magic "STSA"), stats as JSON ----

inline void save_sae(const SaeModel& sae, const std::string& path) {
  ByteWriter w;
  w.bytes("STSA", 4);
  w.u16(kTensorTableVersion);
  w.u32(static_cast<uint32_t>(sae.config.d_in));
  w.u32(static_cast<uint32_t>(sae.config.n_features));
  w.f32(sae.config.l1_coefficient);
  w.u64(sae.config.seed);
  w.u32(static_cast<uint32_t>(sae.site.layer));
  w.u32(4);
  write_tensor_entry(w, "w_enc", sae.w_enc);
  write_tensor_entry(w, "b_enc", sae.b_enc);
  write_tensor_entry(w, "w_dec", sae.w_dec);
  write_tensor_entry(w, "b_dec", sae.b_dec);
  write_file_bytes(path, w.data());
}

inline SaeModel load_sae(const std::string& path) {
  ByteReader r(read_file_bytes(path));
  check_magic_version(r, "STSA", "sae checkpoint");
  SaeModel sae;
  sae.config.d_in = static_cast<int>(r.u32());
  sae.config.n_features = static_cast<int>(r.u32());
  sae.config.l1_coefficient = r.f32();
  sae.config.seed = r.u64();
  sae.site.layer = static_cast<int>(r.u32());
  sae.config.validate();
  uint32_t n = r.u32();
  if (n != 4)
    throw FormatError("sae checkpoint: expected 4 tensors, found " + std::to_string(n));
  for (int i = 0; i < 4; ++i) {
    auto [name, t] = read_tensor_entry(r);
    if (name == "w_enc") sae.w_enc = std::move(t);
    else if (name == "b_enc") sae.b_enc = std::move(t);
    else if (name == "w_dec") sae.w_dec = std::move(t);
    else if (name == "b_dec") sae.b_dec = std::move(t);
    else throw FormatError("sae checkpoint: unknown tensor \"" + name + "\"");
  }
  if (r.remaining() != 0)
    throw FormatError("sae checkpoint: trailing bytes at offset " + std::to_string(r.offset()));
  return sae;
}

inline void save_feature_stats(const FeatureStats& stats, const std::string& path) {
  nlohmann::json features = nlohmann::json::array();
  for (int i = 0; i < stats.n_features(); ++i) {
    features.push_back({{"feature_id", i},
                        {"alpha", stats.alpha[static_cast<size_t>(i)]},
                        {"frequency", stats.frequency[static_cast<size_t>(i)]},
                        {"dead", stats.dead[static_cast<size_t>(i)] != 0}});
  }
  nlohmann::json doc = {{"calibration_corpus_id", stats.calibration_corpus_id},
                        {"features", features}};
  write_file_bytes(path, doc.dump(2) + "\n");
}

inline FeatureStats load_feature_stats(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("feature stats: invalid JSON in " + path + ": " + e.what());
  }
  FeatureStats stats;
  stats.calibration_corpus_id = doc.value("calibration_corpus_id", "");
  for (const auto& f : doc.at("features")) {
    stats.alpha.push_back(f.at("alpha").get<float>());
    stats.frequency.push_back(f.at("frequency").get<float>());
    stats.dead.push_back(f.at("dead").get<bool>() ? 1 : 0);
  }
  return stats;
}

// ---- activation dataset file (magic "STAC") ----

inline void save_activations(const Tensor& acts, int layer, const std::string& path) {
  require_matrix(acts, "save_activations");
  ByteWriter w;
  w.bytes("STAC", 4);
  w.u16(kTensorTableVersion);
  w.u32(static_cast<uint32_t>(layer));
  w.u32(1);
  write_tensor_entry(w, "acts", acts);
  write_file_bytes(path, w.data());
}

inline std::pair<Tensor, int> load_activations(const std::string& path) {
  ByteReader r(read_file_bytes(path));
  check_magic_version(r, "STAC", "activation dataset");
  int layer = static_cast<int>(r.u32());
  uint32_t n = r.u32();
  if (n != 1) throw FormatError("activation dataset: expected 1 tensor, found " + std::to_string(n));
  auto [name, t] = read_tensor_entry(r);
  if (r.remaining() != 0)
    throw FormatError("activation dataset: trailing bytes at offset " + std::to_string(r.offset()));
  return {std::move(t), layer};
}

}  // namespace steerlab
