#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "steerlab/rng.hpp"
#include "steerlab/serialize.hpp"
#include "steerlab/tape.hpp"
#include "steerlab/tokenizer.hpp"

namespace steerlab {

struct LmConfig {
  int n_layers = 6;
  int d_model = 128;
  int n_heads = 4;
  int d_mlp = 512;
  int vocab_size = 256;  // byte-level
  int context_length = 256;
  uint64_t seed = 42;

  void validate() const {
    if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_mlp <= 0 || context_length <= 0)
      throw ConfigError("lm config: all dimensions must be positive");
    if (vocab_size < 2) throw ConfigError("lm config: vocab_size must be >= 2");
    if (d_model % n_heads != 0)
      throw ConfigError("lm config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
  }

  int head_dim() const { return d_model / n_heads; }
};

// Canonical parameter list; checkpoint files and optimizers follow this order.
inline std::vector<std::pair<std::string, std::vector<int>>> lm_param_shapes(const LmConfig& c) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  out.push_back({"wte", {c.vocab_size, c.d_model}});
  out.push_back({"wpe", {c.context_length, c.d_model}});
  for (int l = 0; l < c.n_layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "ln1.g", {c.d_model}});
    out.push_back({p + "ln1.b", {c.d_model}});
    out.push_back({p + "attn.wq", {c.d_model, c.d_model}});
    out.push_back({p + "attn.bq", {c.d_model}});
    out.push_back({p + "attn.wk", {c.d_model, c.d_model}});
    out.push_back({p + "attn.bk", {c.d_model}});
    out.push_back({p + "attn.wv", {c.d_model, c.d_model}});
    out.push_back({p + "attn.bv", {c.d_model}});
    out.push_back({p + "attn.wo", {c.d_model, c.d_model}});
    out.push_back({p + "attn.bo", {c.d_model}});
    out.push_back({p + "ln2.g", {c.d_model}});
    out.push_back({p + "ln2.b", {c.d_model}});
    out.push_back({p + "mlp.w1", {c.d_model, c.d_mlp}});
    out.push_back({p + "mlp.b1", {c.d_mlp}});
    out.push_back({p + "mlp.w2", {c.d_mlp, c.d_model}});
    out.push_back({p + "mlp.b2", {c.d_model}});
  }
  out.push_back({"ln_f.g", {c.d_model}});
  out.push_back({"ln_f.b", {c.d_model}});
  out.push_back({"unemb", {c.d_model, c.vocab_size}});
  return out;
}

struct LmCheckpoint {
  LmConfig config;
  std::vector<std::pair<std::string, Tensor>> params;
  int64_t train_steps = 0;
  float final_loss = 0.0f;

  const Tensor& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      build_index();
      it = index_.find(name);
      if (it == index_.end()) throw Error("checkpoint has no parameter \"" + name + "\"");
    }
    return params[it->second].second;
  }
  Tensor& param(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const LmCheckpoint*>(this)->param(name));
  }

  // Fresh seeded initialization. Residual-output projections are scaled down
  // by 1/sqrt(2*n_layers), GPT-2 style; norms start at identity.
  static LmCheckpoint init(const LmConfig& cfg) {
    cfg.validate();
    LmCheckpoint ck;
    ck.config = cfg;
    Rng rng(derive_seed(cfg.seed, /*stream=*/0x1a));
    const float base_std = 0.02f;
    const float resid_std = base_std / std::sqrt(2.0f * static_cast<float>(cfg.n_layers));
    for (auto& [name, shape] : lm_param_shapes(cfg)) {
      Tensor t;
      bool is_gain = name.size() >= 2 && name.substr(name.size() - 2) == ".g";
      bool is_bias_vec = shape.size() == 1 && !is_gain;
      bool is_resid_proj = name.find("attn.wo") != std::string::npos ||
                           name.find("mlp.w2") != std::string::npos;
      if (is_gain) t = Tensor::full(shape, 1.0f);
      else if (is_bias_vec) t = Tensor::zeros(shape);
      else t = Tensor::randn(shape, rng, is_resid_proj ? resid_std : base_std);
      ck.params.emplace_back(name, std::move(t));
    }
    ck.build_index();
    return ck;
  }

  void build_index() const {
    index_.clear();
    for (size_t i = 0; i < params.size(); ++i) index_[params[i].first] = i;
  }

 private:
  mutable std::unordered_map<std::string, size_t> index_;
};

// Where activations are read or modified: the residual stream immediately
// after layer `layer`'s MLP output has been added back in.
struct HookSite {
  int layer = 0;
};

inline void validate_site(const HookSite& s, const LmConfig& c) {
  if (s.layer < 0 || s.layer >= c.n_layers)
    throw ContractError("invalid hook site: layer " + std::to_string(s.layer) + " outside [0, " +
                        std::to_string(c.n_layers) + ")");
}

enum class PositionPolicy { AllPositions, GeneratedOnly };

inline const char* to_string(PositionPolicy p) {
  return p == PositionPolicy::AllPositions ? "all-positions" : "generated-only";
}

inline PositionPolicy position_policy_from_string(const std::string& s) {
  if (s == "all-positions") return PositionPolicy::AllPositions;
  if (s == "generated-only") return PositionPolicy::GeneratedOnly;
  throw ConfigError("unknown position policy \"" + s + "\"");
}

struct Intervention {
  HookSite site;
  Tensor delta;  // [d_model]
  PositionPolicy policy = PositionPolicy::AllPositions;
};

namespace detail {

struct LayerWeights {
  const Tensor *ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  const Tensor *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
};

struct BoundWeights {
  const Tensor *wte, *wpe, *lnf_g, *lnf_b, *unemb;
  std::vector<LayerWeights> layers;
};

inline BoundWeights bind_weights(const LmCheckpoint& ck) {
  BoundWeights w;
  w.wte = &ck.param("wte");
  w.wpe = &ck.param("wpe");
  w.lnf_g = &ck.param("ln_f.g");
  w.lnf_b = &ck.param("ln_f.b");
  w.unemb = &ck.param("unemb");
  for (int l = 0; l < ck.config.n_layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    LayerWeights lw{};
    lw.ln1_g = &ck.param(p + "ln1.g");
    lw.ln1_b = &ck.param(p + "ln1.b");
    lw.wq = &ck.param(p + "attn.wq");
    lw.bq = &ck.param(p + "attn.bq");
    lw.wk = &ck.param(p + "attn.wk");
    lw.bk = &ck.param(p + "attn.bk");
    lw.wv = &ck.param(p + "attn.wv");
    lw.bv = &ck.param(p + "attn.bv");
    lw.wo = &ck.param(p + "attn.wo");
    lw.bo = &ck.param(p + "attn.bo");
    lw.ln2_g = &ck.param(p + "ln2.g");
    lw.ln2_b = &ck.param(p + "ln2.b");
    lw.w1 = &ck.param(p + "mlp.w1");
    lw.b1 = &ck.param(p + "mlp.b1");
    lw.w2 = &ck.param(p + "mlp.w2");
    lw.b2 = &ck.param(p + "mlp.b2");
    w.layers.push_back(lw);
  }
  return w;
}

inline void add_bias_rows(Tensor& x, const Tensor& b) {
  for (int i = 0; i < x.rows(); ++i) {
    float* xi = x.row_ptr(i);
    for (int j = 0; j < x.cols(); ++j) xi[j] += b.data[static_cast<size_t>(j)];
  }
}

// Adds `delta` to the rows selected by the position policy. An all-zero
// delta is skipped entirely so a beta=0 intervention is a bitwise no-op.
inline void apply_delta_rows(Tensor& x, const Intervention& iv, int generated_from) {
  if (iv.delta.all_zero()) return;
  int start = iv.policy == PositionPolicy::AllPositions ? 0 : generated_from;
  for (int i = start; i < x.rows(); ++i) {
    float* xi = x.row_ptr(i);
    for (int j = 0; j < x.cols(); ++j) xi[j] += iv.delta.data[static_cast<size_t>(j)];
  }
}

}  // namespace detail

// Per-layer key/value cache for incremental decoding.
struct KvCache {
  std::vector<Tensor> k;  // per layer [ctx, d_model]
  std::vector<Tensor> v;
  int length = 0;

  explicit KvCache(const LmConfig& c) : length(0) {
    for (int l = 0; l < c.n_layers; ++l) {
      k.emplace_back(Tensor({c.context_length, c.d_model}));
      v.emplace_back(Tensor({c.context_length, c.d_model}));
    }
  }
};

struct ForwardResult {
  Tensor logits;  // [T, vocab]
  Tensor captured;
  bool has_capture = false;
};

// Full-sequence forward pass. When `iv` is given its delta is added to the
// residual stream at the site for every covered position before subsequent
// layers run; when `capture` is given the pre-intervention activations at
// that site are returned. `generated_from` tells a generated-only policy
// where the prompt ends. Optionally fills a KV cache for incremental reuse.
inline ForwardResult lm_forward(const LmCheckpoint& ck, const std::vector<int>& tokens,
                                const Intervention* iv = nullptr,
                                const HookSite* capture = nullptr, int generated_from = 0,
                                KvCache* fill_cache = nullptr) {
  const LmConfig& cfg = ck.config;
  const int t_len = static_cast<int>(tokens.size());
  if (t_len == 0) throw ContractError("forward: empty token sequence");
  if (t_len > cfg.context_length)
    throw ContractError("forward: sequence length " + std::to_string(t_len) +
                        " exceeds context_length " + std::to_string(cfg.context_length));
  if (iv) {
    validate_site(iv->site, cfg);
    if (iv->delta.numel() != cfg.d_model)
      throw ShapeError("intervention delta has " + std::to_string(iv->delta.numel()) +
                       " entries, expected d_model " + std::to_string(cfg.d_model));
  }
  if (capture) validate_site(*capture, cfg);

  auto w = detail::bind_weights(ck);
  const int d = cfg.d_model, nh = cfg.n_heads, hd = cfg.head_dim();

  Tensor x({t_len, d});
  for (int i = 0; i < t_len; ++i) {
    int tok = tokens[i];
    if (tok < 0 || tok >= cfg.vocab_size)
      throw ContractError("forward: token id " + std::to_string(tok) + " outside vocab");
    const float* te = w.wte->row_ptr(tok);
    const float* pe = w.wpe->row_ptr(i);
    float* xi = x.row_ptr(i);
    for (int j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
  }

  ForwardResult res;
  Tensor h, q, k, v, scores, probs, ctx, attn_out, m1, m2;
  const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& lw = w.layers[l];
    kern::layer_norm(x, *lw.ln1_g, *lw.ln1_b, h);
    kern::matmul(h, *lw.wq, q);
    detail::add_bias_rows(q, *lw.bq);
    kern::matmul(h, *lw.wk, k);
    detail::add_bias_rows(k, *lw.bk);
    kern::matmul(h, *lw.wv, v);
    detail::add_bias_rows(v, *lw.bv);

    if (fill_cache) {
      std::copy(k.data.begin(), k.data.end(), fill_cache->k[l].data.begin());
      std::copy(v.data.begin(), v.data.end(), fill_cache->v[l].data.begin());
    }

    ctx = Tensor({t_len, d});
    for (int head = 0; head < nh; ++head) {
      const int c0 = head * hd;
      scores = Tensor({t_len, t_len});
      // q_head [t,hd] x k_head^T with causal mask folded into the loop
      for (int i = 0; i < t_len; ++i) {
        const float* qi = q.row_ptr(i) + c0;
        float* si = scores.row_ptr(i);
        for (int jj = 0; jj <= i; ++jj) {
          const float* kj = k.row_ptr(jj) + c0;
          float acc = 0.0f;
          for (int e = 0; e < hd; ++e) acc += qi[e] * kj[e];
          si[jj] = acc * inv_sqrt_hd;
        }
        for (int jj = i + 1; jj < t_len; ++jj) si[jj] = -1e30f;
      }
      kern::softmax_rows(scores, probs);
      for (int i = 0; i < t_len; ++i) {
        const float* pi = probs.row_ptr(i);
        float* ci = ctx.row_ptr(i) + c0;
        for (int e = 0; e < hd; ++e) ci[e] = 0.0f;
        for (int jj = 0; jj <= i; ++jj) {
          const float* vj = v.row_ptr(jj) + c0;
          float p = pi[jj];
          for (int e = 0; e < hd; ++e) ci[e] += p * vj[e];
        }
      }
    }
    kern::matmul(ctx, *lw.wo, attn_out);
    detail::add_bias_rows(attn_out, *lw.bo);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn_out.data[i];

    kern::layer_norm(x, *lw.ln2_g, *lw.ln2_b, h);
    kern::matmul(h, *lw.w1, m1);
    detail::add_bias_rows(m1, *lw.b1);
    for (float& e : m1.data) e = kern::gelu_scalar(e);
    kern::matmul(m1, *lw.w2, m2);
    detail::add_bias_rows(m2, *lw.b2);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += m2.data[i];

    // post-MLP residual stream: the hook site for layer l
    if (capture && capture->layer == l) {
      res.captured = x;
      res.has_capture = true;
    }
    if (iv && iv->site.layer == l) detail::apply_delta_rows(x, *iv, generated_from);
  }

  kern::layer_norm(x, *w.lnf_g, *w.lnf_b, h);
  kern::matmul(h, *w.unemb, res.logits);
  if (fill_cache) fill_cache->length = t_len;
  return res;
}

// Incremental decoding session over a KV cache. prefill() runs the batched
// path for the prompt; step() extends by one token with matrix-vector work.
class LmSession {
 public:
  LmSession(const LmCheckpoint& ck, const Intervention* iv = nullptr, int generated_from = 0)
      : ck_(ck), weights_(detail::bind_weights(ck)), cache_(ck.config), iv_(iv),
        generated_from_(generated_from) {
    if (iv_) {
      validate_site(iv_->site, ck.config);
      if (iv_->delta.numel() != ck.config.d_model)
        throw ShapeError("intervention delta has " + std::to_string(iv_->delta.numel()) +
                         " entries, expected d_model " + std::to_string(ck.config.d_model));
      iv_active_ = !iv_->delta.all_zero();
    }
  }

  int length() const { return cache_.length; }

  // Returns logits for the last prompt position.
  std::vector<float> prefill(const std::vector<int>& tokens) {
    ForwardResult r = lm_forward(ck_, tokens, iv_, nullptr, generated_from_, &cache_);
    const int last = r.logits.rows() - 1;
    return std::vector<float>(r.logits.row_ptr(last), r.logits.row_ptr(last) + r.logits.cols());
  }

  // Appends one token at the next position and returns its logits row.
  std::vector<float> step(int token) {
    const LmConfig& cfg = ck_.config;
    const int pos = cache_.length;
    if (pos >= cfg.context_length) throw ContractError("step: context window is full");
    if (token < 0 || token >= cfg.vocab_size)
      throw ContractError("step: token id " + std::to_string(token) + " outside vocab");
    const int d = cfg.d_model, nh = cfg.n_heads, hd = cfg.head_dim();
    const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

    std::vector<float> x(static_cast<size_t>(d));
    {
      const float* te = weights_.wte->row_ptr(token);
      const float* pe = weights_.wpe->row_ptr(pos);
      for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = te[j] + pe[j];
    }

    std::vector<float> h(static_cast<size_t>(d)), q(static_cast<size_t>(d)),
        ctx(static_cast<size_t>(d)), tmp;
    for (int l = 0; l < cfg.n_layers; ++l) {
      const auto& lw = weights_.layers[l];
      norm_vec(x, *lw.ln1_g, *lw.ln1_b, h);
      matvec(h, *lw.wq, *lw.bq, q);
      float* krow = cache_.k[l].row_ptr(pos);
      float* vrow = cache_.v[l].row_ptr(pos);
      matvec_into(h, *lw.wk, *lw.bk, krow);
      matvec_into(h, *lw.wv, *lw.bv, vrow);

      const Tensor& kc = cache_.k[l];
      const Tensor& vc = cache_.v[l];
      for (int head = 0; head < nh; ++head) {
        const int c0 = head * hd;
        scores_.assign(static_cast<size_t>(pos) + 1, 0.0f);
        float mx = -1e30f;
        for (int t = 0; t <= pos; ++t) {
          const float* kt = kc.row_ptr(t) + c0;
          float acc = 0.0f;
          for (int e = 0; e < hd; ++e) acc += q[static_cast<size_t>(c0 + e)] * kt[e];
          acc *= inv_sqrt_hd;
          scores_[static_cast<size_t>(t)] = acc;
          mx = std::max(mx, acc);
        }
        double sum = 0.0;
        for (float& s : scores_) {
          s = std::exp(s - mx);
          sum += s;
        }
        const float inv = static_cast<float>(1.0 / sum);
        float* co = ctx.data() + c0;
        for (int e = 0; e < hd; ++e) co[e] = 0.0f;
        for (int t = 0; t <= pos; ++t) {
          const float p = scores_[static_cast<size_t>(t)] * inv;
          const float* vt = vc.row_ptr(t) + c0;
          for (int e = 0; e < hd; ++e) co[e] += p * vt[e];
        }
      }
      matvec(ctx, *lw.wo, *lw.bo, tmp);
      for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)];

      norm_vec(x, *lw.ln2_g, *lw.ln2_b, h);
      matvec(h, *lw.w1, *lw.b1, mlp_);
      for (float& e : mlp_) e = kern::gelu_scalar(e);
      matvec(mlp_, *lw.w2, *lw.b2, tmp);
      for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += tmp[static_cast<size_t>(j)];

      if (iv_active_ && iv_->site.layer == l) {
        bool covered = iv_->policy == PositionPolicy::AllPositions || pos >= generated_from_;
        if (covered)
          for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += iv_->delta.data[static_cast<size_t>(j)];
      }
    }
    cache_.length = pos + 1;

    norm_vec(x, *weights_.lnf_g, *weights_.lnf_b, h);
    std::vector<float> logits;
    matvec(h, *weights_.unemb, Tensor{}, logits);
    return logits;
  }

 private:
  static void norm_vec(const std::vector<float>& x, const Tensor& g, const Tensor& b,
                       std::vector<float>& out) {
    const int n = static_cast<int>(x.size());
    out.resize(x.size());
    double mean = 0.0;
    for (float e : x) mean += e;
    mean /= n;
    double var = 0.0;
    for (float e : x) {
      double dd = e - mean;
      var += dd * dd;
    }
    var /= n;
    float inv_std = static_cast<float>(1.0 / std::sqrt(var + kern::kLayerNormEps));
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j)] =
          (x[static_cast<size_t>(j)] - static_cast<float>(mean)) * inv_std *
              g.data[static_cast<size_t>(j)] + b.data[static_cast<size_t>(j)];
  }

  // out = x * W (+ bias). W is [in, out] row-major.
  static void matvec(const std::vector<float>& x, const Tensor& w, const Tensor& bias,
                     std::vector<float>& out) {
    out.assign(static_cast<size_t>(w.cols()), 0.0f);
    matvec_into(x, w, bias, out.data());
  }

  static void matvec_into(const std::vector<float>& x, const Tensor& w, const Tensor& bias,
                          float* out) {
    const int in = w.rows(), on = w.cols();
    using RVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;
    Eigen::Map<const RVec> xv(x.data(), in);
    Eigen::Map<RVec> ov(out, on);
    ov.noalias() = xv * kern::map(w);
    if (bias.numel() == on)
      for (int j = 0; j < on; ++j) out[j] += bias.data[static_cast<size_t>(j)];
  }

  const LmCheckpoint& ck_;
  detail::BoundWeights weights_;
  KvCache cache_;
  const Intervention* iv_;
  int generated_from_;
  bool iv_active_ = false;
  std::vector<float> scores_;
  std::vector<float> mlp_;
};

// Greedy pick with lowest-token-id tie break.
inline int argmax_token(const std::vector<float>& logits) {
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

inline int sample_token(const std::vector<float>& logits, float temperature, Rng& rng) {
  if (temperature == 0.0f) return argmax_token(logits);
  const size_t n = logits.size();
  float mx = logits[0];
  for (float v : logits) mx = std::max(mx, v);
  std::vector<double> p(n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] = std::exp(static_cast<double>((logits[i] - mx) / temperature));
    sum += p[i];
  }
  double u = rng.next_double() * sum;
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

// Autoregressive sampling. Identical (checkpoint, prompt, seed, intervention,
// temperature) always yields identical text. Stops at end-of-text, the token
// budget, or a full context window.
inline std::string lm_generate(const LmCheckpoint& ck, const std::string& prompt,
                               int max_new_tokens, float temperature, uint64_t seed,
                               const Intervention* iv = nullptr) {
  if (prompt.empty()) throw ContractError("generate: empty prompt");
  if (temperature < 0.0f) throw ContractError("generate: temperature must be >= 0");
  std::vector<int> tokens = tokenize_bytes(prompt);
  const int n_prompt = static_cast<int>(tokens.size());
  if (n_prompt > ck.config.context_length)
    throw ContractError("generate: prompt length " + std::to_string(n_prompt) +
                        " exceeds context_length " + std::to_string(ck.config.context_length));
  Rng rng(derive_seed(seed, /*stream=*/0x9e));
  LmSession session(ck, iv, n_prompt);
  std::vector<float> logits = session.prefill(tokens);
  std::vector<int> generated;
  for (int i = 0; i < max_new_tokens; ++i) {
    if (session.length() >= ck.config.context_length) break;
    int next = sample_token(logits, temperature, rng);
    if (next == kEndOfText) break;
    generated.push_back(next);
    if (session.length() + 1 > ck.config.context_length) break;
    logits = session.step(next);
  }
  return detokenize_bytes(generated);
}

// ---- checkpoint serialization (magic "STLB") ----

inline void save_checkpoint(const LmCheckpoint& ck, const std::string& path) {
  ByteWriter w;
  w.bytes("STLB", 4);
  w.u16(kTensorTableVersion);
  w.u32(static_cast<uint32_t>(ck.config.n_layers));
  w.u32(static_cast<uint32_t>(ck.config.d_model));
  w.u32(static_cast<uint32_t>(ck.config.n_heads));
  w.u32(static_cast<uint32_t>(ck.config.d_mlp));
  w.u32(static_cast<uint32_t>(ck.config.vocab_size));
  w.u32(static_cast<uint32_t>(ck.config.context_length));
  w.u64(ck.config.seed);
  w.u64(static_cast<uint64_t>(ck.train_steps));
  w.f32(ck.final_loss);
  w.u32(static_cast<uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) write_tensor_entry(w, name, t);
  write_file_bytes(path, w.data());
}

inline LmCheckpoint load_checkpoint(const std::string& path) {
  ByteReader r(read_file_bytes(path));
  check_magic_version(r, "STLB", "lm checkpoint");
  LmCheckpoint ck;
  ck.config.n_layers = static_cast<int>(r.u32());
  ck.config.d_model = static_cast<int>(r.u32());
  ck.config.n_heads = static_cast<int>(r.u32());
  ck.config.d_mlp = static_cast<int>(r.u32());
  ck.config.vocab_size = static_cast<int>(r.u32());
  ck.config.context_length = static_cast<int>(r.u32());
  ck.config.seed = r.u64();
  ck.train_steps = static_cast<int64_t>(r.u64());
  ck.final_loss = r.f32();
  ck.config.validate();
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) ck.params.push_back(read_tensor_entry(r));
  if (r.remaining() != 0)
    throw FormatError("lm checkpoint: " + std::to_string(r.remaining()) +
                      " trailing bytes at offset " + std::to_string(r.offset()));
  // Shape audit against the config the file claims.
  auto expect = lm_param_shapes(ck.config);
  if (expect.size() != ck.params.size())
    throw FormatError("lm checkpoint: expected " + std::to_string(expect.size()) +
                      " tensors, found " + std::to_string(ck.params.size()));
  for (size_t i = 0; i < expect.size(); ++i) {
    if (ck.params[i].first != expect[i].first || ck.params[i].second.shape != expect[i].second)
      throw FormatError("lm checkpoint: tensor " + std::to_string(i) + " (" +
                        ck.params[i].first + ") does not match config");
  }
  ck.build_index();
  return ck;
}

}  // namespace steerlab
