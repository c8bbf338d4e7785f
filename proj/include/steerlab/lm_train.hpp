#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "steerlab/lm.hpp"
#include "steerlab/optim.hpp"

namespace steerlab {

// One training sequence, already tokenized and terminated with end-of-text.
struct TrainSample {
  std::vector<int> tokens;
};

struct TrainOptions {
  int max_steps = 2500;
  int batch_size = 4;
  float lr = 1.5e-3f;
  int warmup_steps = 100;
  float lr_final_frac = 0.15f;
  float grad_clip = 1.0f;
  uint64_t seed = 7;
  // Early stop: every eval_every steps run greedy decoding on eval_pairs
  // (prompt, target) and stop once mean normalized-LCS reaches target_score.
  int eval_every = 0;
  double target_score = 0.985;
  int min_steps = 400;
  std::vector<std::pair<std::string, std::string>> eval_pairs;
  std::function<void(int step, float loss)> on_step;
};

struct TrainResult {
  LmCheckpoint checkpoint;
  std::vector<float> loss_curve;  // raw per-step loss
  int steps_run = 0;
};

// Tape forward over one sequence; mirrors lm_forward exactly but records
// every op so backward() yields parameter gradients.
struct LossTape {
  Tape tape;
  std::vector<Tape::NodeId> param_ids;  // aligned with checkpoint.params
  Tape::NodeId loss = -1;
};

inline LossTape build_loss_tape(const LmCheckpoint& ck, const std::vector<int>& tokens) {
  const LmConfig& cfg = ck.config;
  const int t_len = static_cast<int>(tokens.size());
  if (t_len < 2) throw ContractError("training sequence needs at least 2 tokens");
  if (t_len > cfg.context_length + 1)
    throw ContractError("training sequence length " + std::to_string(t_len) +
                        " exceeds context_length + 1");

  LossTape lt;
  Tape& tp = lt.tape;
  std::unordered_map<std::string, Tape::NodeId> id;
  for (const auto& [name, t] : ck.params) {
    Tape::NodeId n = tp.leaf(t);
    lt.param_ids.push_back(n);
    id[name] = n;
  }

  std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
  std::vector<int> targets(tokens.begin() + 1, tokens.end());
  const int t_in = static_cast<int>(inputs.size());
  const int nh = cfg.n_heads, hd = cfg.head_dim();

  Tape::NodeId x = tp.add(tp.embedding(id["wte"], inputs),
                          tp.slice_rows(id["wpe"], 0, t_in));
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    Tape::NodeId h = tp.layer_norm(x, id[p + "ln1.g"], id[p + "ln1.b"]);
    Tape::NodeId q = tp.add_row(tp.matmul(h, id[p + "attn.wq"]), id[p + "attn.bq"]);
    Tape::NodeId k = tp.add_row(tp.matmul(h, id[p + "attn.wk"]), id[p + "attn.bk"]);
    Tape::NodeId v = tp.add_row(tp.matmul(h, id[p + "attn.wv"]), id[p + "attn.bv"]);
    std::vector<Tape::NodeId> heads;
    for (int head = 0; head < nh; ++head) {
      int c0 = head * hd, c1 = (head + 1) * hd;
      Tape::NodeId qh = tp.slice_cols(q, c0, c1);
      Tape::NodeId kh = tp.slice_cols(k, c0, c1);
      Tape::NodeId vh = tp.slice_cols(v, c0, c1);
      Tape::NodeId scores = tp.scale(tp.matmul_nt(qh, kh), 1.0f / std::sqrt(static_cast<float>(hd)));
      Tape::NodeId probs = tp.softmax_rows(tp.causal_mask(scores));
      heads.push_back(tp.matmul(probs, vh));
    }
    Tape::NodeId attn = tp.add_row(tp.matmul(tp.concat_cols(heads), id[p + "attn.wo"]),
                                   id[p + "attn.bo"]);
    x = tp.add(x, attn);
    Tape::NodeId h2 = tp.layer_norm(x, id[p + "ln2.g"], id[p + "ln2.b"]);
    Tape::NodeId m = tp.gelu(tp.add_row(tp.matmul(h2, id[p + "mlp.w1"]), id[p + "mlp.b1"]));
    Tape::NodeId mlp_out = tp.add_row(tp.matmul(m, id[p + "mlp.w2"]), id[p + "mlp.b2"]);
    x = tp.add(x, mlp_out);
  }
  Tape::NodeId hf = tp.layer_norm(x, id["ln_f.g"], id["ln_f.b"]);
  Tape::NodeId logits = tp.matmul(hf, id["unemb"]);
  lt.loss = tp.cross_entropy(logits, targets);
  return lt;
}

namespace detail {

inline double greedy_eval_score(const LmCheckpoint& ck,
                                const std::vector<std::pair<std::string, std::string>>& pairs);

}  // namespace detail

// Memorization training: weighted sampling over the sample set, mean-of-batch
// gradients, Adam with warmup + cosine decay. Deterministic given seed.
inline TrainResult train_memorize(const LmConfig& cfg, const std::vector<TrainSample>& samples,
                                  const std::vector<double>& sample_weights,
                                  const TrainOptions& opt) {
  cfg.validate();
  if (samples.empty()) throw ContractError("train_memorize: empty sample set");
  if (!sample_weights.empty() && sample_weights.size() != samples.size())
    throw ContractError("train_memorize: weight count does not match sample count");
  for (const auto& s : samples) {
    if (static_cast<int>(s.tokens.size()) > cfg.context_length + 1)
      throw ContractError("train_memorize: a sample does not fit in context (" +
                          std::to_string(s.tokens.size()) + " tokens)");
  }

  TrainResult result;
  result.checkpoint = LmCheckpoint::init(cfg);
  LmCheckpoint& ck = result.checkpoint;
  if (opt.max_steps <= 0) return result;

  std::vector<double> cdf(samples.size());
  {
    double acc = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
      acc += sample_weights.empty() ? 1.0 : sample_weights[i];
      cdf[i] = acc;
    }
    if (acc <= 0.0) throw ContractError("train_memorize: weights sum to zero");
    for (double& c : cdf) c /= acc;
  }

  AdamHyperparams hp;
  hp.lr = opt.lr;
  std::vector<AdamState> states;
  std::vector<Tensor> grad_acc;
  states.reserve(ck.params.size());
  for (auto& [name, t] : ck.params) {
    states.emplace_back(t.shape, hp);
    grad_acc.emplace_back(Tensor(t.shape));
  }

  Rng pick(derive_seed(opt.seed, /*stream=*/0x7b));
  for (int step = 0; step < opt.max_steps; ++step) {
    for (Tensor& g : grad_acc) g.fill(0.0f);
    double step_loss = 0.0;
    for (int b = 0; b < opt.batch_size; ++b) {
      double u = pick.next_double();
      size_t idx = static_cast<size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (idx >= samples.size()) idx = samples.size() - 1;
      LossTape lt = build_loss_tape(ck, samples[idx].tokens);
      float loss = lt.tape.value(lt.loss).at(0);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged: non-finite loss at step " + std::to_string(step));
      step_loss += loss;
      lt.tape.backward(lt.loss);
      for (size_t pi = 0; pi < grad_acc.size(); ++pi) {
        const Tensor& g = lt.tape.grad(lt.param_ids[pi]);
        float* dst = grad_acc[pi].data.data();
        const float* src = g.data.data();
        for (size_t e = 0; e < g.data.size(); ++e) dst[e] += src[e];
      }
    }
    const float inv_b = 1.0f / static_cast<float>(opt.batch_size);
    std::vector<Tensor*> gptrs;
    gptrs.reserve(grad_acc.size());
    for (Tensor& g : grad_acc) {
      for (float& e : g.data) e *= inv_b;
      gptrs.push_back(&g);
    }
    clip_gradients(gptrs, opt.grad_clip);

    float lr_scale;
    if (step < opt.warmup_steps) {
      lr_scale = static_cast<float>(step + 1) / static_cast<float>(opt.warmup_steps);
    } else {
      float prog = static_cast<float>(step - opt.warmup_steps) /
                   std::max(1.0f, static_cast<float>(opt.max_steps - opt.warmup_steps));
      lr_scale = opt.lr_final_frac +
                 (1.0f - opt.lr_final_frac) * 0.5f * (1.0f + std::cos(3.14159265f * prog));
    }
    for (size_t pi = 0; pi < ck.params.size(); ++pi)
      adam_step(ck.params[pi].second, grad_acc[pi], states[pi], lr_scale);

    float mean_loss = static_cast<float>(step_loss / opt.batch_size);
    result.loss_curve.push_back(mean_loss);
    result.steps_run = step + 1;
    if (opt.on_step) opt.on_step(step, mean_loss);

    if (opt.eval_every > 0 && !opt.eval_pairs.empty() && step + 1 >= opt.min_steps &&
        (step + 1) % opt.eval_every == 0) {
      if (detail::greedy_eval_score(ck, opt.eval_pairs) >= opt.target_score) break;
    }
  }

  ck.train_steps = result.steps_run;
  int tail = std::min<int>(100, static_cast<int>(result.loss_curve.size()));
  double s = 0.0;
  for (int i = 0; i < tail; ++i) s += result.loss_curve[result.loss_curve.size() - 1 - i];
  ck.final_loss = tail > 0 ? static_cast<float>(s / tail) : 0.0f;
  return result;
}

namespace detail {

// Character-level LCS, local copy so training does not pull in the metrics
// header. Two-row DP.
inline size_t lcs_chars(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double greedy_eval_score(const LmCheckpoint& ck,
                                const std::vector<std::pair<std::string, std::string>>& pairs) {
  double total = 0.0;
  for (const auto& [prompt, target] : pairs) {
    int budget = static_cast<int>(target.size()) + 8;
    std::string out = lm_generate(ck, prompt, budget, 0.0f, 0);
    size_t l = lcs_chars(target, out);
    total += static_cast<double>(std::min(l, target.size())) / static_cast<double>(target.size());
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace detail

}  // namespace steerlab
