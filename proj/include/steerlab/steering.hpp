#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "steerlab/sae.hpp"

namespace steerlab {

enum class AlphaSource { Calibrated, Override };

inline const char* to_string(AlphaSource s) {
  return s == AlphaSource::Calibrated ? "calibrated" : "override";
}

// One point of the experimental grid: where to intervene (layer), along which
// feature direction, and how hard (beta, kept on the [-100, 100] scale).
struct SteeringSpec {
  int layer = 0;
  int feature_id = 0;
  float beta = 0.0f;
  AlphaSource alpha_source = AlphaSource::Calibrated;
  float alpha_override = 0.0f;
  PositionPolicy policy = PositionPolicy::AllPositions;
};

constexpr float kBetaMin = -100.0f;
constexpr float kBetaMax = 100.0f;

inline void validate_spec(const SteeringSpec& spec, int n_features) {
  if (spec.beta < kBetaMin || spec.beta > kBetaMax)
    throw ContractError("steering beta " + std::to_string(spec.beta) + " outside [" +
                        std::to_string(kBetaMin) + ", " + std::to_string(kBetaMax) + "]");
  if (spec.feature_id < 0 || spec.feature_id >= n_features)
    throw ContractError("feature index out of range [0, " + std::to_string(n_features) + ")");
}

inline float resolve_alpha(const SteeringSpec& spec, const FeatureStats* stats) {
  if (spec.alpha_source == AlphaSource::Override) return spec.alpha_override;
  if (!stats || spec.feature_id >= stats->n_features())
    throw ConfigError("alpha unresolved: no calibration stats for feature " +
                      std::to_string(spec.feature_id) + " and no override given");
  return stats->alpha[static_cast<size_t>(spec.feature_id)];
}

// The steering operation: a_steered = a + alpha * beta * v_i. The input is
// never modified.
inline Tensor apply_steering(const Tensor& a, const SteeringSpec& spec, const SaeModel& sae,
                             const FeatureStats* stats) {
  check_feature_index(sae, spec.feature_id);
  if (a.numel() != sae.config.d_in)
    throw ShapeError("apply: activation has " + std::to_string(a.numel()) +
                     " entries, expected " + std::to_string(sae.config.d_in));
  float alpha = resolve_alpha(spec, stats);
  const float* v = sae.w_dec.row_ptr(spec.feature_id);
  Tensor out = a;
  const float scale = alpha * spec.beta;
  for (int j = 0; j < sae.config.d_in; ++j) out.data[static_cast<size_t>(j)] += scale * v[j];
  return out;
}

struct PreparedIntervention {
  Intervention intervention;
  bool dead_feature = false;
  float alpha = 0.0f;
};

// Builds the forward-pass intervention whose delta = alpha * beta * v_i at
// the spec's layer. Dead-feature provenance rides along as metadata.
inline PreparedIntervention make_intervention(const SteeringSpec& spec, const SaeModel& sae,
                                              const FeatureStats* stats) {
  check_feature_index(sae, spec.feature_id);
  float alpha = resolve_alpha(spec, stats);
  PreparedIntervention out;
  out.alpha = alpha;
  out.dead_feature = stats && spec.feature_id < stats->n_features() &&
                     stats->dead[static_cast<size_t>(spec.feature_id)] != 0;
  out.intervention.site = HookSite{spec.layer};
  out.intervention.policy = spec.policy;
  out.intervention.delta = Tensor({sae.config.d_in});
  const float* v = sae.w_dec.row_ptr(spec.feature_id);
  const float scale = alpha * spec.beta;
  for (int j = 0; j < sae.config.d_in; ++j)
    out.intervention.delta.data[static_cast<size_t>(j)] = scale * v[j];
  return out;
}

struct BackendInfo {
  std::vector<int> layers;
  int n_features = 0;
  int max_new_tokens = 0;
};

struct PairedGeneration {
  std::string steered_text;
  std::string default_text;
  bool seed_paired = true;  // false when the backend cannot honor seeds
};

// Behavioral contract every execution target obeys: paired_generate with a
// zero-effect spec must reproduce the default generation for the same seed.
class SteeringBackend {
 public:
  virtual ~SteeringBackend() = default;
  virtual BackendInfo info() const = 0;
  virtual PairedGeneration paired_generate(const std::string& prompt, const SteeringSpec& spec,
                                           uint64_t seed, float temperature,
                                           int max_new_tokens) = 0;
  virtual bool feature_dead(const SteeringSpec& spec) const { return false; }
  virtual float resolved_alpha(const SteeringSpec& spec) const { return 0.0f; }
};

// Runs the checkpoint in-process with one (SAE, stats) pair per steerable
// layer. Read-only over model state, safe for concurrent paired_generate.
class LocalBackend : public SteeringBackend {
 public:
  LocalBackend(const LmCheckpoint& ck,
               std::map<int, std::pair<const SaeModel*, const FeatureStats*>> by_layer)
      : ck_(ck), by_layer_(std::move(by_layer)) {
    if (by_layer_.empty()) throw ConfigError("local backend: no SAEs attached");
  }

  BackendInfo info() const override {
    BackendInfo bi;
    for (const auto& [layer, _] : by_layer_) bi.layers.push_back(layer);
    bi.n_features = by_layer_.begin()->second.first->config.n_features;
    bi.max_new_tokens = ck_.config.context_length;
    return bi;
  }

  PairedGeneration paired_generate(const std::string& prompt, const SteeringSpec& spec,
                                   uint64_t seed, float temperature,
                                   int max_new_tokens) override {
    const auto& [sae, stats] = lookup(spec.layer);
    validate_spec(spec, sae->config.n_features);
    PreparedIntervention prep = make_intervention(spec, *sae, stats);
    PairedGeneration out;
    out.steered_text =
        lm_generate(ck_, prompt, max_new_tokens, temperature, seed, &prep.intervention);
    out.default_text = lm_generate(ck_, prompt, max_new_tokens, temperature, seed);
    out.seed_paired = true;
    return out;
  }

  bool feature_dead(const SteeringSpec& spec) const override {
    const auto& [sae, stats] = lookup(spec.layer);
    return stats && spec.feature_id < stats->n_features() &&
           stats->dead[static_cast<size_t>(spec.feature_id)] != 0;
  }

  float resolved_alpha(const SteeringSpec& spec) const override {
    const auto& [sae, stats] = lookup(spec.layer);
    return resolve_alpha(spec, stats);
  }

  const LmCheckpoint& checkpoint() const { return ck_; }

 private:
  const std::pair<const SaeModel*, const FeatureStats*>& lookup(int layer) const {
    auto it = by_layer_.find(layer);
    if (it == by_layer_.end())
      throw ContractError("backend does not support layer " + std::to_string(layer));
    return it->second;
  }

  const LmCheckpoint& ck_;
  std::map<int, std::pair<const SaeModel*, const FeatureStats*>> by_layer_;
};

}  // namespace steerlab
