#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "steerlab/corpus.hpp"
#include "steerlab/metrics.hpp"
#include "steerlab/steering.hpp"

namespace steerlab {

constexpr int kRecordSchemaVersion = 1;

// Paper layers {9, 20, 31} of a 42-layer model sit at fractional depths
// ~{0.25, 0.5, 0.9}; the same fractions (floored) pick this model's early,
// middle and late intervention layers.
inline std::vector<int> default_layer_set(int n_layers) {
  std::vector<int> out;
  for (double frac : {0.25, 0.5, 0.9}) {
    int layer = static_cast<int>(frac * n_layers);
    if (layer >= n_layers) layer = n_layers - 1;
    if (out.empty() || out.back() != layer) out.push_back(layer);
  }
  return out;
}

struct SweepConfig {
  int n_runs = 100;
  std::vector<int> layers;  // empty -> default_layer_set of the backend's model
  float beta_min = kBetaMin;
  float beta_max = kBetaMax;
  bool force_beta_zero = false;  // identity-gate override; keeps the range non-degenerate
  int feature_domain = 0;        // 0 -> backend's feature count
  float temperature = 0.5f;
  uint64_t master_seed = 1;
  bool bench_memorization = true;
  bool bench_fluency = true;
  bool bench_tasks = true;
  int mem_subset = 0;      // 0 -> all items
  int fluency_subset = 0;  // 0 -> all probes
  int task_subset = 16;    // eval items per task kind
  int max_new_tokens = 160;
  int fluency_max_new = 48;
  int task_max_new = 8;
  int threads = 0;  // 0 -> auto
  AnlcsUnit unit = AnlcsUnit::Char;

  void validate() const {
    if (n_runs < 1) throw ConfigError("sweep: n_runs must be >= 1");
    if (!(beta_min < beta_max))
      throw ConfigError("sweep: beta range is degenerate [" + std::to_string(beta_min) + ", " +
                        std::to_string(beta_max) + "]");
    if (beta_min < kBetaMin || beta_max > kBetaMax)
      throw ConfigError("sweep: beta range exceeds [-100, 100]");
    if (temperature < 0) throw ConfigError("sweep: temperature must be >= 0");
  }
};

// Fixed evaluation material shared by every run of a sweep; subsets are drawn
// once from the master seed so that runs stay comparable.
struct EvalSets {
  std::vector<MemorizationItem> mem;
  std::vector<FluencyProbe> probes;
  std::vector<TaskItem> bool_items;
  std::vector<TaskItem> factoid_items;
};

inline EvalSets make_eval_sets(const std::vector<MemorizationItem>& mem_items,
                               const std::vector<FluencyProbe>& probes,
                               const std::vector<Fact>& facts, const SweepConfig& cfg) {
  EvalSets out;
  auto take_subset = [&](auto const& all, int n, uint64_t stream) {
    std::vector<typename std::decay_t<decltype(all)>::value_type> picked;
    if (n <= 0 || n >= static_cast<int>(all.size())) {
      picked = all;
    } else {
      Rng rng(derive_seed(cfg.master_seed, stream));
      auto perm = rng.permutation(all.size());
      for (int i = 0; i < n; ++i) picked.push_back(all[perm[static_cast<size_t>(i)]]);
    }
    return picked;
  };
  if (cfg.bench_memorization) out.mem = take_subset(mem_items, cfg.mem_subset, 0x3e3);
  if (cfg.bench_fluency) out.probes = take_subset(probes, cfg.fluency_subset, 0xf1);
  if (cfg.bench_tasks) {
    for (int i = 0; i < cfg.task_subset; ++i) {
      out.bool_items.push_back(
          gen_bool_expr(derive_seed(cfg.master_seed, 0xbe, static_cast<uint64_t>(i)), i % 3));
      out.factoid_items.push_back(
          gen_factoid(derive_seed(cfg.master_seed, 0xfe, static_cast<uint64_t>(i)), facts));
    }
  }
  return out;
}

// One paired steered/default experiment and all of its metric outputs.
struct RunRecord {
  int run_index = 0;
  SteeringSpec spec;
  uint64_t run_seed = 0;
  double alpha = 0.0;
  bool dead_feature = false;
  bool seed_paired = true;
  std::string anlcs_unit = "char";
  std::vector<std::string> benchmarks;
  ScoreReport steered;
  ScoreReport defaulted;
  uint64_t steered_text_hash = 0;
  uint64_t default_text_hash = 0;
  int fluency_skipped = 0;
  double wall_ms = 0.0;
  std::string status = "ok";  // "ok" | "failed"
  std::string error;
};

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline nlohmann::json score_to_json(const ScoreReport& s) {
  return {{"anlcs", s.anlcs},
          {"perplexity_steered", s.perplexity_steered},
          {"perplexity_default", s.perplexity_default},
          {"ppl_ratio", s.ppl_ratio},
          {"meteor", s.meteor},
          {"task_accuracies", s.task_accuracies}};
}

inline ScoreReport score_from_json(const nlohmann::json& j) {
  ScoreReport s;
  s.anlcs = j.at("anlcs").get<double>();
  s.perplexity_steered = j.at("perplexity_steered").get<double>();
  s.perplexity_default = j.at("perplexity_default").get<double>();
  s.ppl_ratio = j.at("ppl_ratio").get<double>();
  s.meteor = j.at("meteor").get<double>();
  for (auto& [k, v] : j.at("task_accuracies").items()) s.task_accuracies[k] = v.get<double>();
  return s;
}

}  // namespace detail

inline nlohmann::json record_to_json(const RunRecord& r) {
  return {{"v", kRecordSchemaVersion},
          {"run", r.run_index},
          {"spec",
           {{"layer", r.spec.layer},
            {"feature_id", r.spec.feature_id},
            {"beta", r.spec.beta},
            {"alpha_source", to_string(r.spec.alpha_source)},
            {"alpha_override", r.spec.alpha_override},
            {"position_policy", to_string(r.spec.policy)}}},
          {"run_seed", r.run_seed},
          {"alpha", r.alpha},
          {"dead_feature", r.dead_feature},
          {"seed_paired", r.seed_paired},
          {"anlcs_unit", r.anlcs_unit},
          {"benchmarks", r.benchmarks},
          {"steered", detail::score_to_json(r.steered)},
          {"default", detail::score_to_json(r.defaulted)},
          {"steered_text_hash", r.steered_text_hash},
          {"default_text_hash", r.default_text_hash},
          {"fluency_skipped", r.fluency_skipped},
          {"wall_ms", r.wall_ms},
          {"status", r.status},
          {"error", r.error}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  if (j.value("v", -1) != kRecordSchemaVersion)
    throw FormatError("run record: unsupported schema version " +
                      std::to_string(j.value("v", -1)));
  RunRecord r;
  r.run_index = j.at("run").get<int>();
  const auto& s = j.at("spec");
  r.spec.layer = s.at("layer").get<int>();
  r.spec.feature_id = s.at("feature_id").get<int>();
  r.spec.beta = s.at("beta").get<float>();
  r.spec.alpha_source =
      s.at("alpha_source").get<std::string>() == "override" ? AlphaSource::Override
                                                            : AlphaSource::Calibrated;
  r.spec.alpha_override = s.at("alpha_override").get<float>();
  r.spec.policy = position_policy_from_string(s.at("position_policy").get<std::string>());
  r.run_seed = j.at("run_seed").get<uint64_t>();
  r.alpha = j.at("alpha").get<double>();
  r.dead_feature = j.at("dead_feature").get<bool>();
  r.seed_paired = j.at("seed_paired").get<bool>();
  r.anlcs_unit = j.at("anlcs_unit").get<std::string>();
  for (const auto& b : j.at("benchmarks")) r.benchmarks.push_back(b.get<std::string>());
  r.steered = detail::score_from_json(j.at("steered"));
  r.defaulted = detail::score_from_json(j.at("default"));
  r.steered_text_hash = j.at("steered_text_hash").get<uint64_t>();
  r.default_text_hash = j.at("default_text_hash").get<uint64_t>();
  r.fluency_skipped = j.at("fluency_skipped").get<int>();
  r.wall_ms = j.at("wall_ms").get<double>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", "");
  return r;
}

// Complete records keep ppl_ratio consistent with the stored per-arm values.
inline void validate_record(const RunRecord& r) {
  if (r.status != "ok" && r.status != "failed")
    throw FormatError("run record " + std::to_string(r.run_index) + ": bad status " + r.status);
  if (r.status == "ok" && r.steered.perplexity_default > 0) {
    double recomputed = r.steered.perplexity_steered / r.steered.perplexity_default;
    if (std::fabs(recomputed - r.steered.ppl_ratio) > 1e-9)
      throw FormatError("run record " + std::to_string(r.run_index) +
                        ": ppl_ratio inconsistent with per-arm perplexities");
  }
}

// Deterministic function of (master seed, run index): layer uniform over the
// layer set, beta uniform over the range, feature uniform over the domain.
inline SteeringSpec sample_params(const SweepConfig& cfg, const std::vector<int>& layers,
                                  int n_features, int run_index) {
  if (run_index < 0 || run_index >= cfg.n_runs)
    throw ContractError("sample_params: run index " + std::to_string(run_index) +
                        " outside [0, " + std::to_string(cfg.n_runs) + ")");
  Rng rng(derive_seed(cfg.master_seed, /*stream=*/0x9d1d, static_cast<uint64_t>(run_index)));
  SteeringSpec spec;
  spec.layer = layers[static_cast<size_t>(rng.uniform_int(layers.size()))];
  spec.beta = static_cast<float>(rng.uniform(cfg.beta_min, cfg.beta_max));
  int domain = cfg.feature_domain > 0 ? cfg.feature_domain : n_features;
  spec.feature_id = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(domain)));
  if (cfg.force_beta_zero) spec.beta = 0.0f;
  return spec;
}

// Executes one paired experiment across the toggled benchmarks. Backend
// failures mark the record failed; the sweep continues.
inline RunRecord run_one(SteeringBackend& backend, const LmCheckpoint& scorer,
                         const EvalSets& eval, const SweepConfig& cfg, int run_index) {
  auto t0 = std::chrono::steady_clock::now();
  BackendInfo info = backend.info();
  std::vector<int> layers = cfg.layers.empty() ? info.layers : cfg.layers;
  RunRecord rec;
  rec.run_index = run_index;
  rec.spec = sample_params(cfg, layers, info.n_features, run_index);
  rec.run_seed = derive_seed(cfg.master_seed, /*stream=*/0x101, static_cast<uint64_t>(run_index));
  rec.anlcs_unit = to_string(cfg.unit);

  try {
    rec.alpha = backend.resolved_alpha(rec.spec);
    rec.dead_feature = backend.feature_dead(rec.spec);

    std::string steered_concat, default_concat;
    auto track = [&](const PairedGeneration& pg) {
      steered_concat += pg.steered_text;
      steered_concat.push_back('\x1f');
      default_concat += pg.default_text;
      default_concat.push_back('\x1f');
      if (!pg.seed_paired) rec.seed_paired = false;
    };

    if (cfg.bench_memorization && !eval.mem.empty()) {
      rec.benchmarks.push_back("memorization");
      std::vector<std::pair<std::string, std::string>> steered_pairs, default_pairs;
      for (size_t i = 0; i < eval.mem.size(); ++i) {
        const auto& item = eval.mem[i];
        std::string prompt = render_memorization_prompt(item);
        int budget = std::min(cfg.max_new_tokens,
                              static_cast<int>(item.ground_truth.size()) + 24);
        uint64_t seed = derive_seed(rec.run_seed, 0x3e3, i);
        PairedGeneration pg =
            backend.paired_generate(prompt, rec.spec, seed, cfg.temperature, budget);
        track(pg);
        steered_pairs.emplace_back(item.ground_truth, strip_prompt_echo(pg.steered_text, prompt));
        default_pairs.emplace_back(item.ground_truth, strip_prompt_echo(pg.default_text, prompt));
      }
      rec.steered.anlcs = anlcs(steered_pairs, cfg.unit);
      rec.defaulted.anlcs = anlcs(default_pairs, cfg.unit);
    }

    if (cfg.bench_fluency && !eval.probes.empty()) {
      rec.benchmarks.push_back("fluency");
      double meteor_s = 0.0, meteor_d = 0.0;
      double ppl_s = 0.0, ppl_d = 0.0;
      int scored = 0;
      for (size_t i = 0; i < eval.probes.size(); ++i) {
        const auto& probe = eval.probes[i];
        uint64_t seed = derive_seed(rec.run_seed, 0xf1, i);
        PairedGeneration pg = backend.paired_generate(probe.instruction, rec.spec, seed,
                                                      cfg.temperature, cfg.fluency_max_new);
        track(pg);
        meteor_s += meteor_exact(pg.steered_text, probe.sentence);
        meteor_d += meteor_exact(pg.default_text, probe.sentence);
        if (tokenize_bytes(pg.steered_text).size() >= 2 &&
            tokenize_bytes(pg.default_text).size() >= 2) {
          ppl_s += perplexity(scorer, pg.steered_text);
          ppl_d += perplexity(scorer, pg.default_text);
          ++scored;
        } else {
          ++rec.fluency_skipped;
        }
      }
      rec.steered.meteor = meteor_s / static_cast<double>(eval.probes.size());
      rec.defaulted.meteor = meteor_d / static_cast<double>(eval.probes.size());
      if (scored == 0) throw Error("no scoreable fluency generations (all too short)");
      double mean_s = ppl_s / scored, mean_d = ppl_d / scored;
      for (ScoreReport* s : {&rec.steered, &rec.defaulted}) {
        s->perplexity_steered = mean_s;
        s->perplexity_default = mean_d;
        s->ppl_ratio = mean_s / mean_d;
      }
    } else {
      for (ScoreReport* s : {&rec.steered, &rec.defaulted}) {
        s->perplexity_steered = 1.0;
        s->perplexity_default = 1.0;
        s->ppl_ratio = 1.0;
      }
    }

    if (cfg.bench_tasks && (!eval.bool_items.empty() || !eval.factoid_items.empty())) {
      rec.benchmarks.push_back("tasks");
      auto run_kind = [&](const std::vector<TaskItem>& items, const std::string& kind,
                          uint64_t stream) {
        if (items.empty()) return;
        std::vector<std::string> golds, steered_answers, default_answers;
        for (size_t i = 0; i < items.size(); ++i) {
          uint64_t seed = derive_seed(rec.run_seed, stream, i);
          PairedGeneration pg = backend.paired_generate(format_task_prompt(items[i].question),
                                                        rec.spec, seed, cfg.temperature,
                                                        cfg.task_max_new);
          track(pg);
          golds.push_back(items[i].gold);
          steered_answers.push_back(pg.steered_text);
          default_answers.push_back(pg.default_text);
        }
        rec.steered.task_accuracies[kind] = task_accuracy(golds, steered_answers);
        rec.defaulted.task_accuracies[kind] = task_accuracy(golds, default_answers);
      };
      run_kind(eval.bool_items, "bool_expr", 0xb0);
      run_kind(eval.factoid_items, "factoid", 0xfa);
    }

    rec.steered_text_hash = fnv1a64(steered_concat);
    rec.default_text_hash = fnv1a64(default_concat);
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.error = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

// Reads an existing record file. Lines must parse in order 0..k-1; a partial
// trailing line (interrupted write) is tolerated and dropped.
inline std::vector<RunRecord> load_records(const std::string& path, bool tolerate_partial_tail = false) {
  std::ifstream f(path);
  std::vector<RunRecord> out;
  if (!f) return out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (tolerate_partial_tail && f.peek() == EOF) break;
      throw FormatError("record file line " + std::to_string(line_no) + ": invalid JSON");
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

struct SweepSummary {
  int n_runs = 0;
  int executed = 0;
  int resumed_from = 0;
  int failed = 0;
  double wall_s = 0.0;
  std::string record_path;
};

// Runs the grid. Records append to the file in run-index order as they
// complete, so any prefix of the file is a valid record set and a killed
// sweep resumes at the first missing index. Per-run seeds derive from
// (master seed, run index) only, so results are identical no matter how many
// threads execute or in which order runs finish.
inline SweepSummary run_sweep(SteeringBackend& backend, const LmCheckpoint& scorer,
                              const EvalSets& eval, const SweepConfig& cfg,
                              const std::string& out_path) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  std::vector<RunRecord> existing = load_records(out_path, /*tolerate_partial_tail=*/true);
  for (size_t i = 0; i < existing.size(); ++i) {
    if (existing[i].run_index != static_cast<int>(i))
      throw FormatError("record file is not a clean prefix: line " + std::to_string(i + 1) +
                        " holds run " + std::to_string(existing[i].run_index));
  }
  int start = static_cast<int>(existing.size());
  if (start > cfg.n_runs) throw ConfigError("record file already has more runs than n_runs");

  // Rewrite the prefix verbatim if a partial tail was dropped.
  {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw Error("cannot write record file: " + out_path);
    for (const auto& r : existing) f << record_to_json(r).dump() << "\n";
  }

  SweepSummary summary;
  summary.n_runs = cfg.n_runs;
  summary.resumed_from = start;
  summary.record_path = out_path;
  for (const auto& r : existing)
    if (r.status != "ok") ++summary.failed;

  if (start < cfg.n_runs) {
    int n_threads = cfg.threads > 0
                        ? cfg.threads
                        : std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
    std::atomic<int> next_index{start};
    std::map<int, RunRecord> ready;
    std::mutex mu;
    std::condition_variable cv;
    std::exception_ptr first_error;

    auto worker = [&] {
      while (true) {
        int idx = next_index.fetch_add(1);
        if (idx >= cfg.n_runs) return;
        try {
          RunRecord rec = run_one(backend, scorer, eval, cfg, idx);
          std::lock_guard<std::mutex> lock(mu);
          ready.emplace(idx, std::move(rec));
          cv.notify_all();
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
          cv.notify_all();
          return;
        }
      }
    };

    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);

    std::ofstream f(out_path, std::ios::app);
    if (!f) throw Error("cannot append to record file: " + out_path);
    int write_next = start;
    {
      std::unique_lock<std::mutex> lock(mu);
      while (write_next < cfg.n_runs) {
        cv.wait(lock, [&] { return first_error || ready.count(write_next) > 0; });
        if (first_error && ready.count(write_next) == 0) break;
        RunRecord rec = std::move(ready.at(write_next));
        ready.erase(write_next);
        lock.unlock();
        validate_record(rec);
        if (rec.status != "ok") ++summary.failed;
        f << record_to_json(rec).dump() << "\n";
        f.flush();
        ++summary.executed;
        ++write_next;
        lock.lock();
      }
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  summary.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

// ---- aggregation ----

// |beta| bins at the paper's thresholds: minimal impact below 25,
// degradation past 50.
inline int beta_bin_index(float beta) {
  float b = std::fabs(beta);
  if (b < 25.0f) return 0;
  if (b < 50.0f) return 1;
  return 2;
}

inline const char* beta_bin_label(int bin) {
  switch (bin) {
    case 0: return "[0,25)";
    case 1: return "[25,50)";
    default: return "[50,100]";
  }
}

struct GroupStats {
  int n = 0;
  double mean_steered_anlcs = 0.0;
  double mean_default_anlcs = 0.0;
  double median_steered_anlcs = 0.0;
  double median_default_anlcs = 0.0;
  double mean_ppl_ratio = 0.0;
  double mean_steered_meteor = 0.0;
  double mean_default_meteor = 0.0;
  std::map<std::string, double> mean_steered_task;
  std::map<std::string, double> mean_default_task;
};

struct Aggregates {
  std::map<int, GroupStats> by_layer;
  std::map<int, GroupStats> by_beta_bin;  // key: bin index
  GroupStats overall;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline GroupStats summarize(const std::vector<const RunRecord*>& rs) {
  GroupStats g;
  g.n = static_cast<int>(rs.size());
  if (rs.empty()) return g;
  std::vector<double> s_anlcs, d_anlcs;
  std::map<std::string, std::pair<double, int>> task_s, task_d;
  for (const RunRecord* r : rs) {
    g.mean_steered_anlcs += r->steered.anlcs;
    g.mean_default_anlcs += r->defaulted.anlcs;
    g.mean_ppl_ratio += r->steered.ppl_ratio;
    g.mean_steered_meteor += r->steered.meteor;
    g.mean_default_meteor += r->defaulted.meteor;
    s_anlcs.push_back(r->steered.anlcs);
    d_anlcs.push_back(r->defaulted.anlcs);
    for (auto& [k, v] : r->steered.task_accuracies) {
      task_s[k].first += v;
      task_s[k].second += 1;
    }
    for (auto& [k, v] : r->defaulted.task_accuracies) {
      task_d[k].first += v;
      task_d[k].second += 1;
    }
  }
  g.mean_steered_anlcs /= g.n;
  g.mean_default_anlcs /= g.n;
  g.mean_ppl_ratio /= g.n;
  g.mean_steered_meteor /= g.n;
  g.mean_default_meteor /= g.n;
  g.median_steered_anlcs = median(s_anlcs);
  g.median_default_anlcs = median(d_anlcs);
  for (auto& [k, p] : task_s) g.mean_steered_task[k] = p.first / p.second;
  for (auto& [k, p] : task_d) g.mean_default_task[k] = p.first / p.second;
  return g;
}

}  // namespace detail

// Mean/median metrics grouped by layer and by |beta| bin over the complete
// records.
inline Aggregates aggregate(const std::vector<RunRecord>& records) {
  std::vector<const RunRecord*> complete;
  for (const auto& r : records)
    if (r.status == "ok") complete.push_back(&r);
  if (complete.empty()) throw ContractError("aggregate: no complete records");

  Aggregates agg;
  std::map<int, std::vector<const RunRecord*>> by_layer, by_bin;
  for (const RunRecord* r : complete) {
    by_layer[r->spec.layer].push_back(r);
    by_bin[beta_bin_index(r->spec.beta)].push_back(r);
  }
  agg.overall = detail::summarize(complete);
  for (auto& [layer, rs] : by_layer) agg.by_layer[layer] = detail::summarize(rs);
  for (auto& [bin, rs] : by_bin) agg.by_beta_bin[bin] = detail::summarize(rs);
  return agg;
}

}  // namespace steerlab
