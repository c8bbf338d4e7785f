#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "steerlab/corpus.hpp"
#include "steerlab/harness.hpp"
#include "steerlab/labeling.hpp"
#include "steerlab/lm_train.hpp"
#include "steerlab/report.hpp"
#include "steerlab/sae.hpp"

#include <CLI11.hpp>

namespace steerlab {

namespace cli_detail {

struct CorpusArgs {
  std::string corpus = "builtin";
  std::string facts = "builtin";
  std::string fluency = "builtin";

  void attach(CLI::App* cmd) {
    cmd->add_option("--corpus", corpus, "memorization corpus JSONL, or \"builtin\"");
    cmd->add_option("--facts", facts, "fact table JSONL, or \"builtin\"");
    cmd->add_option("--fluency", fluency, "fluency probes JSONL, or \"builtin\"");
  }

  std::vector<MemorizationItem> mem() const {
    return corpus == "builtin" ? make_desk_memorization_corpus() : load_memorization_corpus(corpus);
  }
  std::vector<Fact> fact_table() const {
    return facts == "builtin" ? make_desk_fact_table() : load_fact_table(facts);
  }
  std::vector<FluencyProbe> probes() const {
    return fluency == "builtin" ? make_desk_fluency_probes() : load_fluency_probes(fluency);
  }
};

inline std::string artifact(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

inline std::string sae_path(const std::string& dir, int layer) {
  return artifact(dir, "sae_layer" + std::to_string(layer) + ".stsa");
}

inline std::string stats_path(const std::string& dir, int layer) {
  return artifact(dir, "stats_layer" + std::to_string(layer) + ".json");
}

inline std::string acts_path(const std::string& dir, int layer) {
  return artifact(dir, "acts_layer" + std::to_string(layer) + ".stac");
}

inline void emit(const nlohmann::json& machine, const std::string& human, bool json_mode) {
  // Generated byte-level text is not always valid UTF-8; replace rather than
  // throw when serializing it for display.
  if (json_mode)
    std::cout << machine.dump(2, ' ', false, nlohmann::json::error_handler_t::replace)
              << std::endl;
  else
    std::cout << human << std::flush;
}

struct LoadedBackendParts {
  LmCheckpoint ck;
  std::vector<int> layers;
  std::vector<SaeModel> saes;
  std::vector<FeatureStats> stats;

  LocalBackend make_backend() {
    std::map<int, std::pair<const SaeModel*, const FeatureStats*>> by_layer;
    for (size_t i = 0; i < saes.size(); ++i)
      by_layer[layers[i]] = {&saes[i], &stats[i]};
    return LocalBackend(ck, by_layer);
  }
};

inline LoadedBackendParts load_backend_parts(const std::string& dir,
                                             std::vector<int> layers = {}) {
  LoadedBackendParts parts;
  parts.ck = load_checkpoint(artifact(dir, "lm.stlb"));
  if (layers.empty()) {
    for (int l : default_layer_set(parts.ck.config.n_layers))
      if (std::filesystem::exists(sae_path(dir, l))) layers.push_back(l);
    if (layers.empty())
      throw ConfigError("no sae_layer<L>.stsa artifacts found under " + dir +
                        "; run capture-acts/train-sae/calibrate first");
  }
  parts.layers = layers;
  for (int l : layers) {
    parts.saes.push_back(load_sae(sae_path(dir, l)));
    if (!std::filesystem::exists(stats_path(dir, l)))
      throw ConfigError("missing calibration stats for layer " + std::to_string(l) + ": " +
                        stats_path(dir, l));
    parts.stats.push_back(load_feature_stats(stats_path(dir, l)));
  }
  return parts;
}

}  // namespace cli_detail

// The operator surface. Exit codes: 0 success, 1 operational error, 2 usage
// error. Every subcommand supports --json for machine-readable output.
inline int cli_main(int argc, const char* const* argv) {
  using namespace cli_detail;

  CLI::App app{"steerlab: desk-scale activation-steering laboratory"};
  app.require_subcommand(0, 1);
  app.set_config("--config", "", "key = value config file (# comments)");

  uint64_t seed = 7;
  std::string out_dir = "out";
  bool json_mode = false;
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_option("--out", out_dir, "artifact/output directory")->capture_default_str();
  app.add_flag("--json", json_mode, "machine-readable JSON output");

  int exit_code = 0;
  std::function<void()> action;

  // ---- train-lm ----
  {
    auto* cmd = app.add_subcommand("train-lm", "train the memorizing byte-level LM");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto steps = std::make_shared<int>(2600);
    auto batch = std::make_shared<int>(4);
    auto lr = std::make_shared<float>(1.5e-3f);
    auto quiet = std::make_shared<bool>(false);
    cmd->add_option("--steps", *steps, "max optimizer steps")->capture_default_str();
    cmd->add_option("--batch", *batch, "sequences per step")->capture_default_str();
    cmd->add_option("--lr", *lr, "peak learning rate")->capture_default_str();
    cmd->add_flag("--quiet", *quiet, "suppress progress lines");
    cmd->callback([&, args, steps, batch, lr, quiet] {
      action = [&, args, steps, batch, lr, quiet] {
        std::filesystem::create_directories(out_dir);
        auto mem = args->mem();
        TrainingSet set = build_training_set(mem, args->fact_table(), args->probes());
        LmConfig cfg;
        cfg.seed = seed;
        TrainOptions opt;
        opt.max_steps = *steps;
        opt.batch_size = *batch;
        opt.lr = *lr;
        opt.seed = seed;
        opt.eval_every = 200;
        opt.min_steps = std::min(1200, *steps);
        opt.eval_pairs = set.mem_eval_pairs;
        if (!*quiet)
          opt.on_step = [](int step, float loss) {
            if ((step + 1) % 100 == 0)
              std::cerr << "step " << (step + 1) << " loss " << loss << "\n";
          };
        TrainResult res = train_memorize(cfg, set.samples, set.weights, opt);
        double score = detail::greedy_eval_score(res.checkpoint, set.mem_eval_pairs);
        std::string path = artifact(out_dir, "lm.stlb");
        save_checkpoint(res.checkpoint, path);
        emit({{"checkpoint", path},
              {"steps", res.steps_run},
              {"final_loss", res.checkpoint.final_loss},
              {"train_anlcs", score}},
             "trained " + std::to_string(res.steps_run) + " steps, smoothed loss " +
                 std::to_string(res.checkpoint.final_loss) + ", greedy train ANLCS " +
                 std::to_string(score) + "\nsaved " + path + "\n",
             json_mode);
      };
    });
  }

  // ---- capture-acts ----
  {
    auto* cmd = app.add_subcommand("capture-acts", "capture post-MLP residual activations");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto layer = std::make_shared<int>(-1);
    auto checkpoint = std::make_shared<std::string>("");
    cmd->add_option("--layer", *layer, "hook layer")->required();
    cmd->add_option("--checkpoint", *checkpoint, "lm checkpoint (default <out>/lm.stlb)");
    cmd->callback([&, args, layer, checkpoint] {
      action = [&, args, layer, checkpoint] {
        std::string ck_path = checkpoint->empty() ? artifact(out_dir, "lm.stlb") : *checkpoint;
        LmCheckpoint ck = load_checkpoint(ck_path);
        auto texts = training_corpus_texts(args->mem(), args->fact_table(), args->probes());
        Tensor acts = capture_activations(ck, texts, *layer);
        std::string path = acts_path(out_dir, *layer);
        save_activations(acts, *layer, path);
        emit({{"acts", path}, {"rows", acts.rows()}, {"d_model", acts.cols()}},
             "captured " + std::to_string(acts.rows()) + " activation vectors -> " + path + "\n",
             json_mode);
      };
    });
  }

  // ---- train-sae ----
  {
    auto* cmd = app.add_subcommand("train-sae", "train a sparse autoencoder on captured acts");
    auto layer = std::make_shared<int>(-1);
    auto features = std::make_shared<int>(1024);
    // Pipeline recipe value: weaker sparsity keeps per-feature max
    // activations (alpha) small enough that low-beta steering stays gentle.
    auto l1 = std::make_shared<float>(0.05f);
    auto epochs = std::make_shared<int>(30);
    cmd->add_option("--layer", *layer, "layer whose activations to use")->required();
    cmd->add_option("--features", *features, "dictionary size F")->capture_default_str();
    cmd->add_option("--l1", *l1, "sparsity coefficient lambda")->capture_default_str();
    cmd->add_option("--epochs", *epochs, "training epochs")->capture_default_str();
    cmd->callback([&, layer, features, l1, epochs] {
      action = [&, layer, features, l1, epochs] {
        auto [acts, acts_layer] = load_activations(acts_path(out_dir, *layer));
        SaeConfig cfg;
        cfg.d_in = acts.cols();
        cfg.n_features = *features;
        cfg.l1_coefficient = *l1;
        cfg.seed = derive_seed(seed, 0x5ae, static_cast<uint64_t>(*layer));
        SaeTrainOptions opt;
        opt.epochs = *epochs;
        SaeTrainCurve curve;
        SaeModel sae = train_sae(cfg, acts, opt, &curve, HookSite{acts_layer});
        std::string path = sae_path(out_dir, *layer);
        save_sae(sae, path);
        emit({{"sae", path},
              {"final_mse", curve.mse.empty() ? 0.0 : curve.mse.back()},
              {"final_l0", curve.mean_l0.empty() ? 0.0 : curve.mean_l0.back()}},
             "trained SAE layer " + std::to_string(*layer) + ": final mse " +
                 std::to_string(curve.mse.empty() ? 0.0 : curve.mse.back()) + ", mean L0 " +
                 std::to_string(curve.mean_l0.empty() ? 0.0 : curve.mean_l0.back()) + "\nsaved " +
                 path + "\n",
             json_mode);
      };
    });
  }

  // ---- calibrate ----
  {
    auto* cmd = app.add_subcommand("calibrate", "measure per-feature max activations (alpha)");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto layer = std::make_shared<int>(-1);
    cmd->add_option("--layer", *layer, "layer whose SAE to calibrate")->required();
    cmd->callback([&, args, layer] {
      action = [&, args, layer] {
        LmCheckpoint ck = load_checkpoint(artifact(out_dir, "lm.stlb"));
        SaeModel sae = load_sae(sae_path(out_dir, *layer));
        auto texts = training_corpus_texts(args->mem(), args->fact_table(), args->probes());
        FeatureStats stats = calibrate_alpha(sae, ck, texts, "desk-training-corpus");
        std::string path = stats_path(out_dir, *layer);
        save_feature_stats(stats, path);
        int dead = 0;
        for (uint8_t d : stats.dead) dead += d;
        emit({{"stats", path}, {"features", stats.n_features()}, {"dead", dead}},
             "calibrated " + std::to_string(stats.n_features()) + " features (" +
                 std::to_string(dead) + " dead) -> " + path + "\n",
             json_mode);
      };
    });
  }

  // ---- steer ----
  {
    auto* cmd = app.add_subcommand("steer", "one paired steered/default generation");
    auto layer = std::make_shared<int>(-1);
    auto feature = std::make_shared<int>(0);
    auto beta = std::make_shared<float>(0.0f);
    auto prompt = std::make_shared<std::string>("");
    auto prompt_file = std::make_shared<std::string>("");
    auto temperature = std::make_shared<float>(0.5f);
    auto max_new = std::make_shared<int>(96);
    auto alpha_override = std::make_shared<float>(std::nanf(""));
    auto policy = std::make_shared<std::string>("all-positions");
    cmd->add_option("--layer", *layer, "intervention layer")->required();
    cmd->add_option("--feature", *feature, "SAE feature index")->required();
    cmd->add_option("--beta", *beta, "steering strength in [-100, 100]")->required();
    cmd->add_option("--prompt", *prompt, "prompt text");
    cmd->add_option("--prompt-file", *prompt_file, "file holding the prompt");
    cmd->add_option("--temperature", *temperature, "sampling temperature")->capture_default_str();
    cmd->add_option("--max-new", *max_new, "token budget")->capture_default_str();
    cmd->add_option("--alpha", *alpha_override, "override alpha instead of calibration");
    cmd->add_option("--policy", *policy, "all-positions | generated-only")->capture_default_str();
    cmd->callback([&, layer, feature, beta, prompt, prompt_file, temperature, max_new,
                   alpha_override, policy] {
      action = [&, layer, feature, beta, prompt, prompt_file, temperature, max_new, alpha_override,
                policy] {
        std::string text = *prompt;
        if (!prompt_file->empty()) {
          text = read_file_bytes(*prompt_file);
          while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        }
        if (text.empty()) throw ContractError("steer: empty prompt (use --prompt/--prompt-file)");
        LoadedBackendParts parts = load_backend_parts(out_dir, {*layer});
        LocalBackend backend = parts.make_backend();
        SteeringSpec spec;
        spec.layer = *layer;
        spec.feature_id = *feature;
        spec.beta = *beta;
        spec.policy = position_policy_from_string(*policy);
        if (!std::isnan(*alpha_override)) {
          spec.alpha_source = AlphaSource::Override;
          spec.alpha_override = *alpha_override;
        }
        PairedGeneration pg = backend.paired_generate(text, spec, seed, *temperature, *max_new);
        emit({{"steered_text", pg.steered_text},
              {"default_text", pg.default_text},
              {"alpha", backend.resolved_alpha(spec)},
              {"dead_feature", backend.feature_dead(spec)}},
             "--- steered ---\n" + pg.steered_text + "\n--- default ---\n" + pg.default_text +
                 "\n",
             json_mode);
      };
    });
  }

  // ---- sweep ----
  {
    auto* cmd = app.add_subcommand("sweep", "randomized grid of paired experiments");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto cfg = std::make_shared<SweepConfig>();
    auto layers = std::make_shared<std::vector<int>>();
    auto records = std::make_shared<std::string>("");
    auto no_mem = std::make_shared<bool>(false);
    auto no_fluency = std::make_shared<bool>(false);
    auto no_tasks = std::make_shared<bool>(false);
    cmd->add_option("--n", cfg->n_runs, "number of runs")->capture_default_str();
    cmd->add_option("--layers", *layers, "intervention layers (default: artifacts present)");
    cmd->add_option("--records", *records, "record file (default <out>/runs.jsonl)");
    cmd->add_option("--temperature", cfg->temperature, "sampling temperature")
        ->capture_default_str();
    cmd->add_flag("--force-beta-zero", cfg->force_beta_zero, "identity-gate override");
    cmd->add_flag("--no-mem", *no_mem, "skip the memorization benchmark");
    cmd->add_flag("--no-fluency", *no_fluency, "skip the fluency benchmark");
    cmd->add_flag("--no-tasks", *no_tasks, "skip the capability benchmark");
    cmd->add_option("--mem-subset", cfg->mem_subset, "memorization items per run (0 = all)")
        ->capture_default_str();
    cmd->add_option("--fluency-subset", cfg->fluency_subset, "fluency probes per run (0 = all)")
        ->capture_default_str();
    cmd->add_option("--task-subset", cfg->task_subset, "task items per kind per run")
        ->capture_default_str();
    cmd->add_option("--max-new", cfg->max_new_tokens, "memorization token budget")
        ->capture_default_str();
    cmd->add_option("--threads", cfg->threads, "worker threads (0 = auto)")
        ->capture_default_str();
    cmd->callback([&, args, cfg, layers, records, no_mem, no_fluency, no_tasks] {
      action = [&, args, cfg, layers, records, no_mem, no_fluency, no_tasks] {
        cfg->master_seed = seed;
        cfg->bench_memorization = !*no_mem;
        cfg->bench_fluency = !*no_fluency;
        cfg->bench_tasks = !*no_tasks;
        LoadedBackendParts parts = load_backend_parts(out_dir, *layers);
        cfg->layers = parts.layers;
        LocalBackend backend = parts.make_backend();
        EvalSets eval = make_eval_sets(args->mem(), args->probes(), args->fact_table(), *cfg);
        std::string path = records->empty() ? artifact(out_dir, "runs.jsonl") : *records;
        SweepSummary s = run_sweep(backend, parts.ck, eval, *cfg, path);
        emit({{"records", s.record_path},
              {"n_runs", s.n_runs},
              {"executed", s.executed},
              {"resumed_from", s.resumed_from},
              {"failed", s.failed},
              {"wall_s", s.wall_s}},
             "sweep complete: " + std::to_string(s.executed) + " runs executed (resumed from " +
                 std::to_string(s.resumed_from) + ", " + std::to_string(s.failed) +
                 " failed) in " + std::to_string(s.wall_s) + "s\nrecords: " + s.record_path +
                 "\n",
             json_mode);
      };
    });
  }

  // ---- eval-mem ----
  {
    auto* cmd = app.add_subcommand("eval-mem", "greedy memorization score of the base model");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto per_item = std::make_shared<bool>(false);
    cmd->add_flag("--per-item", *per_item, "print one line per item");
    cmd->callback([&, args, per_item] {
      action = [&, args, per_item] {
        LmCheckpoint ck = load_checkpoint(artifact(out_dir, "lm.stlb"));
        auto mem = args->mem();
        std::vector<std::pair<std::string, std::string>> pairs;
        nlohmann::json items = nlohmann::json::array();
        std::string human;
        for (const auto& item : mem) {
          std::string prompt = render_memorization_prompt(item);
          std::string gen = lm_generate(ck, prompt,
                                        static_cast<int>(item.ground_truth.size()) + 24, 0.0f, 0);
          std::string body = strip_prompt_echo(gen, prompt);
          pairs.emplace_back(item.ground_truth, body);
          double score = anlcs({{item.ground_truth, body}});
          items.push_back({{"id", item.id}, {"anlcs", score}});
          if (*per_item) human += item.id + "  " + std::to_string(score) + "\n";
        }
        double mean = anlcs(pairs);
        human += "greedy ANLCS over " + std::to_string(pairs.size()) + " items: " +
                 std::to_string(mean) + "\n";
        emit({{"anlcs", mean}, {"items", items}}, human, json_mode);
      };
    });
  }

  // ---- eval-ppl ----
  {
    auto* cmd = app.add_subcommand("eval-ppl", "perplexity of a text under the base model");
    auto text = std::make_shared<std::string>("");
    auto text_file = std::make_shared<std::string>("");
    cmd->add_option("--text", *text, "text to score");
    cmd->add_option("--text-file", *text_file, "file to score");
    cmd->callback([&, text, text_file] {
      action = [&, text, text_file] {
        LmCheckpoint ck = load_checkpoint(artifact(out_dir, "lm.stlb"));
        std::string t = *text;
        if (!text_file->empty()) t = read_file_bytes(*text_file);
        double ppl = perplexity(ck, t);
        emit({{"perplexity", ppl}, {"tokens", tokenize_bytes(t).size()}},
             "perplexity: " + std::to_string(ppl) + "\n", json_mode);
      };
    });
  }

  // ---- eval-tasks ----
  {
    auto* cmd = app.add_subcommand("eval-tasks", "capability accuracy of the base model");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto n = std::make_shared<int>(32);
    auto temperature = std::make_shared<float>(0.0f);
    cmd->add_option("--n", *n, "items per task kind")->capture_default_str();
    cmd->add_option("--temperature", *temperature, "sampling temperature")->capture_default_str();
    cmd->callback([&, args, n, temperature] {
      action = [&, args, n, temperature] {
        LmCheckpoint ck = load_checkpoint(artifact(out_dir, "lm.stlb"));
        auto facts = args->fact_table();
        auto run_kind = [&](const std::string& kind) {
          std::vector<std::string> golds, answers;
          for (int i = 0; i < *n; ++i) {
            TaskItem item =
                kind == "bool_expr"
                    ? gen_bool_expr(derive_seed(seed, 0xbe, static_cast<uint64_t>(i)), i % 3)
                    : gen_factoid(derive_seed(seed, 0xfe, static_cast<uint64_t>(i)), facts);
            std::string out = lm_generate(ck, format_task_prompt(item.question), 8, *temperature,
                                          derive_seed(seed, 0x7a5c, static_cast<uint64_t>(i)));
            golds.push_back(item.gold);
            answers.push_back(out);
          }
          return task_accuracy(golds, answers);
        };
        double b = run_kind("bool_expr");
        double f = run_kind("factoid");
        emit({{"bool_expr", b}, {"factoid", f}},
             "bool_expr accuracy: " + std::to_string(b) + "\nfactoid accuracy: " +
                 std::to_string(f) + "\n",
             json_mode);
      };
    });
  }

  // ---- report ----
  {
    auto* cmd = app.add_subcommand("report", "emit CSV/SVG report from sweep records");
    auto records = std::make_shared<std::string>("");
    cmd->add_option("--records", *records, "record file (default <out>/runs.jsonl)");
    cmd->callback([&, records] {
      action = [&, records] {
        std::string path = records->empty() ? artifact(out_dir, "runs.jsonl") : *records;
        auto recs = load_records(path);
        if (recs.empty()) throw ContractError("no records in " + path);
        std::string dir = artifact(out_dir, "report");
        ReportPaths paths = emit_report(recs, dir);
        Aggregates agg = aggregate(recs);
        std::string human = "report written to " + dir + "\n";
        for (auto& [bin, g] : agg.by_beta_bin) {
          human += std::string("|beta| ") + beta_bin_label(bin) + ": n=" + std::to_string(g.n) +
                   " steered ANLCS " + std::to_string(g.mean_steered_anlcs) + " default " +
                   std::to_string(g.mean_default_anlcs) + " ppl_ratio " +
                   std::to_string(g.mean_ppl_ratio) + "\n";
        }
        emit({{"dir", dir},
              {"anlcs_csv", paths.anlcs_csv},
              {"ppl_csv", paths.ppl_csv},
              {"task_csv", paths.task_csv},
              {"summary_csv", paths.summary_csv}},
             human, json_mode);
      };
    });
  }

  // ---- feature-top ----
  {
    auto* cmd = app.add_subcommand("feature-top", "top activating snippets for a feature");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto layer = std::make_shared<int>(-1);
    auto feature = std::make_shared<int>(0);
    auto k = std::make_shared<int>(10);
    cmd->add_option("--layer", *layer, "SAE layer")->required();
    cmd->add_option("--feature", *feature, "feature index")->required();
    cmd->add_option("-k,--top-k", *k, "snippets to return")->capture_default_str();
    cmd->callback([&, args, layer, feature, k] {
      action = [&, args, layer, feature, k] {
        LoadedBackendParts parts = load_backend_parts(out_dir, {*layer});
        auto texts = training_corpus_texts(args->mem(), args->fact_table(), args->probes());
        FeatureDossier d = feature_top_examples(parts.saes[0], parts.stats[0], parts.ck, texts,
                                                *feature, *k);
        nlohmann::json snippets = nlohmann::json::array();
        std::string human = "feature " + std::to_string(d.feature_id) + " alpha " +
                            std::to_string(d.alpha) + " freq " + std::to_string(d.frequency) +
                            (d.dead ? " [dead]\n" : "\n");
        for (const auto& s : d.snippets) {
          snippets.push_back({{"text", s.text},
                              {"text_index", s.text_index},
                              {"position", s.position},
                              {"activation", s.activation}});
          human += "  " + std::to_string(s.activation) + "  \"" + s.text + "\"\n";
        }
        emit({{"feature_id", d.feature_id},
              {"alpha", d.alpha},
              {"frequency", d.frequency},
              {"dead", d.dead},
              {"snippets", snippets}},
             human, json_mode);
      };
    });
  }

  // ---- label-feature ----
  {
    auto* cmd = app.add_subcommand("label-feature", "label a feature via an external service");
    auto args = std::make_shared<CorpusArgs>();
    args->attach(cmd);
    auto layer = std::make_shared<int>(-1);
    auto feature = std::make_shared<int>(0);
    auto k = std::make_shared<int>(8);
    auto endpoint = std::make_shared<std::string>("");
    auto token = std::make_shared<std::string>("");
    cmd->add_option("--layer", *layer, "SAE layer")->required();
    cmd->add_option("--feature", *feature, "feature index")->required();
    cmd->add_option("-k,--top-k", *k, "snippets to send")->capture_default_str();
    cmd->add_option("--endpoint", *endpoint, "label service URL (default $STEERLAB_ENDPOINT)");
    cmd->add_option("--token", *token, "bearer token (default $STEERLAB_API_TOKEN)");
    cmd->callback([&, args, layer, feature, k, endpoint, token] {
      action = [&, args, layer, feature, k, endpoint, token] {
        LoadedBackendParts parts = load_backend_parts(out_dir, {*layer});
        auto texts = training_corpus_texts(args->mem(), args->fact_table(), args->probes());
        FeatureDossier d = feature_top_examples(parts.saes[0], parts.stats[0], parts.ck, texts,
                                                *feature, *k);
        LabelClientConfig client;
        client.endpoint = *endpoint;
        client.token = *token;
        if (client.endpoint.empty()) {
          const char* env = std::getenv(kEndpointEnv);
          if (env) client.endpoint = env;
        }
        if (client.token.empty()) {
          const char* env = std::getenv(kApiTokenEnv);
          if (env) client.token = env;
        }
        std::string label = label_feature(d, client);
        emit({{"feature_id", d.feature_id}, {"label", label}},
             "feature " + std::to_string(d.feature_id) + ": " + label + "\n", json_mode);
      };
    });
  }

  if (argc <= 1) {
    std::cout << app.help() << std::endl;
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << std::endl;
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::endl;
    return 2;
  }

  if (!action) {
    std::cout << app.help() << std::endl;
    return 2;
  }
  try {
    action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    exit_code = 1;
  }
  return exit_code;
}

}  // namespace steerlab
