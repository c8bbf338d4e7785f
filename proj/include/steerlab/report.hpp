#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "steerlab/harness.hpp"

namespace steerlab {

// ---- feature dashboard ----

struct FeatureSnippet {
  std::string text;  // +-16 character window around the peak position
  int text_index = 0;
  int position = 0;
  double activation = 0.0;
};

struct FeatureDossier {
  int feature_id = 0;
  double alpha = 0.0;
  double frequency = 0.0;
  bool dead = false;
  std::vector<FeatureSnippet> snippets;  // sorted by activation, descending
  std::string label;                     // empty until labeled
};

// Scans the corpus at the SAE's site and returns the top-k activating
// snippets for one feature. A dead feature yields an empty snippet list,
// not an error.
inline FeatureDossier feature_top_examples(const SaeModel& sae, const FeatureStats& stats,
                                           const LmCheckpoint& ck,
                                           const std::vector<std::string>& texts, int feature_id,
                                           int k) {
  check_feature_index(sae, feature_id);
  if (texts.empty()) throw ContractError("feature_top_examples: empty corpus");
  FeatureDossier d;
  d.feature_id = feature_id;
  if (feature_id < stats.n_features()) {
    d.alpha = stats.alpha[static_cast<size_t>(feature_id)];
    d.frequency = stats.frequency[static_cast<size_t>(feature_id)];
    d.dead = stats.dead[static_cast<size_t>(feature_id)] != 0;
  }

  struct Hit {
    double act;
    int text_index;
    int position;
  };
  std::vector<Hit> hits;
  HookSite site = sae.site;
  for (size_t t = 0; t < texts.size(); ++t) {
    if (texts[t].empty()) continue;
    std::vector<int> toks = tokenize_bytes(texts[t]);
    if (static_cast<int>(toks.size()) > ck.config.context_length)
      toks.resize(static_cast<size_t>(ck.config.context_length));
    ForwardResult r = lm_forward(ck, toks, nullptr, &site);
    Tensor f = encode_batch(sae, r.captured);
    for (int pos = 0; pos < f.rows(); ++pos) {
      float a = f.at(pos, feature_id);
      if (a > 0.0f) hits.push_back({static_cast<double>(a), static_cast<int>(t), pos});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.act != b.act) return a.act > b.act;
    if (a.text_index != b.text_index) return a.text_index < b.text_index;
    return a.position < b.position;
  });
  if (k < 0) k = 0;
  for (const Hit& h : hits) {
    if (static_cast<int>(d.snippets.size()) >= k) break;
    const std::string& text = texts[static_cast<size_t>(h.text_index)];
    int lo = std::max(0, h.position - 16);
    int hi = std::min(static_cast<int>(text.size()), h.position + 17);
    d.snippets.push_back(
        FeatureSnippet{text.substr(static_cast<size_t>(lo), static_cast<size_t>(hi - lo)),
                       h.text_index, h.position, h.act});
  }
  return d;
}

// ---- semantic-footprint proxy ----

// Symmetrized KL divergence between the byte-unigram distributions of the
// steered and default generations over the probes, with add-one smoothing
// over the full 256-token domain. Zero iff the smoothed distributions match.
inline double footprint_score(SteeringBackend& backend, const SteeringSpec& spec,
                              const std::vector<std::string>& probe_prompts, uint64_t seed,
                              float temperature = 0.5f, int max_new_tokens = 48) {
  if (probe_prompts.size() < 5)
    throw ContractError("footprint_score: needs at least 5 probe prompts, got " +
                        std::to_string(probe_prompts.size()));
  std::vector<int64_t> steered_counts(256, 0), default_counts(256, 0);
  for (size_t i = 0; i < probe_prompts.size(); ++i) {
    PairedGeneration pg = backend.paired_generate(
        probe_prompts[i], spec, derive_seed(seed, 0xf007, i), temperature, max_new_tokens);
    for (unsigned char c : pg.steered_text) steered_counts[c]++;
    for (unsigned char c : pg.default_text) default_counts[c]++;
  }
  double s_total = 256, d_total = 256;
  for (int i = 0; i < 256; ++i) {
    s_total += static_cast<double>(steered_counts[static_cast<size_t>(i)]);
    d_total += static_cast<double>(default_counts[static_cast<size_t>(i)]);
  }
  double kl_sd = 0.0, kl_ds = 0.0;
  for (int i = 0; i < 256; ++i) {
    double p = (steered_counts[static_cast<size_t>(i)] + 1.0) / s_total;
    double q = (default_counts[static_cast<size_t>(i)] + 1.0) / d_total;
    kl_sd += p * std::log(p / q);
    kl_ds += q * std::log(q / p);
  }
  double score = kl_sd + kl_ds;
  return score < 0.0 ? 0.0 : score;  // clamp -0.0 / rounding dust
}

// ---- external labeling client ----

struct LabelClientConfig {
  std::string endpoint;  // empty -> offline mode
  std::string token;
};

inline std::string feature_label_prompt(const FeatureDossier& d) {
  std::string p =
      "The following text snippets most strongly activate one learned feature of a sparse "
      "autoencoder trained on a language model's activations. Reply with a single short label "
      "describing what the feature responds to.\n";
  for (size_t i = 0; i < d.snippets.size(); ++i)
    p += std::to_string(i + 1) + ". " + d.snippets[i].text + "\n";
  return p;
}

// Implemented in remote-capable translation units; declared here so the
// dashboard can be used without pulling in HTTP headers.
std::string label_feature(const FeatureDossier& dossier, const LabelClientConfig& client);

// ---- CSV / SVG report emission ----

namespace detail {

inline std::string csv_quote(const std::string& s) {
  bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SvgSeries {
  std::string name;
  std::string color;
  bool filled = true;
  std::vector<std::pair<double, double>> points;
};

// Minimal self-contained SVG scatter plot: fixed 800x600 viewport, linear
// axes, one series per layer, optional dashed horizontal reference line.
inline std::string render_scatter_svg(const std::string& title, const std::string& x_label,
                                      const std::string& y_label,
                                      const std::vector<SvgSeries>& series,
                                      const double* reference_y = nullptr,
                                      const std::string& reference_name = "") {
  const double width = 800, height = 600, ml = 70, mr = 170, mt = 50, mb = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (reference_y) {
    ymin = std::min(ymin, *reference_y);
    ymax = std::max(ymax, *reference_y);
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(width / 2) + "\" y=\"28\" text-anchor=\"middle\" font-size=\"18\" "
         "font-family=\"sans-serif\">" + title + "</text>\n";
  // axes
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(height - mb) + "\" x2=\"" + num(width - mr) +
         "\" y2=\"" + num(height - mb) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" +
         num(height - mb) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double xv = xmin + (xmax - xmin) * i / 5.0;
    double yv = ymin + (ymax - ymin) * i / 5.0;
    svg += "<line x1=\"" + num(px(xv)) + "\" y1=\"" + num(height - mb) + "\" x2=\"" +
           num(px(xv)) + "\" y2=\"" + num(height - mb + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(height - mb + 20) +
           "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" + num(xv) +
           "</text>\n";
    svg += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(ml) +
           "\" y2=\"" + num(py(yv)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(ml - 8) + "\" y=\"" + num(py(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" + num(yv) +
           "</text>\n";
  }
  svg += "<text x=\"" + num((ml + width - mr) / 2) + "\" y=\"" + num(height - 15) +
         "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" + x_label +
         "</text>\n";
  svg += "<text x=\"20\" y=\"" + num((mt + height - mb) / 2) +
         "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 20 " + num((mt + height - mb) / 2) + ")\">" + y_label +
         "</text>\n";
  if (reference_y) {
    svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(py(*reference_y)) + "\" x2=\"" +
           num(width - mr) + "\" y2=\"" + num(py(*reference_y)) +
           "\" stroke=\"red\" stroke-dasharray=\"8,5\" stroke-width=\"1.5\"/>\n";
  }
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      if (s.filled) {
        svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3.5\" fill=\"" +
               s.color + "\" fill-opacity=\"0.75\"/>\n";
      } else {
        svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3.5\" "
               "fill=\"none\" stroke=\"" + s.color + "\" stroke-opacity=\"0.75\"/>\n";
      }
    }
  }
  // legend
  double ly = mt + 10;
  for (const auto& s : series) {
    svg += std::string("<circle cx=\"") + num(width - mr + 18) + "\" cy=\"" + num(ly) +
           "\" r=\"4\" " +
           (s.filled ? "fill=\"" + s.color + "\"" : "fill=\"none\" stroke=\"" + s.color + "\"") +
           "/>\n";
    svg += "<text x=\"" + num(width - mr + 30) + "\" y=\"" + num(ly + 4) +
           "\" font-size=\"12\" font-family=\"sans-serif\">" + s.name + "</text>\n";
    ly += 20;
  }
  if (reference_y) {
    svg += "<line x1=\"" + num(width - mr + 8) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(width - mr + 26) + "\" y2=\"" + num(ly) +
           "\" stroke=\"red\" stroke-dasharray=\"8,5\"/>\n";
    svg += "<text x=\"" + num(width - mr + 30) + "\" y=\"" + num(ly + 4) +
           "\" font-size=\"12\" font-family=\"sans-serif\">" + reference_name + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline const char* layer_color(int ordinal) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return kColors[static_cast<size_t>(ordinal) % std::size(kColors)];
}

inline double mean_task_score(const ScoreReport& s) {
  if (s.task_accuracies.empty()) return 0.0;
  double total = 0.0;
  for (auto& [k, v] : s.task_accuracies) total += v;
  return total / static_cast<double>(s.task_accuracies.size());
}

}  // namespace detail

struct ReportPaths {
  std::string anlcs_csv, anlcs_svg;
  std::string ppl_csv, ppl_svg;
  std::string task_csv, task_svg;
  std::string summary_csv;
};

// Emits the figure-style artifacts: per-record CSVs plus self-contained SVG
// scatter plots (one steered series per layer, default arms hollow, and a
// dashed default-average reference line on the task plot), and the grouped
// summary CSV matching aggregate().
inline ReportPaths emit_report(const std::vector<RunRecord>& records, const std::string& out_dir) {
  std::vector<const RunRecord*> complete;
  for (const auto& r : records)
    if (r.status == "ok") complete.push_back(&r);
  if (complete.empty()) throw ContractError("emit_report: no complete records");
  std::filesystem::create_directories(out_dir);

  auto path = [&](const std::string& name) { return out_dir + "/" + name; };
  ReportPaths out{path("anlcs_vs_beta.csv"),     path("anlcs_vs_beta.svg"),
                  path("ppl_ratio_vs_beta.csv"), path("ppl_ratio_vs_beta.svg"),
                  path("task_score_vs_beta.csv"), path("task_score_vs_beta.svg"),
                  path("summary.csv")};

  std::vector<int> layers;
  for (const RunRecord* r : complete)
    if (std::find(layers.begin(), layers.end(), r->spec.layer) == layers.end())
      layers.push_back(r->spec.layer);
  std::sort(layers.begin(), layers.end());
  auto layer_ord = [&](int layer) {
    return static_cast<int>(std::find(layers.begin(), layers.end(), layer) - layers.begin());
  };

  using detail::csv_quote;
  using detail::fmt_double;

  {
    std::ofstream f(out.anlcs_csv, std::ios::trunc);
    f << "run,layer,beta,abs_beta,beta_bin,steered_anlcs,default_anlcs\n";
    for (const RunRecord* r : complete)
      f << r->run_index << "," << r->spec.layer << "," << fmt_double(r->spec.beta) << ","
        << fmt_double(std::fabs(r->spec.beta)) << ","
        << csv_quote(beta_bin_label(beta_bin_index(r->spec.beta))) << ","
        << fmt_double(r->steered.anlcs) << "," << fmt_double(r->defaulted.anlcs) << "\n";
  }
  {
    std::ofstream f(out.ppl_csv, std::ios::trunc);
    f << "run,layer,beta,abs_beta,beta_bin,perplexity_steered,perplexity_default,ppl_ratio\n";
    for (const RunRecord* r : complete)
      f << r->run_index << "," << r->spec.layer << "," << fmt_double(r->spec.beta) << ","
        << fmt_double(std::fabs(r->spec.beta)) << ","
        << csv_quote(beta_bin_label(beta_bin_index(r->spec.beta))) << ","
        << fmt_double(r->steered.perplexity_steered) << ","
        << fmt_double(r->steered.perplexity_default) << "," << fmt_double(r->steered.ppl_ratio)
        << "\n";
  }
  {
    std::ofstream f(out.task_csv, std::ios::trunc);
    f << "run,layer,beta,abs_beta,beta_bin,steered_bool_expr,default_bool_expr,steered_factoid,"
         "default_factoid,steered_mean,default_mean\n";
    for (const RunRecord* r : complete) {
      auto get = [](const std::map<std::string, double>& m, const char* k) {
        auto it = m.find(k);
        return it == m.end() ? 0.0 : it->second;
      };
      f << r->run_index << "," << r->spec.layer << "," << fmt_double(r->spec.beta) << ","
        << fmt_double(std::fabs(r->spec.beta)) << ","
        << csv_quote(beta_bin_label(beta_bin_index(r->spec.beta))) << ","
        << fmt_double(get(r->steered.task_accuracies, "bool_expr")) << ","
        << fmt_double(get(r->defaulted.task_accuracies, "bool_expr")) << ","
        << fmt_double(get(r->steered.task_accuracies, "factoid")) << ","
        << fmt_double(get(r->defaulted.task_accuracies, "factoid")) << ","
        << fmt_double(detail::mean_task_score(r->steered)) << ","
        << fmt_double(detail::mean_task_score(r->defaulted)) << "\n";
    }
  }
  {
    Aggregates agg = aggregate(records);
    std::ofstream f(out.summary_csv, std::ios::trunc);
    f << "group_type,group,n,mean_steered_anlcs,mean_default_anlcs,median_steered_anlcs,"
         "median_default_anlcs,mean_ppl_ratio,mean_steered_meteor,mean_default_meteor,"
         "mean_steered_bool_expr,mean_default_bool_expr,mean_steered_factoid,"
         "mean_default_factoid\n";
    auto row = [&](const std::string& type, const std::string& group, const GroupStats& g) {
      auto get = [](const std::map<std::string, double>& m, const char* k) {
        auto it = m.find(k);
        return it == m.end() ? 0.0 : it->second;
      };
      f << csv_quote(type) << "," << csv_quote(group) << "," << g.n << ","
        << fmt_double(g.mean_steered_anlcs) << "," << fmt_double(g.mean_default_anlcs) << ","
        << fmt_double(g.median_steered_anlcs) << "," << fmt_double(g.median_default_anlcs) << ","
        << fmt_double(g.mean_ppl_ratio) << "," << fmt_double(g.mean_steered_meteor) << ","
        << fmt_double(g.mean_default_meteor) << "," << fmt_double(get(g.mean_steered_task, "bool_expr"))
        << "," << fmt_double(get(g.mean_default_task, "bool_expr")) << ","
        << fmt_double(get(g.mean_steered_task, "factoid")) << ","
        << fmt_double(get(g.mean_default_task, "factoid")) << "\n";
    };
    row("overall", "all", agg.overall);
    for (auto& [layer, g] : agg.by_layer) row("layer", std::to_string(layer), g);
    for (auto& [bin, g] : agg.by_beta_bin) row("beta_bin", beta_bin_label(bin), g);
  }

  auto build_series = [&](auto steered_value, auto default_value) {
    std::vector<detail::SvgSeries> series;
    for (int layer : layers) {
      detail::SvgSeries s;
      s.name = "layer " + std::to_string(layer) + " steered";
      s.color = detail::layer_color(layer_ord(layer));
      s.filled = true;
      detail::SvgSeries d;
      d.name = "layer " + std::to_string(layer) + " default";
      d.color = detail::layer_color(layer_ord(layer));
      d.filled = false;
      for (const RunRecord* r : complete) {
        if (r->spec.layer != layer) continue;
        s.points.emplace_back(r->spec.beta, steered_value(*r));
        d.points.emplace_back(r->spec.beta, default_value(*r));
      }
      series.push_back(std::move(s));
      series.push_back(std::move(d));
    }
    return series;
  };

  {
    auto series = build_series([](const RunRecord& r) { return r.steered.anlcs; },
                               [](const RunRecord& r) { return r.defaulted.anlcs; });
    std::ofstream f(out.anlcs_svg, std::ios::trunc);
    f << detail::render_scatter_svg("ANLCS vs steering strength", "beta", "ANLCS", series);
  }
  {
    auto series = build_series([](const RunRecord& r) { return r.steered.ppl_ratio; },
                               [](const RunRecord&) { return 1.0; });
    // default arm of the ratio is 1 by definition; drop those hollow series
    std::vector<detail::SvgSeries> filtered;
    for (auto& s : series)
      if (s.filled) filtered.push_back(std::move(s));
    std::ofstream f(out.ppl_svg, std::ios::trunc);
    f << detail::render_scatter_svg("Steered-to-default perplexity ratio vs steering strength",
                                    "beta", "perplexity ratio", filtered);
  }
  {
    auto series = build_series([](const RunRecord& r) { return detail::mean_task_score(r.steered); },
                               [](const RunRecord& r) { return detail::mean_task_score(r.defaulted); });
    std::vector<detail::SvgSeries> filtered;
    double default_avg = 0.0;
    int n = 0;
    for (auto& s : series)
      if (s.filled) filtered.push_back(std::move(s));
    for (const RunRecord* r : complete) {
      default_avg += detail::mean_task_score(r->defaulted);
      ++n;
    }
    default_avg /= std::max(1, n);
    std::ofstream f(out.task_svg, std::ios::trunc);
    f << detail::render_scatter_svg("Task score vs steering strength", "beta", "mean task score",
                                    filtered, &default_avg, "default average");
  }
  return out;
}

}  // namespace steerlab
