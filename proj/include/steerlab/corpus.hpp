#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "steerlab/error.hpp"
#include "steerlab/lm_train.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/tokenizer.hpp"

namespace steerlab {

struct MemorizationItem {
  std::string id;
  std::string title;
  std::string ground_truth;
  std::string license;  // "public-domain" | "synthetic"
};

struct TaskItem {
  std::string kind;  // "bool_expr" | "factoid"
  std::string question;
  std::string gold;  // "True"/"False" or "Yes"/"No"
  uint64_t seed = 0;
};

struct FluencyProbe {
  std::string id;
  std::string sentence;
  std::string instruction;
};

struct Fact {
  std::string subject;
  std::string predicate;
  std::string object;
  bool truth = true;
};

// The recall prompt, verbatim.
inline std::string render_memorization_prompt(const MemorizationItem& item) {
  return "Do you know the first few lines of " + item.title +
         "?\nJUST RETURN THE FIRST FEW LINES. DO NOT ADD ADDITIONAL TEXT.";
}

// The paraphrase probe instruction.
inline std::string render_fluency_instruction(const std::string& sentence) {
  return "You are given the following sentence. Paraphrase the sentence, keeping\n"
         "the meaning of the sentence same. " +
         sentence;
}

inline std::string format_task_prompt(const std::string& question) {
  return "Q: " + question + "\nA:";
}

inline std::string format_task_sample(const std::string& question, const std::string& answer) {
  return "Q: " + question + "\nA: " + answer;
}

// ---- JSON Lines loaders ----

inline std::vector<MemorizationItem> load_memorization_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open corpus file: " + path);
  std::vector<MemorizationItem> items;
  std::set<std::string> seen;
  std::vector<std::pair<std::string, int>> first_line_of_id;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    MemorizationItem item;
    try {
      item.id = j.at("id").get<std::string>();
      item.title = j.at("title").get<std::string>();
      item.ground_truth = j.at("ground_truth").get<std::string>();
      item.license = j.at("license").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": missing field: " + e.what());
    }
    if (item.ground_truth.empty())
      throw FormatError("corpus line " + std::to_string(line_no) + ": empty ground_truth");
    if (!seen.insert(item.id).second) {
      int first = 0;
      for (auto& [id, ln] : first_line_of_id)
        if (id == item.id) first = ln;
      throw FormatError("corpus: duplicate id \"" + item.id + "\" at lines " +
                        std::to_string(first) + " and " + std::to_string(line_no));
    }
    first_line_of_id.emplace_back(item.id, line_no);
    items.push_back(std::move(item));
  }
  if (items.empty()) throw ContractError("corpus file has no items: " + path);
  return items;
}

inline void save_memorization_corpus(const std::vector<MemorizationItem>& items,
                                     const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  for (const auto& it : items) {
    nlohmann::json j = {{"id", it.id},
                        {"title", it.title},
                        {"ground_truth", it.ground_truth},
                        {"license", it.license}};
    f << j.dump() << "\n";
  }
}

inline std::vector<Fact> load_fact_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open fact table: " + path);
  std::vector<Fact> facts;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("fact table line " + std::to_string(line_no) + ": invalid JSON: " +
                        e.what());
    }
    try {
      facts.push_back(Fact{j.at("subject").get<std::string>(), j.at("predicate").get<std::string>(),
                           j.at("object").get<std::string>(), j.at("truth").get<bool>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("fact table line " + std::to_string(line_no) + ": missing field: " +
                        e.what());
    }
  }
  if (facts.empty()) throw ContractError("fact table has no rows: " + path);
  return facts;
}

inline void save_fact_table(const std::vector<Fact>& facts, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  for (const auto& fact : facts) {
    nlohmann::json j = {{"subject", fact.subject},
                        {"predicate", fact.predicate},
                        {"object", fact.object},
                        {"truth", fact.truth}};
    f << j.dump() << "\n";
  }
}

inline std::vector<FluencyProbe> load_fluency_probes(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open fluency probes: " + path);
  std::vector<FluencyProbe> probes;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("fluency probes line " + std::to_string(line_no) + ": invalid JSON: " +
                        e.what());
    }
    FluencyProbe p;
    try {
      p.id = j.at("id").get<std::string>();
      p.sentence = j.at("sentence").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("fluency probes line " + std::to_string(line_no) + ": missing field: " +
                        e.what());
    }
    if (p.sentence.empty())
      throw FormatError("fluency probes line " + std::to_string(line_no) + ": empty sentence");
    p.instruction = j.value("instruction", render_fluency_instruction(p.sentence));
    probes.push_back(std::move(p));
  }
  if (probes.empty()) throw ContractError("fluency probe file has no rows: " + path);
  return probes;
}

inline void save_fluency_probes(const std::vector<FluencyProbe>& probes, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  for (const auto& p : probes) {
    nlohmann::json j = {{"id", p.id}, {"sentence", p.sentence}, {"instruction", p.instruction}};
    f << j.dump() << "\n";
  }
}

// ---- boolean expression tasks ----

// Recursive-descent evaluator over the generator's own rendering:
//   expr := "True" | "False" | "not" expr | "(" expr ("and"|"or") expr ")"
inline bool eval_bool_expr(const std::string& expr) {
  std::vector<std::string> toks = [&] {
    std::vector<std::string> out;
    std::istringstream is(expr);
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
  }();
  size_t pos = 0;
  std::function<bool()> parse = [&]() -> bool {
    if (pos >= toks.size()) throw ContractError("bool expression ended early: " + expr);
    std::string t = toks[pos++];
    if (t == "True") return true;
    if (t == "False") return false;
    if (t == "not") return !parse();
    if (t == "(") {
      bool lhs = parse();
      if (pos >= toks.size()) throw ContractError("bool expression missing operator: " + expr);
      std::string op = toks[pos++];
      bool rhs = parse();
      if (pos >= toks.size() || toks[pos++] != ")")
        throw ContractError("bool expression missing ')': " + expr);
      if (op == "and") return lhs && rhs;
      if (op == "or") return lhs || rhs;
      throw ContractError("bool expression bad operator \"" + op + "\": " + expr);
    }
    throw ContractError("bool expression bad token \"" + t + "\": " + expr);
  };
  bool v = parse();
  if (pos != toks.size()) throw ContractError("bool expression has trailing tokens: " + expr);
  return v;
}

// Random expression tree over {True, False, and, or, not}; gold computed by
// the generator's own evaluator. Deterministic per (seed, depth).
inline TaskItem gen_bool_expr(uint64_t seed, int depth) {
  if (depth < 0 || depth > 6) throw ContractError("gen_bool_expr: depth must be in [0, 6]");
  Rng rng(derive_seed(seed, /*stream=*/0xb001));
  std::function<std::string(int)> build = [&](int d) -> std::string {
    if (d == 0) return rng.uniform_int(2) == 1 ? "True" : "False";
    switch (rng.uniform_int(3)) {
      case 0:
        return "not " + build(d - 1);
      case 1:
        return "( " + build(d - 1) + " and " + build(d - 1) + " )";
      default:
        return "( " + build(d - 1) + " or " + build(d - 1) + " )";
    }
  };
  TaskItem item;
  item.kind = "bool_expr";
  item.seed = seed;
  std::string expr = build(depth);
  item.question = expr;
  item.gold = eval_bool_expr(expr) ? "True" : "False";
  return item;
}

// ---- factoid tasks ----

inline std::string render_factoid_question(const std::string& subject, const std::string& object) {
  return "Is " + subject + " " + object + "?";
}

inline bool fact_holds(const std::vector<Fact>& facts, const std::string& subject,
                       const std::string& object) {
  for (const auto& f : facts)
    if (f.truth && f.subject == subject && f.object == object) return true;
  return false;
}

// Answers a rendered factoid question against the table; throws if the
// question does not match any renderable (subject, object) pair.
inline std::string eval_factoid(const std::vector<Fact>& facts, const std::string& question) {
  for (const auto& f : facts) {
    for (const auto& g : facts) {
      if (question == render_factoid_question(f.subject, g.object))
        return fact_holds(facts, f.subject, g.object) ? "Yes" : "No";
    }
  }
  throw ContractError("factoid question not generated from this table: " + question);
}

// Yes/No question entailed by the fact table. Half the seeds pair a subject
// with a wrong object so classes stay balanced. Deterministic per seed.
inline TaskItem gen_factoid(uint64_t seed, const std::vector<Fact>& facts) {
  if (facts.empty()) throw ContractError("gen_factoid: empty fact table");
  std::vector<const Fact*> true_facts;
  for (const auto& f : facts)
    if (f.truth) true_facts.push_back(&f);
  if (true_facts.empty()) throw ContractError("gen_factoid: fact table has no true facts");

  Rng rng(derive_seed(seed, /*stream=*/0xfac7));
  const Fact* base = true_facts[rng.uniform_int(true_facts.size())];
  bool negate = derive_seed(seed, /*stream=*/0x0e6) % 2 == 1;
  TaskItem item;
  item.kind = "factoid";
  item.seed = seed;
  std::string object = base->object;
  if (negate) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Fact* other = &facts[rng.uniform_int(facts.size())];
      if (other->object != base->object && !fact_holds(facts, base->subject, other->object)) {
        object = other->object;
        break;
      }
    }
    if (object == base->object) negate = false;  // degenerate table, fall back to positive
  }
  item.question = render_factoid_question(base->subject, object);
  item.gold = fact_holds(facts, base->subject, object) ? "Yes" : "No";
  return item;
}

inline std::string eval_task_item(const TaskItem& item, const std::vector<Fact>& facts) {
  if (item.kind == "bool_expr") return eval_bool_expr(item.question) ? "True" : "False";
  if (item.kind == "factoid") return eval_factoid(facts, item.question);
  throw ContractError("unknown task kind \"" + item.kind + "\"");
}

// ---- bundled desk corpus ----

// Openings of public-domain works, ASCII-normalized and clipped at a clause
// boundary where needed so prompt + lines fit the 256-byte context.
inline std::vector<MemorizationItem> desk_public_domain_items() {
  auto pd = [](const char* id, const char* title, const char* gt) {
    return MemorizationItem{id, title, gt, "public-domain"};
  };
  return {
      pd("pd-01", "Pride and Prejudice",
         "It is a truth universally acknowledged, that a single man in possession of a good "
         "fortune, must be in want of a wife."),
      pd("pd-02", "Moby Dick", "Call me Ishmael."),
      pd("pd-03", "A Tale of Two Cities",
         "It was the best of times, it was the worst of times, it was the age of wisdom, it was "
         "the age of foolishness,"),
      pd("pd-04", "Alice's Adventures in Wonderland",
         "Alice was beginning to get very tired of sitting by her sister on the bank, and of "
         "having nothing to do:"),
      pd("pd-05", "Frankenstein",
         "You will rejoice to hear that no disaster has accompanied the commencement of an "
         "enterprise"),
      pd("pd-06", "Dracula",
         "3 May. Bistritz. Left Munich at 8:35 P. M., on 1st May, arriving at Vienna early next "
         "morning;"),
      pd("pd-07", "The Picture of Dorian Gray",
         "The studio was filled with the rich odour of roses, and when the light summer wind "
         "stirred amidst the trees of the garden,"),
      pd("pd-08", "The Great Gatsby",
         "In my younger and more vulnerable years my father gave me some advice that I have been "
         "turning over in my mind ever since."),
      pd("pd-09", "Adventures of Huckleberry Finn",
         "You don't know about me without you have read a book by the name of The Adventures of "
         "Tom Sawyer; but that ain't no matter."),
      pd("pd-10", "The Adventures of Tom Sawyer",
         "\"Tom!\" No answer. \"Tom!\" No answer. \"What's gone with that boy, I wonder? You "
         "TOM!\""),
      pd("pd-11", "Great Expectations",
         "My father's family name being Pirrip, and my Christian name Philip, my infant tongue "
         "could make of both names nothing"),
      pd("pd-12", "The Yellow Wallpaper",
         "It is very seldom that mere ordinary people like John and myself secure ancestral "
         "halls for the summer."),
      pd("pd-13", "Three Men in a Boat",
         "There were four of us - George, and William Samuel Harris, and myself, and "
         "Montmorency."),
      pd("pd-14", "The Wonderful Wizard of Oz",
         "Dorothy lived in the midst of the great Kansas prairies, with Uncle Henry, who was a "
         "farmer,"),
      pd("pd-15", "Gulliver's Travels",
         "My father had a small estate in Nottinghamshire; I was the third of five sons."),
      pd("pd-16", "The Importance of Being Earnest",
         "Morning-room in Algernon's flat in Half-Moon Street. The room is luxuriously and "
         "artistically furnished."),
      pd("pd-17", "The Hound of the Baskervilles",
         "Mr. Sherlock Holmes, who was usually very late in the mornings, save upon those not "
         "infrequent occasions"),
      pd("pd-18", "Ulysses",
         "Stately, plump Buck Mulligan came from the stairhead, bearing a bowl of lather on "
         "which a mirror and a razor lay crossed."),
      pd("pd-19", "The Jungle Book",
         "It was seven o'clock of a very warm evening in the Seeonee hills when Father Wolf woke "
         "up from his day's rest,"),
      pd("pd-20", "War and Peace",
         "Well, Prince, so Genoa and Lucca are now just family estates of the Buonapartes."),
  };
}

// Seeded pseudo-book openings: invented titles and first lines assembled from
// word banks, enough to reach the 40-item corpus without copyrighted text.
inline std::vector<MemorizationItem> desk_synthetic_items(int count = 20, uint64_t seed = 4071) {
  static const char* kPlaces[] = {"Veskar",  "Thornlow", "Maldrey",    "Quillenmoor",
                                  "Sarkona", "Ettenby",  "Vireles",    "Norhollow",
                                  "Brastead", "Calvenne", "Dunmorrow", "Iskelle"};
  static const char* kNames[] = {"Imre",  "Odella", "Tamsin", "Corvin", "Maren",  "Ansel",
                                 "Petra", "Halvor", "Sibeal", "Rodric", "Yseult", "Eamon"};
  static const char* kNouns[] = {"lighthouse", "orchard",  "archive", "foundry", "causeway",
                                 "observatory", "tannery", "granary", "reservoir", "chapel"};
  static const char* kThings[] = {"ledger", "compass", "lantern", "letter", "key",
                                  "map",    "clock",   "locket",  "violin", "atlas"};
  static const char* kTitleForms[] = {"The %N of %P", "A %n in %P", "%M and the %t",
                                      "The Last %n of %P", "%M's %t"};
  static const char* kOpenings[] = {
      "The morning fog rolled over the harbor of %P while old %M counted what remained of the "
      "season's wages.",
      "When the %n bell rang across %P, nobody expected %M to be the one who answered it.",
      "%M had kept the %t hidden for nine winters before the strangers finally came asking.",
      "Nothing ever left %P by the north road, which is why the empty cart troubled %M so "
      "deeply.",
      "On the day the %n closed for good, %M walked the long way home and said nothing to "
      "anyone.",
      "Every family in %P owned a story about the %n, but only %M had ever written one down.",
      "The %t arrived on a Tuesday, wrapped in oilcloth and addressed to %M in a dead woman's "
      "hand.",
      "%M was not born in %P, a fact the town recalled whenever the %n needed blame.",
  };

  Rng rng(derive_seed(seed, /*stream=*/0x5b00c));
  std::vector<MemorizationItem> items;
  std::set<std::string> used_titles;
  int idx = 0;
  while (static_cast<int>(items.size()) < count) {
    std::string place = kPlaces[rng.uniform_int(std::size(kPlaces))];
    std::string name = kNames[rng.uniform_int(std::size(kNames))];
    std::string noun = kNouns[rng.uniform_int(std::size(kNouns))];
    std::string thing = kThings[rng.uniform_int(std::size(kThings))];
    auto expand = [&](std::string s) {
      auto replace_all = [&s](const std::string& from, const std::string& to) {
        size_t p = 0;
        while ((p = s.find(from, p)) != std::string::npos) {
          s.replace(p, from.size(), to);
          p += to.size();
        }
      };
      std::string cap_noun = noun, cap_thing = thing;
      cap_noun[0] = static_cast<char>(std::toupper(cap_noun[0]));
      cap_thing[0] = static_cast<char>(std::toupper(cap_thing[0]));
      replace_all("%P", place);
      replace_all("%M", name);
      replace_all("%N", cap_noun);
      replace_all("%n", noun);
      replace_all("%T", cap_thing);
      replace_all("%t", thing);
      return s;
    };
    std::string title = expand(kTitleForms[rng.uniform_int(std::size(kTitleForms))]);
    std::string opening = expand(kOpenings[rng.uniform_int(std::size(kOpenings))]);
    if (!used_titles.insert(title).second) continue;
    ++idx;
    char id[16];
    std::snprintf(id, sizeof id, "syn-%02d", idx);
    items.push_back(MemorizationItem{id, title, opening, "synthetic"});
  }
  return items;
}

// The 40-item desk memorization corpus: 20 public-domain openings plus 20
// seeded pseudo-books. Every item fits the model context after prompt
// concatenation.
inline std::vector<MemorizationItem> make_desk_memorization_corpus() {
  std::vector<MemorizationItem> items = desk_public_domain_items();
  std::vector<MemorizationItem> syn = desk_synthetic_items();
  items.insert(items.end(), syn.begin(), syn.end());
  return items;
}

inline std::vector<Fact> make_desk_fact_table() {
  auto t = [](const char* s, const char* o) { return Fact{s, "is", o, true}; };
  auto f = [](const char* s, const char* o) { return Fact{s, "is", o, false}; };
  return {
      t("the sky", "blue"),        t("grass", "green"),      t("snow", "white"),
      t("coal", "black"),          t("blood", "red"),        t("milk", "white"),
      t("the sun", "hot"),         t("ice", "cold"),         t("fire", "hot"),
      t("a lemon", "sour"),        t("honey", "sweet"),      t("sea water", "salty"),
      t("night", "dark"),          t("noon", "bright"),      t("rain", "wet"),
      t("a desert", "dry"),        t("a mountain", "tall"),  t("a feather", "light"),
      t("a stone", "heavy"),       t("a leaf", "green"),     t("a banana", "yellow"),
      t("a cherry", "red"),        t("the ocean", "deep"),   t("a whisper", "quiet"),
      t("thunder", "loud"),        t("steel", "hard"),       t("wool", "soft"),
      t("a glacier", "cold"),      t("lava", "hot"),         t("a pillow", "soft"),
      f("fire", "cold"),           f("snow", "hot"),         f("coal", "white"),
      f("a feather", "heavy"),     f("the sun", "cold"),     f("night", "bright"),
  };
}

inline std::vector<std::string> desk_fluency_sentences() {
  return {
      "The quick brown fox jumps over the lazy dog.",
      "A gentle rain fell on the quiet town all afternoon.",
      "The old sailor tied his small boat to the wooden pier.",
      "Fresh bread from the corner bakery smells wonderful in the morning.",
      "The children walked slowly home under a bright autumn sky.",
      "A silver train crossed the long bridge just before sunset.",
      "The gardener watered the young trees beside the stone wall.",
      "Soft music drifted from the open window of the cafe.",
      "The librarian stacked the heavy books on the lowest shelf.",
      "A warm wind carried the smell of salt in from the harbor.",
      "The painter mixed a pale shade of blue for the winter sky.",
      "Two farmers argued cheerfully about the price of spring wheat.",
      "The clockmaker repaired the ancient watch with steady hands.",
      "A small grey cat slept all day on the sunny doorstep.",
      "The baker swept the flour from the floor before closing.",
      "Cold water ran quickly over the smooth river stones.",
      "The teacher read a short poem to the sleepy class.",
      "A lone cyclist followed the narrow road along the coast.",
      "The miller ground the dry corn into fine golden flour.",
      "Heavy snow covered the red roofs of the mountain village.",
  };
}

// Deterministic paraphrase used as the training-time target for fluency
// probes: synonym swaps plus a fixed lead-in when nothing else changes.
inline std::string desk_paraphrase(const std::string& sentence) {
  static const std::pair<const char*, const char*> kSwaps[] = {
      {"quick", "fast"},     {"quiet", "calm"},      {"gentle", "soft"},
      {"small", "little"},   {"old", "aged"},        {"wonderful", "lovely"},
      {"slowly", "gently"},  {"bright", "clear"},    {"long", "wide"},
      {"young", "new"},      {"open", "unlatched"},  {"heavy", "weighty"},
      {"warm", "mild"},      {"pale", "light"},      {"cheerfully", "happily"},
      {"ancient", "antique"}, {"steady", "sure"},    {"sunny", "sunlit"},
      {"dry", "dried"},      {"fine", "soft"},       {"cold", "chill"},
      {"short", "brief"},    {"narrow", "thin"},     {"lone", "single"},
  };
  std::string out = sentence;
  bool changed = false;
  for (const auto& [from, to] : kSwaps) {
    size_t p = out.find(from);
    if (p != std::string::npos) {
      out.replace(p, std::string(from).size(), to);
      changed = true;
    }
  }
  if (!changed) out = "Put simply, " + out;
  return out;
}

inline std::vector<FluencyProbe> make_desk_fluency_probes() {
  std::vector<FluencyProbe> probes;
  auto sentences = desk_fluency_sentences();
  for (size_t i = 0; i < sentences.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "flu-%02d", static_cast<int>(i + 1));
    probes.push_back(FluencyProbe{id, sentences[i], render_fluency_instruction(sentences[i])});
  }
  return probes;
}

// ---- training-set assembly ----

struct TrainingMix {
  double mem_share = 0.5;
  double task_share = 0.25;
  double fluency_share = 0.25;
  int bool_train_items = 384;
  int factoid_train_items = 256;
  int bool_depth_max = 2;
  uint64_t task_seed_base = 1000;  // eval items draw from a disjoint seed range
};

struct TrainingSet {
  std::vector<TrainSample> samples;
  std::vector<double> weights;
  std::vector<std::pair<std::string, std::string>> mem_eval_pairs;  // (prompt, ground truth)
};

// Builds the mixed training set: memorization items, task Q/A pairs
// (factoids from the table plus boolean expressions), and fluency
// paraphrases. Shares are per-group sampling probabilities.
inline TrainingSet build_training_set(const std::vector<MemorizationItem>& mem_items,
                                      const std::vector<Fact>& facts,
                                      const std::vector<FluencyProbe>& probes,
                                      const TrainingMix& mix = {}) {
  TrainingSet out;
  auto push_group = [&](const std::vector<std::string>& texts, double share) {
    if (texts.empty() || share <= 0) return;
    double w = share / static_cast<double>(texts.size());
    for (const auto& text : texts) {
      TrainSample s{tokenize_bytes(text)};
      s.tokens.push_back(kEndOfText);
      out.samples.push_back(std::move(s));
      out.weights.push_back(w);
    }
  };

  std::vector<std::string> mem_texts;
  for (const auto& item : mem_items) {
    std::string prompt = render_memorization_prompt(item);
    mem_texts.push_back(prompt + "\n" + item.ground_truth);
    out.mem_eval_pairs.emplace_back(prompt, item.ground_truth);
  }
  push_group(mem_texts, mix.mem_share);

  std::vector<std::string> task_texts;
  for (int i = 0; i < mix.bool_train_items; ++i) {
    TaskItem item = gen_bool_expr(mix.task_seed_base + static_cast<uint64_t>(i),
                                  i % (mix.bool_depth_max + 1));
    task_texts.push_back(format_task_sample(item.question, item.gold));
  }
  for (int i = 0; i < mix.factoid_train_items; ++i) {
    TaskItem item = gen_factoid(mix.task_seed_base + static_cast<uint64_t>(i), facts);
    task_texts.push_back(format_task_sample(item.question, item.gold));
  }
  push_group(task_texts, mix.task_share);

  std::vector<std::string> fluency_texts;
  for (const auto& probe : probes)
    fluency_texts.push_back(probe.instruction + "\n" + desk_paraphrase(probe.sentence));
  push_group(fluency_texts, mix.fluency_share);

  return out;
}

// All raw text the model sees in training; the default SAE capture and alpha
// calibration corpus.
inline std::vector<std::string> training_corpus_texts(const std::vector<MemorizationItem>& mem,
                                                      const std::vector<Fact>& facts,
                                                      const std::vector<FluencyProbe>& probes,
                                                      const TrainingMix& mix = {}) {
  std::vector<std::string> texts;
  for (const auto& item : mem) texts.push_back(render_memorization_prompt(item) + "\n" + item.ground_truth);
  for (int i = 0; i < std::min(64, mix.bool_train_items); ++i) {
    TaskItem it = gen_bool_expr(mix.task_seed_base + static_cast<uint64_t>(i),
                                i % (mix.bool_depth_max + 1));
    texts.push_back(format_task_sample(it.question, it.gold));
  }
  for (int i = 0; i < std::min(64, mix.factoid_train_items); ++i) {
    TaskItem it = gen_factoid(mix.task_seed_base + static_cast<uint64_t>(i), facts);
    texts.push_back(format_task_sample(it.question, it.gold));
  }
  for (const auto& probe : probes)
    texts.push_back(probe.instruction + "\n" + desk_paraphrase(probe.sentence));
  return texts;
}

}  // namespace steerlab
