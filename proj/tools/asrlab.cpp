// Copyright (c) 2026 asrlab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment pipeline driver. Every stage reads one JSON config, consumes
// artifacts from an experiment directory, writes its own artifacts there, and
// records input/output content hashes in <exp>/manifest.json. Stage outputs
// are deterministic functions of (config, seed, input artifacts), so a re-run
// with unchanged inputs is byte-identical.
//
// Exit codes: 0 success, 2 config error, 3 data/artifact error, 4 numerical
// divergence, 1 anything else.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asrlab/checkpoint.hpp"
#include "asrlab/corpus.hpp"
#include "asrlab/decode.hpp"
#include "asrlab/eval.hpp"
#include "asrlab/manifest.hpp"
#include "asrlab/model.hpp"
#include "asrlab/nas.hpp"
#include "asrlab/ngram.hpp"
#include "asrlab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asrlab;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct StageArgs {
  std::string config;
  std::string exp = "exp";
  int jobs = 1;
  bool seed_set = false;
  uint64_t seed = 0;
};

// ---------------------------------------------------------------- config io

json load_config_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config " + path);
  try {
    json j = json::parse(is);
    if (!j.is_object()) throw ConfigError("config " + path + ": top level must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T req(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": key '" + key + "': " + e.what());
  }
}

template <typename T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return req<T>(j, key, where);
}

std::string stage_name(const json& j, const std::string& where) {
  std::string name = req<std::string>(j, "name", where);
  if (name.empty()) throw ConfigError(where + ": 'name' must not be empty");
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-';
    if (!ok) throw ConfigError(where + ": 'name' may only use letters, digits, '.', '_', '-'");
  }
  return name;
}

// Seeds come from the config; --seed overrides explicitly. Never defaulted.
uint64_t stage_seed(const json& j, const StageArgs& a, const std::string& where) {
  if (a.seed_set) return a.seed;
  if (!j.contains("seed"))
    throw ConfigError(where + ": 'seed' is required (seeds are never defaulted)");
  return req<uint64_t>(j, "seed", where);
}

TrainRecipe parse_train_recipe(const json& j, const std::string& where) {
  check_keys(j,
             {"epochs", "batch_size", "peak_lr", "warmup_steps", "ctc_weight", "label_smoothing",
              "grad_clip", "use_adam", "adam_beta1", "adam_beta2", "adam_eps", "augment_spec",
              "augment_speed", "speed_factors", "freeze"},
             where);
  TrainRecipe r;
  r.epochs = req<int64_t>(j, "epochs", where);
  r.batch_size = req<int64_t>(j, "batch_size", where);
  r.peak_lr = req<double>(j, "peak_lr", where);
  r.warmup_steps = req<int64_t>(j, "warmup_steps", where);
  r.ctc_weight = opt<double>(j, "ctc_weight", r.ctc_weight, where);
  r.label_smoothing = opt<double>(j, "label_smoothing", r.label_smoothing, where);
  r.grad_clip = opt<double>(j, "grad_clip", r.grad_clip, where);
  r.use_adam = opt<bool>(j, "use_adam", r.use_adam, where);
  r.adam_beta1 = opt<double>(j, "adam_beta1", r.adam_beta1, where);
  r.adam_beta2 = opt<double>(j, "adam_beta2", r.adam_beta2, where);
  r.adam_eps = opt<double>(j, "adam_eps", r.adam_eps, where);
  r.augment_spec = opt<bool>(j, "augment_spec", r.augment_spec, where);
  r.augment_speed = opt<bool>(j, "augment_speed", r.augment_speed, where);
  if (j.contains("speed_factors")) r.speed_factors = req<std::vector<double>>(j, "speed_factors", where);
  if (j.contains("freeze"))
    for (const auto& name : req<std::vector<std::string>>(j, "freeze", where)) r.freeze_mask.insert(name);
  try {
    r.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return r;
}

SearchRecipe parse_search_recipe(const json& j, const std::string& where) {
  check_keys(j,
             {"steps", "batch_size", "base_lr", "base_warmup", "logit_lr", "logit_delay",
              "grad_clip", "ctc_weight", "label_smoothing"},
             where);
  SearchRecipe r;
  r.steps = req<int>(j, "steps", where);
  r.batch_size = req<int>(j, "batch_size", where);
  r.base_lr = req<double>(j, "base_lr", where);
  r.base_warmup = req<int>(j, "base_warmup", where);
  r.logit_lr = req<double>(j, "logit_lr", where);
  r.logit_delay = opt<int>(j, "logit_delay", r.logit_delay, where);
  r.grad_clip = opt<double>(j, "grad_clip", r.grad_clip, where);
  r.ctc_weight = opt<double>(j, "ctc_weight", r.ctc_weight, where);
  r.label_smoothing = opt<double>(j, "label_smoothing", r.label_smoothing, where);
  try {
    r.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return r;
}

ModelConfig parse_model_config(const json& j, const std::string& where) {
  try {
    return model_config_from_json(j.dump());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// ------------------------------------------------------------- artifact io

struct Paths {
  fs::path exp;

  fs::path manifest() const { return exp / "manifest.json"; }
  fs::path data(const std::string& n) const { return exp / "data" / n; }
  fs::path model_ckpt(const std::string& n) const { return exp / "models" / (n + ".ckpt"); }
  fs::path model_cfg(const std::string& n) const { return exp / "models" / (n + ".json"); }
  fs::path model_curve(const std::string& n) const { return exp / "models" / (n + ".curve.tsv"); }
  fs::path lm(const std::string& n) const { return exp / "lm" / (n + ".arpa"); }
  fs::path nbest(const std::string& n) const { return exp / "nbest" / (n + ".tsv"); }
  fs::path search_cfg(const std::string& n) const { return exp / "search" / (n + ".config.json"); }
  fs::path search_sel(const std::string& n) const { return exp / "search" / (n + ".selection.txt"); }
  fs::path search_rep(const std::string& n, const std::string& stage) const {
    return exp / "search" / (n + "." + stage + ".txt");
  }
  fs::path lhuc_dir(const std::string& n) const { return exp / "lhuc" / n; }
  fs::path lhuc_summary(const std::string& n) const { return exp / "lhuc" / (n + ".summary.kv"); }
  fs::path report_txt(const std::string& n) const { return exp / "reports" / (n + ".txt"); }
  fs::path report_kv(const std::string& n) const { return exp / "reports" / (n + ".kv"); }

  std::string rel(const fs::path& p) const { return fs::relative(p, exp).generic_string(); }
};

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::is_regular_file(p))
    throw DataError("missing prerequisite: " + p.string() + " (produce it with `asrlab " + producer + "`)");
}

void require_dir(const fs::path& p, const std::string& producer) {
  if (!fs::is_directory(p))
    throw DataError("missing prerequisite: " + p.string() + " (produce it with `asrlab " + producer + "`)");
}

void ensure_parent(const fs::path& p) { fs::create_directories(p.parent_path()); }

void write_text(const fs::path& p, const std::string& content) {
  ensure_parent(p);
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << content;
}

struct StageIo {
  std::vector<fs::path> files;
  std::vector<fs::path> trees;
};

void record_stage(const Paths& P, const std::string& stage_key, const std::string& config_path,
                  const uint64_t* seed, const StageIo& inputs, const StageIo& outputs) {
  StageRecord rec;
  rec.stage = stage_key;
  rec.config_path = config_path;
  rec.config_hash = hash_file(config_path);
  if (seed) {
    rec.has_seed = true;
    rec.seed = *seed;
  }
  for (const auto& f : inputs.files) rec.inputs[P.rel(f)] = hash_file(f.string());
  for (const auto& t : inputs.trees) rec.inputs[P.rel(t)] = hash_tree(t.string());
  for (const auto& f : outputs.files) rec.outputs[P.rel(f)] = hash_file(f.string());
  for (const auto& t : outputs.trees) rec.outputs[P.rel(t)] = hash_tree(t.string());
  fs::create_directories(P.exp);
  ExperimentManifest m = load_manifest(P.manifest().string());
  m.upsert(rec);
  save_manifest(P.manifest().string(), m);
}

std::string fmt_or_na(double x) { return std::isnan(x) ? "NA" : format_double(x); }

std::string curve_tsv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch\ttrain_loss\tdev_loss\n";
  os << "0\tNA\t" << fmt_or_na(r.initial_dev_loss) << '\n';
  for (size_t i = 0; i < r.curve.size(); ++i)
    os << i + 1 << '\t' << fmt_or_na(r.curve[i].train_loss) << '\t' << fmt_or_na(r.curve[i].dev_loss) << '\n';
  return os.str();
}

std::vector<std::string> text_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

std::string group_of(const Utterance& u) {
  std::string split = u.split;
  if (!split.empty()) split[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(split[0])));
  return split + "-" + u.role;
}

Model load_model(const Paths& P, const std::string& name, const std::string& producer) {
  require_file(P.model_cfg(name), producer);
  require_file(P.model_ckpt(name), producer);
  Model m;
  m.config = load_model_config(P.model_cfg(name).string());
  m.params = load_checkpoint(P.model_ckpt(name).string());
  return m;
}

void save_model_files(const Paths& P, const std::string& name, const ModelConfig& cfg,
                      const ParameterSet& params) {
  ensure_parent(P.model_ckpt(name));
  save_model_config(P.model_cfg(name).string(), cfg);
  save_checkpoint(P.model_ckpt(name).string(), params);
}

// Shared across decode and combine: index utterances from a corpus split.
const Utterance& find_utt(const std::map<std::string, const Utterance*>& index, const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw DataError("utterance '" + id + "' not found in the referenced corpus");
  return *it->second;
}

// ------------------------------------------------------------------ stages

int run_synth_data(const StageArgs& a) {
  const std::string where = "synth-data";
  json j = load_config_json(a.config);
  check_keys(j,
             {"name", "seed", "train_speakers", "dev_speakers", "eval_speakers", "utts_per_speaker",
              "feature_dim", "max_words", "word_list_size", "noise_level", "channel_range",
              "drift_range"},
             where);
  std::string name = stage_name(j, where);
  uint64_t seed = stage_seed(j, a, where);

  CorpusSpec spec;
  spec.train_speakers = opt<int>(j, "train_speakers", spec.train_speakers, where);
  spec.dev_speakers = opt<int>(j, "dev_speakers", spec.dev_speakers, where);
  spec.eval_speakers = opt<int>(j, "eval_speakers", spec.eval_speakers, where);
  spec.utts_per_speaker = opt<int>(j, "utts_per_speaker", spec.utts_per_speaker, where);
  spec.feature_dim = opt<int>(j, "feature_dim", spec.feature_dim, where);
  spec.max_words = opt<int>(j, "max_words", spec.max_words, where);
  spec.word_list_size = opt<int>(j, "word_list_size", spec.word_list_size, where);
  spec.noise_level = opt<double>(j, "noise_level", spec.noise_level, where);
  spec.channel_range = opt<double>(j, "channel_range", spec.channel_range, where);
  spec.drift_range = opt<double>(j, "drift_range", spec.drift_range, where);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }

  Paths P{a.exp};
  Corpus corpus = synth_corpus(spec, seed);
  fs::create_directories(P.data(name));
  save_corpus(P.data(name).string(), corpus);
  record_stage(P, "synth-data/" + name, a.config, &seed, {}, {{}, {P.data(name)}});
  std::cout << "synth-data/" << name << ": train " << corpus.train.size() << ", dev "
            << corpus.dev.size() << ", eval " << corpus.eval.size() << " utterances -> "
            << P.rel(P.data(name)) << "\n";
  return 0;
}

int run_pretrain(const StageArgs& a, const char* stage_kind) {
  const std::string where = stage_kind;
  json j = load_config_json(a.config);
  const bool is_train = where == "train";
  if (is_train)
    check_keys(j, {"name", "seed", "data", "model", "from_search", "recipe"}, where);
  else
    check_keys(j, {"name", "seed", "data", "model", "recipe"}, where);
  std::string name = stage_name(j, where);
  uint64_t seed = stage_seed(j, a, where);
  std::string data = req<std::string>(j, "data", where);
  Paths P{a.exp};
  require_dir(P.data(data), "synth-data");

  StageIo inputs{{}, {P.data(data)}};
  ModelConfig cfg;
  if (is_train && j.contains("from_search")) {
    if (j.contains("model"))
      throw ConfigError(where + ": give either 'model' or 'from_search', not both");
    std::string search = req<std::string>(j, "from_search", where);
    require_file(P.search_cfg(search), "search");
    cfg = load_model_config(P.search_cfg(search).string());
    inputs.files.push_back(P.search_cfg(search));
  } else if (j.contains("model")) {
    cfg = parse_model_config(j.at("model"), where);
  } else {
    throw ConfigError(where + ": missing required key 'model'" +
                      std::string(is_train ? " (or 'from_search')" : ""));
  }

  Corpus corpus = load_corpus(P.data(data).string());
  if (cfg.vocab_size != corpus.vocab.size())
    throw ConfigError(where + ": model vocab_size " + std::to_string(cfg.vocab_size) +
                      " does not match corpus inventory " + std::to_string(corpus.vocab.size()));
  TrainRecipe recipe = parse_train_recipe(req<json>(j, "recipe", where), where + ".recipe");

  Model start = build_model(cfg, seed);
  TrainResult result = train(cfg, start.params, corpus, recipe, seed);
  save_model_files(P, name, cfg, result.params);
  write_text(P.model_curve(name), curve_tsv(result));

  record_stage(P, where + "/" + name, a.config, &seed, inputs,
               {{P.model_ckpt(name), P.model_cfg(name), P.model_curve(name)}, {}});
  double final_dev = result.curve.empty() ? result.initial_dev_loss : result.curve.back().dev_loss;
  std::cout << where << "/" << name << ": dev loss " << fmt_or_na(result.initial_dev_loss) << " -> "
            << fmt_or_na(final_dev) << ", params " << count_params(cfg) << " -> "
            << P.rel(P.model_ckpt(name)) << "\n";
  return 0;
}

int run_search(const StageArgs& a) {
  const std::string where = "search";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "seed", "data", "model", "scopes", "fd_tied", "eta", "mode", "temperature", "recipe"},
             where);
  std::string name = stage_name(j, where);
  uint64_t seed = stage_seed(j, a, where);
  std::string data = req<std::string>(j, "data", where);
  Paths P{a.exp};
  require_dir(P.data(data), "synth-data");

  ModelConfig base = parse_model_config(req<json>(j, "model", where), where);
  Corpus corpus = load_corpus(P.data(data).string());
  if (base.vocab_size != corpus.vocab.size())
    throw ConfigError(where + ": model vocab_size does not match corpus inventory");

  const json& scopes = req<json>(j, "scopes", where);
  check_keys(scopes, {"fd", "ah", "ck"}, where + ".scopes");
  auto fd_widths = req<std::vector<int64_t>>(scopes, "fd", where + ".scopes");
  auto ah_heads = req<std::vector<int64_t>>(scopes, "ah", where + ".scopes");
  auto ck_kernels = req<std::vector<int64_t>>(scopes, "ck", where + ".scopes");
  bool tied = opt<bool>(j, "fd_tied", false, where);

  SearchSettings settings;
  settings.recipe = parse_search_recipe(req<json>(j, "recipe", where), where + ".recipe");
  settings.eta = opt<double>(j, "eta", 0.0, where);
  try {
    settings.mode = parse_weight_mode(req<std::string>(j, "mode", where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (j.contains("temperature")) {
    const json& t = j.at("temperature");
    check_keys(t, {"start", "end"}, where + ".temperature");
    settings.temps.t_start = req<double>(t, "start", where + ".temperature");
    settings.temps.t_end = req<double>(t, "end", where + ".temperature");
  }
  settings.seed = seed;

  const size_t L = base.encoder_blocks.size();
  std::vector<ChoiceList> fd_scopes(L, tied ? fd_tied(fd_widths) : fd_pairs(fd_widths));
  std::vector<ChoiceList> ah_scopes(L, ah_choices(ah_heads));
  std::vector<ChoiceList> ck_scopes(L, ck_choices(ck_kernels));

  ProgressiveResult result = progressive_search(base, fd_scopes, ah_scopes, ck_scopes, corpus.train,
                                                corpus.dev, settings);

  ensure_parent(P.search_cfg(name));
  save_model_config(P.search_cfg(name).string(), result.config);
  StageIo outputs{{P.search_cfg(name), P.search_sel(name)}, {}};
  std::ostringstream sel;
  for (const auto& report : result.stages) {
    std::string suffix = search_group_name(report.stage);
    std::transform(suffix.begin(), suffix.end(), suffix.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    save_search_report(P.search_rep(name, suffix).string(), report);
    outputs.files.push_back(P.search_rep(name, suffix));
    sel << suffix << ' ' << format_selection(report.positions, report.selection) << '\n';
  }
  sel << "params " << result.param_count << '\n';
  write_text(P.search_sel(name), sel.str());

  record_stage(P, "search/" + name, a.config, &seed, {{}, {P.data(data)}}, outputs);
  std::cout << "search/" << name << ": selected architecture with " << result.param_count
            << " params -> " << P.rel(P.search_cfg(name)) << "\n";
  return 0;
}

int run_adapt_domain(const StageArgs& a) {
  const std::string where = "adapt-domain";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "seed", "model", "data", "recipe"}, where);
  std::string name = stage_name(j, where);
  uint64_t seed = stage_seed(j, a, where);
  std::string model_name = req<std::string>(j, "model", where);
  std::string data = req<std::string>(j, "data", where);
  Paths P{a.exp};
  Model pretrained = load_model(P, model_name, "pretrain");
  require_dir(P.data(data), "synth-data");
  Corpus target = load_corpus(P.data(data).string());
  TrainRecipe recipe = parse_train_recipe(req<json>(j, "recipe", where), where + ".recipe");

  DomainAdaptResult adapted = adapt_domain(pretrained.config, pretrained.params, target, recipe, seed);
  save_model_files(P, name, adapted.config, adapted.result.params);
  write_text(P.model_curve(name), curve_tsv(adapted.result));

  record_stage(P, where + "/" + name, a.config, &seed,
               {{P.model_ckpt(model_name), P.model_cfg(model_name)}, {P.data(data)}},
               {{P.model_ckpt(name), P.model_cfg(name), P.model_curve(name)}, {}});
  double final_dev =
      adapted.result.curve.empty() ? adapted.result.initial_dev_loss : adapted.result.curve.back().dev_loss;
  std::cout << where << "/" << name << ": target dev loss " << fmt_or_na(adapted.result.initial_dev_loss)
            << " -> " << fmt_or_na(final_dev) << " -> " << P.rel(P.model_ckpt(name)) << "\n";
  return 0;
}

int run_adapt_speaker(const StageArgs& a) {
  const std::string where = "adapt-speaker";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "seed", "model", "data", "split", "adapt_fraction", "recipe"}, where);
  std::string name = stage_name(j, where);
  uint64_t seed = stage_seed(j, a, where);
  std::string model_name = req<std::string>(j, "model", where);
  std::string data = req<std::string>(j, "data", where);
  std::string split = opt<std::string>(j, "split", std::string("dev"), where);
  double fraction = opt<double>(j, "adapt_fraction", 0.5, where);
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError(where + ": adapt_fraction must lie in (0, 1]");
  TrainRecipe recipe = parse_train_recipe(req<json>(j, "recipe", where), where + ".recipe");

  Paths P{a.exp};
  Model m = load_model(P, model_name, "pretrain or adapt-domain");
  require_dir(P.data(data), "synth-data");
  Corpus corpus = load_corpus(P.data(data).string());
  const std::vector<Utterance>& utts = corpus.split(split);
  if (utts.empty()) throw DataError(where + ": split '" + split + "' of data/" + data + " is empty");

  std::map<std::string, std::vector<Utterance>> by_speaker;
  for (const auto& u : utts) by_speaker[u.speaker_id].push_back(u);

  fs::create_directories(P.lhuc_dir(name));
  std::ostringstream kv;
  StageIo outputs{{P.lhuc_summary(name)}, {P.lhuc_dir(name)}};
  int improved = 0, compared = 0;
  uint64_t speaker_index = 0;
  LossWeights weights = recipe.loss_weights();
  for (const auto& [speaker, spk_utts] : by_speaker) {
    size_t n_adapt = static_cast<size_t>(std::lround(fraction * static_cast<double>(spk_utts.size())));
    n_adapt = std::min(std::max<size_t>(n_adapt, 1), spk_utts.size());
    std::vector<Utterance> adapt_set(spk_utts.begin(), spk_utts.begin() + static_cast<long>(n_adapt));
    std::vector<Utterance> heldout(spk_utts.begin() + static_cast<long>(n_adapt), spk_utts.end());

    LhucState state = adapt_speaker(m.config, m.params, adapt_set, recipe, seed + speaker_index);
    save_checkpoint((P.lhuc_dir(name) / (speaker + ".ckpt")).string(), state.scales);

    kv << "speaker." << speaker << ".adapt_utts=" << adapt_set.size() << '\n';
    kv << "speaker." << speaker << ".heldout_utts=" << heldout.size() << '\n';
    if (!heldout.empty()) {
      double before = dataset_loss(m.config, m.params, heldout, weights, nullptr);
      double after = dataset_loss(m.config, m.params, heldout, weights, &state);
      kv << "speaker." << speaker << ".before=" << format_double(before) << '\n';
      kv << "speaker." << speaker << ".after=" << format_double(after) << '\n';
      kv << "speaker." << speaker << ".improved=" << (after < before ? 1 : 0) << '\n';
      ++compared;
      if (after < before) ++improved;
    }
    ++speaker_index;
  }
  kv << "speakers=" << by_speaker.size() << '\n';
  kv << "compared=" << compared << '\n';
  kv << "improved=" << improved << '\n';
  write_text(P.lhuc_summary(name), kv.str());

  record_stage(P, where + "/" + name, a.config, &seed,
               {{P.model_ckpt(model_name), P.model_cfg(model_name)}, {P.data(data)}}, outputs);
  std::cout << where << "/" << name << ": " << improved << "/" << compared
            << " speakers improved on held-out utterances -> " << P.rel(P.lhuc_summary(name)) << "\n";
  return 0;
}

int run_decode(const StageArgs& a) {
  const std::string where = "decode";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "model", "data", "split", "beam", "n_best", "ctc_weight"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string model_name = req<std::string>(j, "model", where);
  std::string data = req<std::string>(j, "data", where);
  std::string split = req<std::string>(j, "split", where);
  int beam = req<int>(j, "beam", where);
  int n_best = req<int>(j, "n_best", where);
  double ctc_weight = opt<double>(j, "ctc_weight", 0.3, where);

  Paths P{a.exp};
  Model m = load_model(P, model_name, "pretrain, train or adapt-domain");
  require_dir(P.data(data), "synth-data");
  Corpus corpus = load_corpus(P.data(data).string());
  const std::vector<Utterance>& utts = corpus.split(split);
  if (utts.empty()) throw DataError(where + ": split '" + split + "' of data/" + data + " is empty");
  if (m.config.vocab_size != corpus.vocab.size())
    throw ConfigError(where + ": model vocab_size does not match corpus inventory");

  std::vector<NBestList> lists(utts.size());
  int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(utts.size())));
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (int k = 0; k < jobs; ++k) {
    workers.emplace_back([&, k]() {
      try {
        for (size_t i = static_cast<size_t>(k); i < utts.size(); i += static_cast<size_t>(jobs))
          lists[i] = beam_search_nbest(m, corpus.vocab, utts[i].utt_id, utts[i].features, beam, n_best,
                                       ctc_weight);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ensure_parent(P.nbest(name));
  save_nbest(P.nbest(name).string(), lists);
  record_stage(P, where + "/" + name, a.config, nullptr,
               {{P.model_ckpt(model_name), P.model_cfg(model_name)}, {P.data(data)}},
               {{P.nbest(name)}, {}});
  std::cout << where << "/" << name << ": " << lists.size() << " utterances, beam " << beam << " -> "
            << P.rel(P.nbest(name)) << "\n";
  return 0;
}

int run_train_lm(const StageArgs& a) {
  const std::string where = "train-lm";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "data", "split", "order", "unk_cutoff"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string data = req<std::string>(j, "data", where);
  std::string split = opt<std::string>(j, "split", std::string("train"), where);
  int order = req<int>(j, "order", where);
  int unk_cutoff = opt<int>(j, "unk_cutoff", 1, where);
  if (unk_cutoff < 0) throw ConfigError(where + ": unk_cutoff must be >= 0");

  Paths P{a.exp};
  require_dir(P.data(data), "synth-data");
  Corpus corpus = load_corpus(P.data(data).string());
  const std::vector<Utterance>& utts = corpus.split(split);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& u : utts) sentences.push_back(text_words(u.text));

  // Open vocabulary: word types at or below the count cutoff become "<unk>",
  // which then absorbs out-of-vocabulary queries during rescoring. If no type
  // falls at the cutoff, the rarest count class is mapped instead so that an
  // unknown-word class always exists when unk_cutoff > 0.
  if (unk_cutoff > 0 && !sentences.empty()) {
    std::map<std::string, int> counts;
    for (const auto& s : sentences)
      for (const auto& w : s) ++counts[w];
    int threshold = unk_cutoff;
    if (!counts.empty()) {
      int rarest = counts.begin()->second;
      for (const auto& [w, c] : counts) rarest = std::min(rarest, c);
      threshold = std::max(threshold, rarest);
      bool any_cut = false;
      for (const auto& [w, c] : counts) any_cut = any_cut || c <= unk_cutoff;
      if (any_cut) threshold = unk_cutoff;
    }
    for (auto& s : sentences)
      for (auto& w : s)
        if (counts[w] <= threshold) w = "<unk>";
  }

  NGramLM lm = train_kn_lm(sentences, order);
  ensure_parent(P.lm(name));
  save_arpa(P.lm(name).string(), lm);
  record_stage(P, where + "/" + name, a.config, nullptr, {{}, {P.data(data)}}, {{P.lm(name)}, {}});
  std::cout << where << "/" << name << ": order " << order << ", " << lm.vocab.size()
            << " word types over " << sentences.size() << " sentences -> " << P.rel(P.lm(name)) << "\n";
  return 0;
}

int run_rescore(const StageArgs& a) {
  const std::string where = "rescore";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "nbest", "lm", "lm_weight", "ctc_weight"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string nbest_name = req<std::string>(j, "nbest", where);
  std::string lm_name = req<std::string>(j, "lm", where);
  double lm_weight = req<double>(j, "lm_weight", where);
  double ctc_weight = opt<double>(j, "ctc_weight", 0.3, where);

  Paths P{a.exp};
  require_file(P.nbest(nbest_name), "decode");
  require_file(P.lm(lm_name), "train-lm");
  std::vector<NBestList> lists = load_nbest(P.nbest(nbest_name).string(), ctc_weight);
  NGramLM lm = load_arpa(P.lm(lm_name).string());
  std::vector<NBestList> rescored;
  for (const auto& l : lists) rescored.push_back(lm_rescore(l, lm, lm_weight));

  ensure_parent(P.nbest(name));
  save_nbest(P.nbest(name).string(), rescored);
  record_stage(P, where + "/" + name, a.config, nullptr,
               {{P.nbest(nbest_name), P.lm(lm_name)}, {}}, {{P.nbest(name)}, {}});
  std::cout << where << "/" << name << ": " << rescored.size() << " lists, lm weight " << lm_weight
            << " -> " << P.rel(P.nbest(name)) << "\n";
  return 0;
}

int run_combine(const StageArgs& a) {
  const std::string where = "combine";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "nbest", "beta", "ctc_weight", "system_b", "data"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string nbest_name = req<std::string>(j, "nbest", where);
  double beta = req<double>(j, "beta", where);
  double ctc_weight = opt<double>(j, "ctc_weight", 0.3, where);
  const json& sys_b = req<json>(j, "system_b", where);
  check_keys(sys_b, {"type", "model", "lm", "scale"}, where + ".system_b");
  std::string type = req<std::string>(sys_b, "type", where + ".system_b");

  Paths P{a.exp};
  require_file(P.nbest(nbest_name), "decode");
  std::vector<NBestList> lists = load_nbest(P.nbest(nbest_name).string(), ctc_weight);
  std::vector<NBestList> combined;
  StageIo inputs{{P.nbest(nbest_name)}, {}};

  if (type == "model") {
    std::string model_name = req<std::string>(sys_b, "model", where + ".system_b");
    std::string data = req<std::string>(j, "data", where);
    Model second = load_model(P, model_name, "pretrain, train or adapt-domain");
    require_dir(P.data(data), "synth-data");
    Corpus corpus = load_corpus(P.data(data).string());
    if (second.config.vocab_size != corpus.vocab.size())
      throw ConfigError(where + ": second model vocab_size does not match corpus inventory");
    std::map<std::string, const Utterance*> index;
    for (const auto* split : {&corpus.train, &corpus.dev, &corpus.eval})
      for (const auto& u : *split) index[u.utt_id] = &u;
    for (const auto& l : lists) {
      const Utterance& u = find_utt(index, l.utt_id);
      ModelRescorer scorer(second, corpus.vocab, u.features, ctc_weight);
      combined.push_back(cross_system_combine(l, scorer, beta));
    }
    inputs.files.push_back(P.model_ckpt(model_name));
    inputs.files.push_back(P.model_cfg(model_name));
    inputs.trees.push_back(P.data(data));
  } else if (type == "lm") {
    std::string lm_name = req<std::string>(sys_b, "lm", where + ".system_b");
    double scale = req<double>(sys_b, "scale", where + ".system_b");
    require_file(P.lm(lm_name), "train-lm");
    NGramLM lm = load_arpa(P.lm(lm_name).string());
    WeightedLmScorer scorer(lm, scale);
    for (const auto& l : lists) combined.push_back(cross_system_combine(l, scorer, beta));
    inputs.files.push_back(P.lm(lm_name));
  } else {
    throw ConfigError(where + ".system_b: type must be 'model' or 'lm'");
  }

  ensure_parent(P.nbest(name));
  save_nbest(P.nbest(name).string(), combined);
  record_stage(P, where + "/" + name, a.config, nullptr, inputs, {{P.nbest(name)}, {}});
  std::cout << where << "/" << name << ": " << combined.size() << " lists at beta " << beta << " -> "
            << P.rel(P.nbest(name)) << "\n";
  return 0;
}

int run_score(const StageArgs& a) {
  const std::string where = "score";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "nbest", "data", "split"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string nbest_name = req<std::string>(j, "nbest", where);
  std::string data = req<std::string>(j, "data", where);
  std::string split = req<std::string>(j, "split", where);

  Paths P{a.exp};
  require_file(P.nbest(nbest_name), "decode");
  require_dir(P.data(data), "synth-data");
  Corpus corpus = load_corpus(P.data(data).string());
  const std::vector<Utterance>& utts = corpus.split(split);
  if (utts.empty()) throw DataError(where + ": split '" + split + "' of data/" + data + " is empty");

  std::vector<RefUtterance> refs;
  for (const auto& u : utts) refs.push_back({u.utt_id, group_of(u), text_words(u.text)});
  std::map<std::string, std::vector<std::string>> hyps;
  for (const auto& list : load_nbest(P.nbest(nbest_name).string())) {
    if (list.hyps.empty()) continue;
    hyps[list.utt_id] = tokens_to_words(list.hyps.front().tokens);
  }

  WERReport report = wer_report(refs, hyps);
  write_text(P.report_txt(name), format_wer_table(report));
  write_text(P.report_kv(name), format_wer_kv(report));
  record_stage(P, where + "/" + name, a.config, nullptr,
               {{P.nbest(nbest_name)}, {P.data(data)}},
               {{P.report_txt(name), P.report_kv(name)}, {}});
  std::cout << format_wer_table(report);
  std::cout << where << "/" << name << ": overall WER " << format_double(report.all.wer_percent)
            << "% -> " << P.rel(P.report_kv(name)) << "\n";
  return 0;
}

// Sums the utt.<id>.sub/del/ins entries of a score report into per-utterance
// error counts. Ids may themselves contain dots, so match by fixed affixes.
std::map<std::string, int> errors_from_kv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open report " + path.string());
  std::map<std::string, int> errors;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    if (key.rfind("utt.", 0) != 0) continue;
    for (const std::string suffix : {".sub", ".del", ".ins"}) {
      if (key.size() > 4 + suffix.size() &&
          key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0)
        errors[key.substr(4, key.size() - 4 - suffix.size())] += std::stoi(line.substr(eq + 1));
    }
  }
  if (errors.empty()) throw DataError("no per-utterance entries in " + path.string());
  return errors;
}

int run_sigtest(const StageArgs& a) {
  const std::string where = "sigtest";
  json j = load_config_json(a.config);
  check_keys(j, {"name", "report_a", "report_b", "alpha"}, where);
  if (a.seed_set) throw ConfigError(where + ": deterministic stage, --seed is not applicable");
  std::string name = stage_name(j, where);
  std::string report_a = req<std::string>(j, "report_a", where);
  std::string report_b = req<std::string>(j, "report_b", where);
  double alpha = opt<double>(j, "alpha", 0.05, where);

  Paths P{a.exp};
  require_file(P.report_kv(report_a), "score");
  require_file(P.report_kv(report_b), "score");
  std::map<std::string, int> ea = errors_from_kv(P.report_kv(report_a));
  std::map<std::string, int> eb = errors_from_kv(P.report_kv(report_b));
  if (ea.size() != eb.size())
    throw DataError(where + ": reports cover different utterance sets (" + std::to_string(ea.size()) +
                    " vs " + std::to_string(eb.size()) + ")");
  std::vector<int> va, vb;
  for (const auto& [id, err] : ea) {
    auto it = eb.find(id);
    if (it == eb.end()) throw DataError(where + ": utterance '" + id + "' missing from " + report_b);
    va.push_back(err);
    vb.push_back(it->second);
  }

  MAPSSWEResult r = mapsswe(va, vb, alpha);
  std::ostringstream kv;
  kv << "n=" << r.n << '\n';
  kv << "mean_diff=" << format_double(r.mean_diff) << '\n';
  kv << "variance=" << format_double(r.variance) << '\n';
  kv << "z=" << format_double(r.z) << '\n';
  kv << "p=" << format_double(r.p_value) << '\n';
  kv << "alpha=" << format_double(r.alpha) << '\n';
  kv << "critical=" << format_double(r.critical) << '\n';
  kv << "significant=" << (r.significant ? 1 : 0) << '\n';
  kv << "degenerate_variance=" << (r.degenerate_variance ? 1 : 0) << '\n';
  write_text(P.report_kv(name), kv.str());

  record_stage(P, where + "/" + name, a.config, nullptr,
               {{P.report_kv(report_a), P.report_kv(report_b)}, {}}, {{P.report_kv(name)}, {}});
  std::cout << where << "/" << name << ": z=" << format_double(r.z) << " p=" << format_double(r.p_value)
            << " -> " << (r.significant ? "significant" : "not significant") << " at alpha "
            << format_double(r.alpha) << (r.degenerate_variance ? " (degenerate variance)" : "") << "\n";
  return 0;
}

int run_count_params(const StageArgs& a) {
  ModelConfig cfg = load_model_config(a.config);
  int64_t n = count_params(cfg);
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << "params " << n << " (" << static_cast<double>(n) / 1e6 << "M)";
  std::cout << os.str() << "\n";
  return 0;
}

ModelConfig table1_sys2() {
  ModelConfig c = ModelConfig::baseline();
  for (auto& b : c.encoder_blocks) b.conv_kernel = 7;
  c.decoder.num_blocks = 12;
  return c;
}

ModelConfig table1_sys5() {
  const int64_t scope[5] = {512, 1024, 2048, 3072, 4096};
  const int pairs[12][2] = {{1, 1}, {1, 3}, {0, 3}, {0, 2}, {0, 0}, {0, 0},
                            {0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 1}, {1, 0}};
  ModelConfig c = table1_sys2();
  for (int i = 0; i < 12; ++i)
    c.encoder_blocks[i].ff_dims = {scope[pairs[i][0]], scope[pairs[i][1]]};
  return c;
}

int run_replay_table1() {
  struct Row {
    const char* label;
    const char* description;
    ModelConfig config;
    double published_m;
  };
  std::vector<Row> rows = {
      {"Sys. 1", "Conformer baseline (12 enc blocks, kernel 31, 6 dec blocks)", ModelConfig::baseline(), 42.3},
      {"Sys. 2", "kernel 7, 12 decoder blocks", table1_sys2(), 51.8},
      {"Sys. 5", "searched per-block macaron widths", table1_sys5(), 37.6},
  };
  std::cout.setf(std::ios::fixed);
  for (const auto& r : rows) {
    int64_t n = count_params(r.config);
    double diff = 100.0 * (static_cast<double>(n) - r.published_m * 1e6) / (r.published_m * 1e6);
    std::cout.precision(1);
    std::cout << r.label << "  " << n << " params (" << static_cast<double>(n) / 1e6 << "M)  published "
              << r.published_m << "M  " << (diff >= 0 ? "+" : "") << diff << "%  -- " << r.description
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "asrlab: a desk-scale speech recognition pipeline over synthetic data\n"
      "(corpus synthesis, Conformer training, architecture search, adaptation,\n"
      "hybrid decoding, LM rescoring, system combination, WER and significance)"};
  app.require_subcommand(1);

  StageArgs args;
  auto add_stage_options = [&](CLI::App* sub, bool needs_config, bool needs_exp) {
    if (needs_config)
      sub->add_option("--config", args.config, "stage config (JSON)")->required();
    if (needs_exp) {
      sub->add_option("--exp", args.exp, "experiment directory (default: exp)");
      sub->add_option("--jobs", args.jobs, "worker threads where the stage parallelizes (default: 1)")
          ->check(CLI::PositiveNumber);
      sub->add_option_function<uint64_t>(
          "--seed", [&](uint64_t v) { args.seed = v; args.seed_set = true; },
          "override the config seed (stochastic stages only)");
    }
  };

  std::vector<std::pair<CLI::App*, std::function<int()>>> actions;
  auto add = [&](const char* name, const char* desc, bool needs_config, bool needs_exp,
                 std::function<int()> fn) {
    CLI::App* sub = app.add_subcommand(name, desc);
    add_stage_options(sub, needs_config, needs_exp);
    actions.emplace_back(sub, std::move(fn));
  };

  add("synth-data", "synthesize a deterministic corpus", true, true,
      [&] { return run_synth_data(args); });
  add("pretrain", "train a model from scratch on a source corpus", true, true,
      [&] { return run_pretrain(args, "pretrain"); });
  add("search", "progressive architecture search (FD -> AH -> CK)", true, true,
      [&] { return run_search(args); });
  add("train", "train a model (optionally from a searched architecture)", true, true,
      [&] { return run_pretrain(args, "train"); });
  add("adapt-domain", "output-layer surgery plus fine-tune on a target corpus", true, true,
      [&] { return run_adapt_domain(args); });
  add("adapt-speaker", "per-speaker hidden-unit scaling on adaptation utterances", true, true,
      [&] { return run_adapt_speaker(args); });
  add("decode", "hybrid attention/alignment beam search to n-best lists", true, true,
      [&] { return run_decode(args); });
  add("train-lm", "estimate a smoothed back-off word LM from transcripts", true, true,
      [&] { return run_train_lm(args); });
  add("rescore", "add word-LM scores to n-best lists and re-rank", true, true,
      [&] { return run_rescore(args); });
  add("combine", "two-pass cross-system rescoring of n-best lists", true, true,
      [&] { return run_combine(args); });
  add("score", "align 1-best output against references, report WER", true, true,
      [&] { return run_score(args); });
  add("sigtest", "matched-pairs significance test between two score reports", true, true,
      [&] { return run_sigtest(args); });
  add("count-params", "print the trainable-parameter count of a model config", true, false,
      [&] { return run_count_params(args); });
  add("replay-table1", "parameter counts of the three published reference systems", false, false,
      [&] { return run_replay_table1(); });

  try {
    app.parse(argc, argv);
    for (auto& [sub, fn] : actions)
      if (sub->parsed()) return fn();
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).find("diverged") != std::string::npos) {
      std::cerr << "numerical divergence: " << e.what() << "\n";
      return kExitDiverged;
    }
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
