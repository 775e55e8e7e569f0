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

#include "asrlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "asrlab/bytes.hpp"

namespace asrlab {

namespace {

constexpr char kFeatureMagic[8] = {'A', 'S', 'R', 'L', 'F', 'E', 'A', '1'};

int64_t count_repeats(const std::vector<int>& targets) {
  int64_t reps = 0;
  for (size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++reps;
  return reps;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

const std::vector<std::string>& builtin_word_list() {
  static const std::vector<std::string> words = {
      "the",  "a",    "to",   "and",  "of",   "i",    "you",  "it",   "is",   "was",
      "that", "he",   "she",  "we",   "they", "do",   "go",   "so",   "no",   "yes",
      "my",   "me",   "on",   "in",   "up",   "day",  "time", "home", "tea",  "cup",
      "well", "good", "talk", "walk", "read", "book", "rain", "old",  "year", "know"};
  return words;
}

void CorpusSpec::validate() const {
  if (word_list_size < 1) throw std::invalid_argument("corpus spec: word list must not be empty");
  if (word_list_size > static_cast<int>(builtin_word_list().size()))
    throw std::invalid_argument("corpus spec: word list size exceeds the builtin list");
  if (train_speakers < 1) throw std::invalid_argument("corpus spec: need at least one train speaker");
  if (dev_speakers < 0 || eval_speakers < 0)
    throw std::invalid_argument("corpus spec: negative speaker count");
  if (utts_per_speaker < 1) throw std::invalid_argument("corpus spec: need utterances per speaker >= 1");
  if (feature_dim < 1) throw std::invalid_argument("corpus spec: feature_dim must be >= 1");
  if (max_words < 1) throw std::invalid_argument("corpus spec: max_words must be >= 1");
  if (noise_level < 0.0) throw std::invalid_argument("corpus spec: negative noise level");
  if (channel_range < 0.0 || channel_range >= 1.0)
    throw std::invalid_argument("corpus spec: channel_range must lie in [0, 1)");
  if (drift_range < 0.0 || drift_range >= 1.0)
    throw std::invalid_argument("corpus spec: drift_range must lie in [0, 1)");
}

const std::vector<Utterance>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "eval") return eval;
  throw std::invalid_argument("unknown corpus split '" + name + "'");
}

const SpeakerProfile& Corpus::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.id == id) return s;
  throw std::invalid_argument("unknown speaker '" + id + "'");
}

std::map<int, Array> token_templates(const CorpusSpec& spec, uint64_t seed) {
  spec.validate();
  Vocab vocab = Vocab::standard();
  std::map<int, Array> templates;
  for (int w = 0; w < spec.word_list_size; ++w) {
    const std::string& word = builtin_word_list()[static_cast<size_t>(w)];
    for (char c : word) {
      int id = vocab.find(std::string(1, c));
      templates.emplace(id, Array::zeros({1}));
    }
  }
  templates.emplace(vocab.find("<spc>"), Array::zeros({1}));
  for (auto& [id, tmpl] : templates) {
    Rng rng(mix_seed(seed, "template:" + vocab.symbols[static_cast<size_t>(id)]));
    int64_t len = 3 + rng.uniform_int(4);
    tmpl = Array::zeros({len, spec.feature_dim});
    for (auto& v : tmpl.v) v = rng.gaussian();
  }
  return templates;
}

std::vector<int> greedy_template_decode(const Array& features, const std::map<int, Array>& templates) {
  if (features.shape.size() != 2) throw std::invalid_argument("greedy_template_decode: features must be T x F");
  int64_t T = features.shape[0], F = features.shape[1];
  std::vector<int> out;
  int64_t t = 0;
  while (t < T) {
    if (t > 0) {
      bool repeat = true;
      for (int64_t f = 0; f < F && repeat; ++f)
        repeat = features.at(t, f) == features.at(t - 1, f);
      if (repeat) {
        ++t;
        continue;
      }
    }
    bool matched = false;
    for (const auto& [id, tmpl] : templates) {
      int64_t len = tmpl.shape[0];
      if (tmpl.shape[1] != F || t + len > T) continue;
      bool ok = true;
      for (int64_t i = 0; i < len && ok; ++i)
        for (int64_t f = 0; f < F && ok; ++f)
          ok = std::abs(features.at(t + i, f) - tmpl.at(i, f)) <= 1e-12;
      if (ok) {
        out.push_back(id);
        t += len;
        matched = true;
        break;
      }
    }
    if (!matched)
      throw std::runtime_error("greedy_template_decode: no template matches at frame " + std::to_string(t));
  }
  return out;
}

Corpus synth_corpus(const CorpusSpec& spec, uint64_t seed) {
  spec.validate();
  Corpus corpus;
  corpus.vocab = Vocab::standard();
  std::map<int, Array> templates = token_templates(spec, seed);

  std::vector<double> zipf(static_cast<size_t>(spec.word_list_size));
  double zipf_total = 0.0;
  for (int k = 0; k < spec.word_list_size; ++k) {
    zipf[static_cast<size_t>(k)] = 1.0 / static_cast<double>(k + 1);
    zipf_total += zipf[static_cast<size_t>(k)];
  }

  struct SplitPlan {
    const char* name;
    int count;
    std::vector<Utterance>* bucket;
  };
  SplitPlan plans[3] = {{"train", spec.train_speakers, &corpus.train},
                        {"dev", spec.dev_speakers, &corpus.dev},
                        {"eval", spec.eval_speakers, &corpus.eval}};

  for (const auto& plan : plans) {
    for (int s = 0; s < plan.count; ++s) {
      SpeakerProfile prof;
      prof.role = (s % 2 == 0) ? "PAR" : "INV";
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_%s%02d", plan.name, prof.role == "PAR" ? "par" : "inv", s);
      prof.id = buf;
      Rng spk_rng(mix_seed(seed, "speaker:" + prof.id));
      prof.channel.resize(static_cast<size_t>(spec.feature_dim));
      for (auto& c : prof.channel) c = 1.0 + spk_rng.uniform(-spec.channel_range, spec.channel_range);
      prof.drift_prob = spk_rng.uniform(0.0, spec.drift_range);
      prof.noise_sigma = spec.noise_level * spk_rng.uniform(0.5, 1.5);
      corpus.speakers.push_back(prof);

      for (int u = 0; u < spec.utts_per_speaker; ++u) {
        Utterance utt;
        std::snprintf(buf, sizeof(buf), "%s_%04d", prof.id.c_str(), u);
        utt.utt_id = buf;
        utt.speaker_id = prof.id;
        utt.role = prof.role;
        utt.split = plan.name;
        Rng rng(mix_seed(seed, "utt:" + utt.utt_id));

        int n_words = 1 + static_cast<int>(rng.uniform_int(spec.max_words));
        std::string text;
        for (int w = 0; w < n_words; ++w) {
          double r = rng.uniform() * zipf_total;
          int pick = spec.word_list_size - 1;
          double acc = 0.0;
          for (int k = 0; k < spec.word_list_size; ++k) {
            acc += zipf[static_cast<size_t>(k)];
            if (r < acc) {
              pick = k;
              break;
            }
          }
          if (w > 0) text += " ";
          text += builtin_word_list()[static_cast<size_t>(pick)];
        }
        utt.text = text;
        utt.targets = corpus.vocab.encode(text);

        std::vector<std::vector<double>> rows;
        for (int id : utt.targets) {
          const Array& tmpl = templates.at(id);
          for (int64_t i = 0; i < tmpl.shape[0]; ++i) {
            auto begin = tmpl.v.begin() + i * spec.feature_dim;
            rows.emplace_back(begin, begin + spec.feature_dim);
          }
        }
        // Keep a spare encoder frame beyond the minimum admissible length.
        int64_t needed =
            4 * (static_cast<int64_t>(utt.targets.size()) + count_repeats(utt.targets) + 2);
        while (static_cast<int64_t>(rows.size()) < needed) rows.push_back(rows.back());

        std::vector<std::vector<double>> drifted;
        drifted.reserve(rows.size() * 2);
        for (auto& row : rows) {
          drifted.push_back(row);
          if (rng.uniform() < prof.drift_prob) drifted.push_back(row);
        }

        utt.features = Array::zeros({static_cast<int64_t>(drifted.size()), spec.feature_dim});
        for (size_t t = 0; t < drifted.size(); ++t)
          for (int64_t f = 0; f < spec.feature_dim; ++f)
            utt.features.v[t * static_cast<size_t>(spec.feature_dim) + static_cast<size_t>(f)] =
                drifted[t][static_cast<size_t>(f)] * prof.channel[static_cast<size_t>(f)] +
                prof.noise_sigma * rng.gaussian();

        plan.bucket->push_back(std::move(utt));
      }
    }
  }
  return corpus;
}

Array spec_augment(const Array& features, const SpecAugmentPolicy& policy, uint64_t seed) {
  if (features.shape.size() != 2) throw std::invalid_argument("spec_augment: features must be T x F");
  if (policy.num_freq_masks < 0 || policy.num_time_masks < 0 || policy.max_freq_width < 0 ||
      policy.max_time_width < 0)
    throw std::invalid_argument("spec_augment: negative policy value");
  int64_t T = features.shape[0], F = features.shape[1];
  double mean = 0.0;
  for (double v : features.v) mean += v;
  mean /= static_cast<double>(features.v.size());

  int64_t fmax = policy.max_freq_width > 0 ? policy.max_freq_width : F / 8;
  int64_t tmax = policy.max_time_width > 0 ? policy.max_time_width : std::max<int64_t>(1, T / 20);
  fmax = std::min(fmax, F);
  tmax = std::min(tmax, T);

  Array out = features;
  Rng rng(seed);
  for (int m = 0; m < policy.num_freq_masks; ++m) {
    int64_t w = static_cast<int64_t>(rng.uniform_int(fmax + 1));
    int64_t f0 = static_cast<int64_t>(rng.uniform_int(F));
    w = std::min(w, F - f0);
    for (int64_t t = 0; t < T; ++t)
      for (int64_t f = f0; f < f0 + w; ++f) out.v[static_cast<size_t>(t * F + f)] = mean;
  }
  for (int m = 0; m < policy.num_time_masks; ++m) {
    int64_t w = static_cast<int64_t>(rng.uniform_int(tmax + 1));
    int64_t t0 = static_cast<int64_t>(rng.uniform_int(T));
    w = std::min(w, T - t0);
    for (int64_t t = t0; t < t0 + w; ++t)
      for (int64_t f = 0; f < F; ++f) out.v[static_cast<size_t>(t * F + f)] = mean;
  }
  return out;
}

Array speed_perturb(const Array& features, double factor) {
  if (features.shape.size() != 2) throw std::invalid_argument("speed_perturb: features must be T x F");
  if (!(factor > 0.0)) throw std::invalid_argument("speed_perturb: factor must be positive");
  int64_t T = features.shape[0], F = features.shape[1];
  int64_t T2 = std::max<int64_t>(1, std::llround(static_cast<double>(T) / factor));
  Array out = Array::zeros({T2, F});
  for (int64_t t = 0; t < T2; ++t) {
    double p = (T2 > 1 && T > 1)
                   ? static_cast<double>(t) * static_cast<double>(T - 1) / static_cast<double>(T2 - 1)
                   : 0.0;
    int64_t i0 = static_cast<int64_t>(p);
    i0 = std::min(i0, T - 1);
    int64_t i1 = std::min(i0 + 1, T - 1);
    double a = p - static_cast<double>(i0);
    for (int64_t f = 0; f < F; ++f)
      out.v[static_cast<size_t>(t * F + f)] = (1.0 - a) * features.at(i0, f) + a * features.at(i1, f);
  }
  return out;
}

void save_features(const std::string& path, const Array& features) {
  if (features.shape.size() != 2) throw std::invalid_argument("save_features: features must be T x F");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_features: cannot open '" + path + "'");
  os.write(kFeatureMagic, 8);
  put_u32(os, static_cast<uint32_t>(features.shape[0]));
  put_u32(os, static_cast<uint32_t>(features.shape[1]));
  for (double v : features.v) put_f64(os, v);
  if (!os) throw std::runtime_error("save_features: write failed for '" + path + "'");
}

Array load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_features: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw std::runtime_error("load_features: '" + path + "' is not a feature file");
  int64_t rows = static_cast<int64_t>(get_u32(is));
  int64_t cols = static_cast<int64_t>(get_u32(is));
  Array out = Array::zeros({rows, cols});
  for (auto& v : out.v) v = get_f64(is);
  if (!is) throw std::runtime_error("load_features: truncated file '" + path + "'");
  return out;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("save_corpus: cannot open manifest in '" + dir + "'");
  std::ofstream vocab_file(fs::path(dir) / "vocab.txt", std::ios::trunc);
  for (const auto& s : corpus.vocab.symbols) vocab_file << s << "\n";
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.eval}) {
    for (const auto& utt : *split) {
      manifest << utt.utt_id << "\t" << utt.speaker_id << "\t" << utt.role << "\t" << utt.split
               << "\t" << utt.text << "\n";
      save_features((fs::path(dir) / "features" / (utt.utt_id + ".fea")).string(), utt.features);
    }
  }
  if (!manifest) throw std::runtime_error("save_corpus: manifest write failed in '" + dir + "'");
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream vocab_file(fs::path(dir) / "vocab.txt");
  if (!vocab_file) throw std::runtime_error("load_corpus: missing vocab.txt in '" + dir + "'");
  Corpus corpus;
  corpus.vocab.symbols.clear();
  std::string line;
  while (std::getline(vocab_file, line))
    if (!line.empty()) corpus.vocab.symbols.push_back(line);
  corpus.vocab.blank_id = corpus.vocab.find("<blank>");
  corpus.vocab.sos_id = corpus.vocab.find("<sos>");
  corpus.vocab.eos_id = corpus.vocab.find("<eos>");

  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw std::runtime_error("load_corpus: missing manifest.tsv in '" + dir + "'");
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto fields = split_fields(line, '\t');
    if (fields.size() != 5)
      throw std::runtime_error("load_corpus: malformed manifest line '" + line + "'");
    Utterance utt;
    utt.utt_id = fields[0];
    utt.speaker_id = fields[1];
    utt.role = fields[2];
    utt.split = fields[3];
    utt.text = fields[4];
    utt.targets = corpus.vocab.encode(utt.text);
    utt.features = load_features((fs::path(dir) / "features" / (utt.utt_id + ".fea")).string());
    if (utt.split == "train")
      corpus.train.push_back(std::move(utt));
    else if (utt.split == "dev")
      corpus.dev.push_back(std::move(utt));
    else if (utt.split == "eval")
      corpus.eval.push_back(std::move(utt));
    else
      throw std::runtime_error("load_corpus: unknown split '" + utt.split + "'");
  }
  return corpus;
}

}  // namespace asrlab
