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

#ifndef ASRLAB_CORPUS_HPP_
#define ASRLAB_CORPUS_HPP_

#include <map>
#include <string>
#include <vector>

#include "asrlab/config.hpp"

namespace asrlab {

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  std::string role;   // "INV" or "PAR"
  std::string split;  // "train", "dev" or "eval"
  Array features;     // T x feature_dim
  std::vector<int> targets;
  std::string text;

  std::string group_tag() const { return role + "/" + split; }
};

struct SpeakerProfile {
  std::string id;
  std::string role;
  std::vector<double> channel;  // per-dim scaling
  double drift_prob = 0.0;      // frame-duplication probability
  double noise_sigma = 0.0;
};

struct CorpusSpec {
  int train_speakers = 14;
  int dev_speakers = 3;  // disjoint from train
  int eval_speakers = 3;
  int utts_per_speaker = 100;
  int feature_dim = 40;
  int max_words = 3;  // per utterance, >= 1
  int word_list_size = 40;
  double noise_level = 0.05;
  double channel_range = 0.4;
  double drift_range = 0.08;

  void validate() const;
};

struct Corpus {
  Vocab vocab;
  std::vector<Utterance> train, dev, eval;
  std::vector<SpeakerProfile> speakers;

  const std::vector<Utterance>& split(const std::string& name) const;
  const SpeakerProfile& speaker(const std::string& id) const;
};

// Deterministic synthetic corpus. Every token has a characteristic 3-6 frame
// feature template; an utterance renders its token templates in order (padded
// with trailing frame repeats until floor(T/4) comfortably admits the target
// under a blank-separated alignment), then applies the speaker's channel
// scaling, frame-duplication drift, and additive noise. Word sequences are
// drawn Zipf-style from a fixed word list so transcripts carry n-gram
// structure. Dev/eval speakers are disjoint from train speakers.
Corpus synth_corpus(const CorpusSpec& spec, uint64_t seed);

// The token templates behind synth_corpus(spec, seed); keyed by token id.
std::map<int, Array> token_templates(const CorpusSpec& spec, uint64_t seed);

// Recovers the token sequence of an *undistorted* rendering by exact template
// matching (trailing repeated frames are skipped). Throws if no template
// matches, which happens once any distortion is enabled.
std::vector<int> greedy_template_decode(const Array& features, const std::map<int, Array>& templates);

const std::vector<std::string>& builtin_word_list();

struct SpecAugmentPolicy {
  int num_freq_masks = 2;
  int max_freq_width = 0;  // 0 -> F/8
  int num_time_masks = 2;
  int max_time_width = 0;  // 0 -> max(1, T/20)
};

// Masked bands are filled with the utterance-level feature mean; everything
// else is bitwise untouched. Deterministic given seed; widths clipped.
Array spec_augment(const Array& features, const SpecAugmentPolicy& policy, uint64_t seed);

// Linear time resampling to length round(T/factor).
Array speed_perturb(const Array& features, double factor);

// On-disk corpus: <dir>/manifest.tsv (utt_id, speaker_id, role, split, text)
// plus <dir>/features/<utt_id>.fea ("ASRLFEA1": uint32 rows, uint32 cols,
// float64 little-endian row-major).
void save_features(const std::string& path, const Array& features);
Array load_features(const std::string& path);
void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);

}  // namespace asrlab

#endif  // ASRLAB_CORPUS_HPP_
