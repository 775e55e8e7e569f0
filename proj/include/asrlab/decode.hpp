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

#ifndef ASRLAB_DECODE_HPP_
#define ASRLAB_DECODE_HPP_

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "asrlab/model.hpp"
#include "asrlab/ngram.hpp"

namespace asrlab {

// Marker for score fields a pass has not filled yet ("NA" in the exchange
// format).
inline double score_na() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool score_present(double x) { return !std::isnan(x); }

struct Hypothesis {
  std::vector<std::string> tokens;  // plain output symbols; the end sentinel
                                    // terminates search internally and is
                                    // stripped here
  double att_logprob = 0.0;
  double ctc_logprob = 0.0;
  double lm_logprob = score_na();         // filled by lm_rescore
  double firstpass_logprob = score_na();  // filled by cross_system_combine
  double combined_score = 0.0;
};

// Ranked hypotheses for one utterance: sorted by combined_score descending
// (ties: fewer tokens, then lexicographic) with no duplicate token
// sequences. Every operation below returns lists in this form.
struct NBestList {
  std::string utt_id;
  std::vector<Hypothesis> hyps;
};

// Joint label-synchronous beam search over the attention decoder with an
// alignment-prefix score from the encoder's per-frame distributions:
// combined = (1-w)*att + w*ctc with w = ctc_decode_weight. Scores are
// divided by token count during beam pruning only; stored scores stay
// unnormalized. Hypothesis length is capped by the encoder frame count.
// Returns the top n_best distinct sequences. Rejects beam < 1, n_best < 1,
// w outside [0,1], and a vocabulary that does not match the model.
NBestList beam_search_nbest(const Model& m, const Vocab& vocab, const std::string& utt_id, const Array& features,
                            int beam, int n_best = 100, double ctc_decode_weight = 0.3);

// Words for the word-level LM: token symbols concatenated, split at "<spc>".
std::vector<std::string> tokens_to_words(const std::vector<std::string>& tokens);

// combined_score += lm_weight * sentence log-probability of the recovered
// word sequence; resorted. Rejects negative or non-finite weights; an
// out-of-vocabulary word without an "<unk>" class propagates the LM's
// rejection.
NBestList lm_rescore(const NBestList& nbest, const NGramLM& lm, double lm_weight);

// Anything that can assign a sequence log-likelihood to a hypothesis.
struct SequenceScorer {
  virtual ~SequenceScorer() = default;
  virtual double score(const std::vector<std::string>& tokens) const = 0;
};

// Second-pass score from another model on one utterance's features:
// (1-w)*teacher-forced attention + w*full alignment log-likelihood. The
// encoder runs once at construction.
class ModelRescorer : public SequenceScorer {
 public:
  ModelRescorer(const Model& m, const Vocab& vocab, const Array& features, double ctc_weight = 0.3);
  double score(const std::vector<std::string>& tokens) const override;

 private:
  const Model* m_;
  const Vocab* vocab_;
  double ctc_weight_;
  Array enc_;
  Array log_probs_;
};

// scale * LM sentence log-probability; stands in for an external first-pass
// scorer where no second acoustic model is wanted.
class WeightedLmScorer : public SequenceScorer {
 public:
  WeightedLmScorer(const NGramLM& lm, double scale);
  double score(const std::vector<std::string>& tokens) const override;

 private:
  const NGramLM* lm_;
  double scale_;
};

// Two-pass combination: combined_score = beta * (system A's combined_score,
// recorded into firstpass_logprob) + (1-beta) * system_b.score(tokens);
// resorted. att/ctc/lm fields keep system A's values. Rejects beta outside
// [0, 1].
NBestList cross_system_combine(const NBestList& firstpass, const SequenceScorer& system_b, double beta = 0.5);

// Full-sequence alignment log-likelihood of `ids` under per-frame log
// distributions [T x V] with the given blank id; -inf when the sequence
// cannot fit in T frames. Empty sequences are permitted (all-blank mass).
double ctc_full_logprob(const Array& log_probs, int blank, const std::vector<int>& ids);

// Line-oriented UTF-8 exchange format, one hypothesis per line:
// utt_id<TAB>rank<TAB>att<TAB>ctc<TAB>lm<TAB>firstpass<TAB>token token ...
// with absent scores written as NA. Ranks are 1-based per utterance; save
// writes shortest round-trip decimals so identical lists serialize
// byte-identically. load regroups consecutive lines per utterance and
// reconstructs combined_score = (1-ctc_weight)*att + ctc_weight*ctc
// (+ lm_weight*lm when present); combined-pass files keep their stored rank
// order, which stays authoritative.
void save_nbest(const std::string& path, const std::vector<NBestList>& lists);
std::vector<NBestList> load_nbest(const std::string& path, double ctc_weight = 0.3, double lm_weight = 0.0);

}  // namespace asrlab

#endif  // ASRLAB_DECODE_HPP_
