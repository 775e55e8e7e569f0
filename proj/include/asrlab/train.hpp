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

#ifndef ASRLAB_TRAIN_HPP_
#define ASRLAB_TRAIN_HPP_

#include <set>
#include <string>
#include <vector>

#include "asrlab/corpus.hpp"
#include "asrlab/losses.hpp"

namespace asrlab {

struct TrainRecipe {
  double ctc_weight = 0.3;
  double label_smoothing = 0.1;
  double peak_lr = 0.05;
  int64_t warmup_steps = 200;
  int64_t batch_size = 8;
  int64_t epochs = 10;
  double grad_clip = 5.0;  // global norm; 0 disables
  bool use_adam = false;   // default: plain gradient descent
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  bool augment_spec = false;
  bool augment_speed = false;
  std::vector<double> speed_factors = {0.9, 1.0, 1.1};
  std::set<std::string> freeze_mask;  // parameter names excluded from updates

  void validate() const;
  LossWeights loss_weights() const;
};

// Inverse-square-root schedule with linear warmup; step counts from 1 and
// the peak is reached exactly at `warmup`.
double learning_rate(double peak, int64_t warmup, int64_t step);

struct EpochStats {
  double train_loss = 0.0;  // mean utterance objective, after augmentation
  double dev_loss = 0.0;    // mean utterance objective, clean; NaN if no dev set
};

struct TrainResult {
  ParameterSet params;
  double initial_dev_loss = 0.0;
  std::vector<EpochStats> curve;  // one entry per epoch
};

// Gradient-descent training of the joint objective over corpus.train,
// honoring recipe.freeze_mask. `start` is untouched; the result holds a
// trained copy. Same inputs and seed give bitwise-identical parameters.
// Batches accumulate utterance gradients in utt_id order. A non-finite
// batch loss aborts with a diagnostic.
TrainResult train(const ModelConfig& config, const ParameterSet& start, const Corpus& corpus,
                  const TrainRecipe& recipe, uint64_t seed);

struct DomainAdaptResult {
  ModelConfig config;  // vocab_size follows the target corpus
  TrainResult result;
};

// Output-layer surgery (fresh projections for the target inventory) followed
// by a full fine-tune on the target corpus.
DomainAdaptResult adapt_domain(const ModelConfig& config, const ParameterSet& pretrained,
                               const Corpus& target, const TrainRecipe& recipe, uint64_t seed);

// Trains only the per-speaker hidden-unit scaling logits on the given
// utterances (which must share one speaker); base parameters are read-only.
LhucState adapt_speaker(const ModelConfig& config, const ParameterSet& params,
                        const std::vector<Utterance>& speaker_utts, const TrainRecipe& recipe,
                        uint64_t seed);

// Mean utterance objective without augmentation or gradients.
double dataset_loss(const ModelConfig& config, const ParameterSet& params,
                    const std::vector<Utterance>& utts, const LossWeights& weights,
                    const LhucState* lhuc = nullptr);

}  // namespace asrlab

#endif  // ASRLAB_TRAIN_HPP_
