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

#ifndef ASRLAB_NAS_HPP_
#define ASRLAB_NAS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "asrlab/corpus.hpp"
#include "asrlab/losses.hpp"
#include "asrlab/model.hpp"

namespace asrlab {

// Searchable hyper-parameter groups inside each encoder block: macaron
// feedforward dimensionalities (FD, searched as a pair), attention head
// count (AH), depthwise convolution kernel size (CK).
enum class SearchGroup { kFD, kAH, kCK };

std::string search_group_name(SearchGroup group);

// One concrete candidate. FD uses both fields (first / last feedforward
// width); AH and CK use `primary` only (head count / kernel size).
struct ArchChoice {
  int64_t primary = 0;
  int64_t secondary = 0;

  friend bool operator==(const ArchChoice& a, const ArchChoice& b) {
    return a.primary == b.primary && a.secondary == b.secondary;
  }
};

using ChoiceList = std::vector<ArchChoice>;

// Scope constructors. fd_pairs is the cartesian square of the width scope
// (every (i, j) combination); fd_tied restricts to equal pairs.
ChoiceList fd_pairs(const std::vector<int64_t>& widths);
ChoiceList fd_tied(const std::vector<int64_t>& widths);
ChoiceList ah_choices(const std::vector<int64_t>& heads);
ChoiceList ck_choices(const std::vector<int64_t>& kernels);

// Published search scopes: full scale and a scaled-down copy for desk runs.
std::vector<int64_t> full_fd_scope();   // {512, 1024, 2048, 3072, 4096}
std::vector<int64_t> full_ah_scope();   // {2, 4, 8}
std::vector<int64_t> full_ck_scope();   // {3, 5, 7}
std::vector<int64_t> desk_fd_scope();   // {16, 32, 64}
std::vector<int64_t> desk_ah_scope();   // {2, 4}
std::vector<int64_t> desk_ck_scope();   // {3, 5, 7}

// Candidates for one encoder block within one search group. param_costs[i]
// is the trainable-scalar count of the whole block realized with candidate
// i (non-searched components taken from the host config), so cost
// differences match count_params differences exactly.
struct CandidateSet {
  int layer_index = 0;
  SearchGroup group = SearchGroup::kFD;
  ChoiceList candidates;
  std::vector<int64_t> param_costs;
};

// Trainable-scalar count of one encoder block under the given shape.
int64_t block_param_count(const BlockConfig& block, int64_t rel_max_dist);

enum class WeightMode { kSoftmax, kGumbel };

WeightMode parse_weight_mode(const std::string& name);  // "softmax" / "gumbel"
std::string weight_mode_name(WeightMode mode);

// Architecture distribution state: one logit vector "arch.enc{l}" per
// searched block, plus the sampling temperature, size penalty factor, and
// weighting mode used while training them.
struct ArchParams {
  ParameterSet logits;
  double temperature = 1.0;
  double eta = 0.0;
  WeightMode mode = WeightMode::kSoftmax;
};

// lambda_i = exp(alpha_i) / sum_j exp(alpha_j). Rejects empty input.
std::vector<double> softmax_weights(const std::vector<double>& alpha);

// Gumbel-softmax weights: with lt = log softmax(alpha) and G_i = -log(-log
// U_i) drawn from `seed`, returns softmax((lt + G) / T). Sharpens toward a
// one-hot vector as T -> 0 and flattens toward uniform as T grows. T > 0.
std::vector<double> gumbel_weights(const std::vector<double>& alpha, double temperature, uint64_t seed);
std::vector<double> gumbel_weights(const std::vector<double>& alpha, double temperature, Rng& rng);

// conformer_loss + eta * sum_l dot(lambda^l, P^l) over normalized weights.
// The graph form differentiates through the lambda nodes, so logit gradients
// carry exactly the eta * P term on top of the task loss. eta >= 0.
double penalized_loss(double conformer_loss, const std::vector<std::vector<double>>& lambdas,
                      const std::vector<CandidateSet>& positions, double eta);
Tensor penalized_loss_node(Graph& g, Tensor conformer_loss, const std::vector<Tensor>& lambdas,
                           const std::vector<CandidateSet>& positions, double eta);

// Winners of earlier stages, pinned per encoder block before building a
// supernet for the next stage. Empty list = keep the base config's values.
struct FixedChoices {
  ChoiceList fd;
  ChoiceList ah;
  ChoiceList ck;
};

// Base config with the pinned choices written into each encoder block.
ModelConfig apply_choices(const ModelConfig& base, const FixedChoices& fixed);
// Base config with selection[l] (index into positions[l]) applied per block.
ModelConfig apply_selection(const ModelConfig& base, const std::vector<CandidateSet>& positions,
                            const std::vector<int>& selection);

// Weight-sharing mixture model over one searched group: block l's output is
// sum_i lambda_i^l * block_i(x^{l-1}) where block_i realizes candidate i.
// Branches share every parameter whose shape candidates agree on: FD
// branches own their feedforward weights and share the rest of the block;
// AH branches share q/k/v/o and differ in head partitioning plus their own
// relative-position table; CK branches nest inside one widest depthwise
// kernel (a size-3 kernel reads the center slice of size-7).
struct Supernet {
  ModelConfig config;  // fixed choices applied; searched entries keep base values
  SearchGroup stage;
  std::vector<CandidateSet> positions;  // one per encoder block
  ParameterSet params;
  ArchParams arch;
};

// scopes has one candidate list per encoder block. fixed must not pin the
// searched stage itself.
Supernet build_supernet(const ModelConfig& base, SearchGroup stage, const std::vector<ChoiceList>& scopes,
                        const FixedChoices& fixed, uint64_t seed);

// Mixture weights per block as graph nodes (shape [N_l]): softmax of the
// logits, optionally perturbed by Gumbel noise drawn from `rng` (required in
// gumbel mode). Gradients flow to the logits.
std::vector<Tensor> arch_weight_nodes(Graph& g, const Supernet& s, WeightMode mode, double temperature, Rng* rng);

// Deterministic per-block softmax weights of the current logits.
std::vector<std::vector<double>> current_weights(const Supernet& s);

// Encoder forward under the mixture. lambdas must hold one [N_l] node per
// block. features as in encode().
Tensor supernet_encode(Graph& g, const Supernet& s, const Array& features, const std::vector<Tensor>& lambdas);

// Joint attention + alignment loss on the mixture encoder, mirroring
// joint_loss() semantics (infeasible alignment terms are dropped).
UtteranceLoss supernet_loss(Graph& g, const Supernet& s, const std::vector<Tensor>& lambdas,
                            const Array& features, const std::vector<int>& targets, const LossWeights& weights);

// argmax_i of softmax(logits) per block; exact weight ties break toward the
// smaller param cost, then the smaller index.
std::vector<int> select_architecture(const std::vector<CandidateSet>& positions, const ParameterSet& logits);

// Per-block winners in report notation: "a;b;c" across blocks, FD entries as
// "(i,j)" pairs of indices into the sorted width scope, AH/CK as values.
std::string format_selection(const std::vector<CandidateSet>& positions, const std::vector<int>& selection);

// Exponential interpolation from t_start at step 0 to t_end at step
// total - 1. Both endpoints positive.
struct TemperatureSchedule {
  double t_start = 1.0;
  double t_end = 0.1;

  double at(int step, int total_steps) const;
};

// Hyper-parameters of the alternating optimization. Each of the `steps`
// rounds takes one batch gradient step on the base parameters (training
// split, logits frozen) and one on the logits (held-out split, base frozen).
struct SearchRecipe {
  int steps = 60;
  int batch_size = 4;
  double base_lr = 0.1;
  int base_warmup = 10;
  double logit_lr = 0.3;
  int logit_delay = 0;  // rounds of base-only training before logit updates begin
  double grad_clip = 5.0;  // 0 disables
  double ctc_weight = 0.3;
  double label_smoothing = 0.0;

  void validate() const;
  LossWeights loss_weights() const { return {ctc_weight, label_smoothing}; }
};

struct ReportStep {
  int step = 0;
  double temperature = 1.0;
  double penalty = 0.0;                      // eta * sum_l dot(lambda^l, P^l)
  std::vector<std::vector<double>> lambdas;  // softmax weights per block
};

struct SearchReport {
  SearchGroup stage = SearchGroup::kFD;
  std::vector<CandidateSet> positions;
  std::vector<ReportStep> trajectory;  // state before round 1, then per round
  std::vector<int> selection;
  ModelConfig config;  // supernet base config with the winners applied
  int64_t param_count = 0;
};

// Alternating search over a built supernet. Splits must be disjoint by
// utt_id and non-empty. The temperature schedule is indexed by round;
// softmax mode ignores it for weighting but still reports it. Rounds up to
// logit_delay skip the logit step so the base parameters can warm up first.
SearchReport pipelined_search(Supernet& s, const std::vector<Utterance>& train_split,
                              const std::vector<Utterance>& heldout_split, const SearchRecipe& recipe, double eta,
                              WeightMode mode, const TemperatureSchedule& temps, uint64_t seed);

struct SearchSettings {
  SearchRecipe recipe;
  double eta = 0.0;
  WeightMode mode = WeightMode::kSoftmax;
  TemperatureSchedule temps;
  uint64_t seed = 0;
};

struct ProgressiveResult {
  std::vector<SearchReport> stages;  // FD, AH, CK
  ModelConfig config;
  int64_t param_count = 0;
};

// Three pipelined stages in fixed order FD -> AH -> CK, each starting from
// the previous stage's winners. The final architecture is meant to be
// retrained from scratch; supernet weights are not inherited.
ProgressiveResult progressive_search(const ModelConfig& base, const std::vector<ChoiceList>& fd_scopes,
                                     const std::vector<ChoiceList>& ah_scopes,
                                     const std::vector<ChoiceList>& ck_scopes,
                                     const std::vector<Utterance>& train_split,
                                     const std::vector<Utterance>& heldout_split, const SearchSettings& settings);

// Structured text: header, per-step lambda/temperature/penalty lines, final
// selection in the per-block notation of format_selection().
std::string format_search_report(const SearchReport& report);
void save_search_report(const std::string& path, const SearchReport& report);

}  // namespace asrlab

#endif  // ASRLAB_NAS_HPP_
