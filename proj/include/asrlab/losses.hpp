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

#ifndef ASRLAB_LOSSES_HPP_
#define ASRLAB_LOSSES_HPP_

#include <vector>

#include "asrlab/model.hpp"

namespace asrlab {

struct LossWeights {
  double ctc_weight = 0.3;  // total = w * ctc + (1 - w) * att
  double label_smoothing = 0.1;

  void validate() const;
};

struct UtteranceLoss {
  Tensor total;  // scalar
  Tensor att;    // scalar
  Tensor ctc;    // scalar; invalid when the target is inadmissible
  bool ctc_feasible = false;
};

// Teacher-forced sequence cross entropy: decoder input [<sos>, y...],
// predicted rows scored against [y..., <eos>]. Mean over positions.
Tensor attention_ce_loss(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& targets,
                         double label_smoothing);

// -log P(targets | encoder frames) under the blank-based alignment model.
// Throws if the target does not fit the frame count; check first.
Tensor encoder_ctc_loss(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& targets);

// Shared-encoder multi-task loss. When the target is too long for the
// downsampled frame count, the alignment term is dropped for that utterance
// (flagged via ctc_feasible = false) and the attention term alone is the
// total, so such utterances still train.
UtteranceLoss joint_loss(Graph& g, const Model& m, const Array& features,
                         const std::vector<int>& targets, const LossWeights& weights,
                         const LhucState* lhuc = nullptr);

// Rejects empty targets and ids outside the plain-symbol range (sentinels
// or blank in a target are caller bugs).
void check_targets(const std::vector<int>& targets, const ModelConfig& config);

}  // namespace asrlab

#endif  // ASRLAB_LOSSES_HPP_
