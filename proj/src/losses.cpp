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

#include "asrlab/losses.hpp"

#include <stdexcept>
#include <string>

namespace asrlab {

void LossWeights::validate() const {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0))
    throw std::invalid_argument("loss weights: ctc_weight must lie in [0, 1]");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw std::invalid_argument("loss weights: label_smoothing must lie in [0, 1)");
}

void check_targets(const std::vector<int>& targets, const ModelConfig& config) {
  if (targets.empty()) throw std::invalid_argument("loss targets must not be empty");
  int limit = blank_of(config.vocab_size);
  for (int t : targets)
    if (t < 0 || t >= limit)
      throw std::invalid_argument("target id " + std::to_string(t) +
                                  " outside the plain-symbol range [0, " + std::to_string(limit) +
                                  ")");
}

Tensor attention_ce_loss(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& targets,
                         double label_smoothing) {
  check_targets(targets, m.config);
  std::vector<int> input;
  input.reserve(targets.size() + 1);
  input.push_back(sos_of(m.config.vocab_size));
  input.insert(input.end(), targets.begin(), targets.end());
  std::vector<int> scored = targets;
  scored.push_back(eos_of(m.config.vocab_size));
  Tensor logits = decoder_logits(g, m, enc_out, input);
  return g.cross_entropy(logits, scored, label_smoothing);
}

Tensor encoder_ctc_loss(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& targets) {
  check_targets(targets, m.config);
  Tensor log_probs = ctc_log_probs(g, m, enc_out);
  return g.ctc_loss(log_probs, targets, blank_of(m.config.vocab_size));
}

UtteranceLoss joint_loss(Graph& g, const Model& m, const Array& features,
                         const std::vector<int>& targets, const LossWeights& weights,
                         const LhucState* lhuc) {
  weights.validate();
  check_targets(targets, m.config);
  Tensor enc = encode(g, m, features, lhuc);
  UtteranceLoss out;
  out.att = attention_ce_loss(g, m, enc, targets, weights.label_smoothing);
  out.ctc_feasible = ctc_admissible(g.shape(enc)[0], targets);
  if (out.ctc_feasible) {
    out.ctc = encoder_ctc_loss(g, m, enc, targets);
    out.total = g.add(g.scale_const(out.ctc, weights.ctc_weight),
                      g.scale_const(out.att, 1.0 - weights.ctc_weight));
  } else {
    out.total = out.att;
  }
  return out;
}

}  // namespace asrlab
