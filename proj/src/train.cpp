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

#include "asrlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace asrlab {

namespace {

struct AdamState {
  std::vector<double> m, v;
};

// Accumulates d(total)/d(params) for one utterance, scaled by 1/batch_n,
// into the Parameter::grad buffers; returns the unscaled objective.
double accumulate_utterance(const Model& model, const Utterance& utt, const LossWeights& weights,
                            const TrainRecipe& recipe, const LhucState* lhuc, uint64_t aug_seed,
                            int64_t batch_n) {
  Array feats = utt.features;
  if (recipe.augment_speed || recipe.augment_spec) {
    Rng aug_rng(aug_seed);
    if (recipe.augment_speed) {
      double factor =
          recipe.speed_factors[static_cast<size_t>(aug_rng.uniform_int(
              static_cast<int64_t>(recipe.speed_factors.size())))];
      feats = speed_perturb(feats, factor);
    }
    if (recipe.augment_spec) feats = spec_augment(feats, SpecAugmentPolicy{}, aug_rng.next_u64());
  }
  Graph g;
  UtteranceLoss loss = joint_loss(g, model, feats, utt.targets, weights, lhuc);
  g.backward(g.scale_const(loss.total, 1.0 / static_cast<double>(batch_n)));
  return g.scalar(loss.total);
}

void clip_and_apply(std::vector<ParamPtr>& trainable, const TrainRecipe& recipe, double lr,
                    int64_t step, std::vector<AdamState>& adam) {
  if (recipe.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& p : trainable)
      for (double gv : p->grad) sq += gv * gv;
    double norm = std::sqrt(sq);
    if (norm > recipe.grad_clip) {
      double f = recipe.grad_clip / norm;
      for (auto& p : trainable)
        for (double& gv : p->grad) gv *= f;
    }
  }
  for (size_t i = 0; i < trainable.size(); ++i) {
    Parameter& p = *trainable[i];
    if (p.grad.empty()) continue;
    if (recipe.use_adam) {
      AdamState& st = adam[i];
      if (st.m.empty()) {
        st.m.assign(p.value.size(), 0.0);
        st.v.assign(p.value.size(), 0.0);
      }
      double b1 = recipe.adam_beta1, b2 = recipe.adam_beta2;
      double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (size_t j = 0; j < p.value.size(); ++j) {
        st.m[j] = b1 * st.m[j] + (1.0 - b1) * p.grad[j];
        st.v[j] = b2 * st.v[j] + (1.0 - b2) * p.grad[j] * p.grad[j];
        p.value[j] -= lr * (st.m[j] / c1) / (std::sqrt(st.v[j] / c2) + recipe.adam_eps);
      }
    } else {
      for (size_t j = 0; j < p.value.size(); ++j) p.value[j] -= lr * p.grad[j];
    }
  }
}

std::vector<const Utterance*> sorted_by_id(const std::vector<Utterance>& utts) {
  std::vector<const Utterance*> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(&u);
  std::sort(out.begin(), out.end(),
            [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
  return out;
}

void shuffle_epoch(std::vector<const Utterance*>& order, uint64_t seed, int64_t epoch) {
  Rng rng(mix_seed(seed, "order:" + std::to_string(epoch)));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
}

}  // namespace

void TrainRecipe::validate() const {
  loss_weights().validate();
  if (!(peak_lr > 0.0)) throw std::invalid_argument("train recipe: peak_lr must be positive");
  if (warmup_steps < 1) throw std::invalid_argument("train recipe: warmup_steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train recipe: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train recipe: epochs must be >= 0");
  if (grad_clip < 0.0) throw std::invalid_argument("train recipe: grad_clip must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("train recipe: adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train recipe: adam_eps must be positive");
  if (augment_speed && speed_factors.empty())
    throw std::invalid_argument("train recipe: speed augmentation needs factors");
  for (double f : speed_factors)
    if (!(f > 0.0)) throw std::invalid_argument("train recipe: speed factors must be positive");
}

LossWeights TrainRecipe::loss_weights() const {
  LossWeights w;
  w.ctc_weight = ctc_weight;
  w.label_smoothing = label_smoothing;
  return w;
}

double learning_rate(double peak, int64_t warmup, int64_t step) {
  if (step < 1) throw std::invalid_argument("learning_rate: step counts from 1");
  if (warmup < 1) throw std::invalid_argument("learning_rate: warmup must be >= 1");
  double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

double dataset_loss(const ModelConfig& config, const ParameterSet& params,
                    const std::vector<Utterance>& utts, const LossWeights& weights,
                    const LhucState* lhuc) {
  if (utts.empty()) return std::numeric_limits<double>::quiet_NaN();
  Model model{config, params};
  double total = 0.0;
  for (const Utterance* utt : sorted_by_id(utts)) {
    Graph g(false);
    total += g.scalar(joint_loss(g, model, utt->features, utt->targets, weights, lhuc).total);
  }
  return total / static_cast<double>(utts.size());
}

TrainResult train(const ModelConfig& config, const ParameterSet& start, const Corpus& corpus,
                  const TrainRecipe& recipe, uint64_t seed) {
  config.validate();
  recipe.validate();
  if (corpus.train.empty()) throw std::invalid_argument("train: corpus has no training utterances");
  for (const auto& name : recipe.freeze_mask)
    if (!start.has(name))
      throw std::invalid_argument("train: freeze_mask names unknown parameter '" + name + "'");

  TrainResult out;
  out.params = start.clone();
  Model model{config, out.params};
  LossWeights weights = recipe.loss_weights();
  out.initial_dev_loss = dataset_loss(config, out.params, corpus.dev, weights);

  std::vector<ParamPtr> trainable;
  for (const auto& p : out.params.items())
    if (recipe.freeze_mask.count(p->name) == 0) trainable.push_back(p);
  std::vector<AdamState> adam(trainable.size());

  std::vector<const Utterance*> order = sorted_by_id(corpus.train);
  int64_t step = 0;
  for (int64_t epoch = 0; epoch < recipe.epochs; ++epoch) {
    shuffle_epoch(order, seed, epoch);
    double epoch_loss = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(recipe.batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(recipe.batch_size));
      std::vector<const Utterance*> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(batch.begin(), batch.end(),
                [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
      out.params.zero_grad();
      double batch_loss = 0.0;
      for (const Utterance* utt : batch)
        batch_loss += accumulate_utterance(
            model, *utt, weights, recipe, nullptr,
            mix_seed(seed, "aug:" + utt->utt_id + ":" + std::to_string(epoch)),
            static_cast<int64_t>(batch.size()));
      batch_loss /= static_cast<double>(batch.size());
      ++step;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: diverged (non-finite loss) at step " +
                                 std::to_string(step) + ", epoch " + std::to_string(epoch + 1));
      clip_and_apply(trainable, recipe, learning_rate(recipe.peak_lr, recipe.warmup_steps, step),
                     step, adam);
      epoch_loss += batch_loss * static_cast<double>(batch.size());
    }
    EpochStats stats;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    stats.dev_loss = dataset_loss(config, out.params, corpus.dev, weights);
    if (!corpus.dev.empty() && !std::isfinite(stats.dev_loss))
      throw std::runtime_error("train: diverged (non-finite dev loss) after epoch " +
                               std::to_string(epoch + 1));
    out.curve.push_back(stats);
  }
  return out;
}

DomainAdaptResult adapt_domain(const ModelConfig& config, const ParameterSet& pretrained,
                               const Corpus& target, const TrainRecipe& recipe, uint64_t seed) {
  DomainAdaptResult out;
  out.config = config;
  out.config.vocab_size = target.vocab.size();
  out.config.validate();
  ParameterSet surgered =
      replace_projections(pretrained, out.config.vocab_size, mix_seed(seed, "surgery"));
  out.result = train(out.config, surgered, target, recipe, seed);
  return out;
}

LhucState adapt_speaker(const ModelConfig& config, const ParameterSet& params,
                        const std::vector<Utterance>& speaker_utts, const TrainRecipe& recipe,
                        uint64_t seed) {
  config.validate();
  recipe.validate();
  if (speaker_utts.empty()) throw std::invalid_argument("adapt_speaker: no utterances");
  for (const auto& utt : speaker_utts)
    if (utt.speaker_id != speaker_utts.front().speaker_id)
      throw std::invalid_argument("adapt_speaker: utterances mix speakers '" +
                                  speaker_utts.front().speaker_id + "' and '" + utt.speaker_id +
                                  "'");

  Model model{config, params};
  LhucState lhuc = make_lhuc_state(config, speaker_utts.front().speaker_id);
  LossWeights weights = recipe.loss_weights();

  std::vector<ParamPtr> trainable = lhuc.scales.items();
  std::vector<AdamState> adam(trainable.size());
  std::vector<const Utterance*> order = sorted_by_id(speaker_utts);
  int64_t step = 0;
  for (int64_t epoch = 0; epoch < recipe.epochs; ++epoch) {
    shuffle_epoch(order, seed, epoch);
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(recipe.batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(recipe.batch_size));
      std::vector<const Utterance*> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(batch.begin(), batch.end(),
                [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
      model.params.zero_grad();
      lhuc.scales.zero_grad();
      double batch_loss = 0.0;
      for (const Utterance* utt : batch)
        batch_loss += accumulate_utterance(
            model, *utt, weights, recipe, &lhuc,
            mix_seed(seed, "aug:" + utt->utt_id + ":" + std::to_string(epoch)),
            static_cast<int64_t>(batch.size()));
      batch_loss /= static_cast<double>(batch.size());
      ++step;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("adapt_speaker: diverged (non-finite loss) at step " +
                                 std::to_string(step));
      clip_and_apply(trainable, recipe, learning_rate(recipe.peak_lr, recipe.warmup_steps, step),
                     step, adam);
    }
  }
  return lhuc;
}

}  // namespace asrlab
