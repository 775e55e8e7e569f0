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

#include "asrlab/nas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "asrlab/train.hpp"

namespace asrlab {

namespace {

std::string block_prefix(int layer) { return "enc" + std::to_string(layer); }

std::string branch_suffix(size_t n_candidates, int i) {
  return n_candidates > 1 ? ".b" + std::to_string(i) : "";
}

void check_candidate(const ModelConfig& cfg, SearchGroup group, const ArchChoice& c) {
  switch (group) {
    case SearchGroup::kFD:
      if (c.primary < 1 || c.secondary < 1)
        throw std::invalid_argument("build_supernet: feedforward widths must be >= 1");
      break;
    case SearchGroup::kAH:
      if (c.primary < 1 || cfg.model_dim % c.primary != 0)
        throw std::invalid_argument("build_supernet: head count " + std::to_string(c.primary) +
                                    " does not divide model_dim " + std::to_string(cfg.model_dim));
      break;
    case SearchGroup::kCK:
      if (c.primary < 1 || c.primary % 2 == 0)
        throw std::invalid_argument("build_supernet: conv kernel must be odd and >= 1, got " +
                                    std::to_string(c.primary));
      break;
  }
}

void write_choice(BlockConfig& b, SearchGroup group, const ArchChoice& c) {
  switch (group) {
    case SearchGroup::kFD:
      b.ff_dims = {c.primary, c.secondary};
      break;
    case SearchGroup::kAH:
      if (c.primary < 1 || b.model_dim % c.primary != 0)
        throw std::invalid_argument("apply_choices: head count " + std::to_string(c.primary) +
                                    " does not divide model_dim " + std::to_string(b.model_dim));
      b.num_heads = c.primary;
      b.head_dim = b.model_dim / c.primary;
      break;
    case SearchGroup::kCK:
      b.conv_kernel = c.primary;
      break;
  }
}

std::vector<double> xavier_values(const std::string& name, int64_t count, int64_t fan_in, int64_t fan_out,
                                  uint64_t seed) {
  Rng rng(mix_seed(seed, name));
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(static_cast<size_t>(count));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

// One candidate branch of encoder block l: the standard block sequence with
// the searched component swapped in. Shared components read the plain
// parameter names; branch-owned ones carry a ".b{i}" suffix.
Tensor branch_forward(Graph& g, const Supernet& s, size_t layer, int cand, Tensor x) {
  const ParameterSet& ps = s.params;
  const ModelConfig& cfg = s.config;
  const BlockConfig& bb = cfg.encoder_blocks[layer];
  const CandidateSet& pos = s.positions[layer];
  const ArchChoice& choice = pos.candidates[static_cast<size_t>(cand)];
  std::string p = block_prefix(static_cast<int>(layer));
  std::string suffix = branch_suffix(pos.candidates.size(), cand);

  std::string ff1_w = p + ".ff1";
  std::string ff2_w = p + ".ff2";
  int64_t heads = bb.num_heads;
  std::string rel_name = p + ".att.relbias";
  Tensor dw_kernel;

  switch (pos.group) {
    case SearchGroup::kFD:
      ff1_w += suffix;
      ff2_w += suffix;
      break;
    case SearchGroup::kAH:
      heads = choice.primary;
      rel_name = p + ".att" + suffix + ".relbias";
      break;
    case SearchGroup::kCK:
      break;
  }

  Tensor dw_full = g.param(ps.get(p + ".conv.dw.w"));
  if (pos.group == SearchGroup::kCK) {
    int64_t k_max = g.shape(dw_full)[1];
    int64_t k = choice.primary;
    dw_kernel = k == k_max ? dw_full : g.slice_cols(dw_full, (k_max - k) / 2, k);
  } else {
    dw_kernel = dw_full;
  }

  x = g.add(x, g.scale_const(feedforward_core(g, ps, ff1_w, pre_norm(g, ps, x, p + ".ff1.norm")), 0.5));

  Tensor normed = pre_norm(g, ps, x, p + ".att.norm");
  x = g.add(x, multi_head_attention(g, ps, p + ".att", normed, normed, heads, cfg.model_dim / heads,
                                    g.param(ps.get(rel_name)), cfg.rel_max_dist, false));

  Tensor t = conv_module_core(g, ps, p + ".conv", pre_norm(g, ps, x, p + ".conv.norm"), dw_kernel,
                              g.param(ps.get(p + ".conv.dw.b")));
  x = g.add(x, t);

  x = g.add(x, g.scale_const(feedforward_core(g, ps, ff2_w, pre_norm(g, ps, x, p + ".ff2.norm")), 0.5));
  return pre_norm(g, ps, x, p + ".final_norm");
}

// Deterministic pass order: sorted by utt_id, reshuffled at each wrap.
class Cycler {
 public:
  Cycler(const std::vector<Utterance>& utts, uint64_t seed, std::string tag) : seed_(seed), tag_(std::move(tag)) {
    items_.reserve(utts.size());
    for (const auto& u : utts) items_.push_back(&u);
    std::sort(items_.begin(), items_.end(),
              [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
  }

  std::vector<const Utterance*> next(int n) {
    std::vector<const Utterance*> batch;
    batch.reserve(static_cast<size_t>(n));
    while (batch.size() < static_cast<size_t>(n)) {
      if (pos_ == 0) shuffle();
      batch.push_back(items_[pos_]);
      pos_ = (pos_ + 1) % items_.size();
      if (pos_ == 0) ++pass_;
    }
    return batch;
  }

 private:
  void shuffle() {
    Rng rng(mix_seed(seed_, tag_ + ":" + std::to_string(pass_)));
    for (size_t i = items_.size(); i > 1; --i) std::swap(items_[i - 1], items_[rng.uniform_int(static_cast<int64_t>(i))]);
  }

  std::vector<const Utterance*> items_;
  size_t pos_ = 0;
  int pass_ = 0;
  uint64_t seed_;
  std::string tag_;
};

void clip_and_step(const std::vector<ParamPtr>& params, double clip, double lr) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double gv : p->grad) sq += gv * gv;
  double norm = std::sqrt(sq);
  double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  for (const auto& p : params)
    for (size_t j = 0; j < p->value.size(); ++j) p->value[j] -= lr * scale * p->grad[j];
}

std::string format_candidate(SearchGroup group, const ArchChoice& c) {
  if (group == SearchGroup::kFD)
    return "(" + std::to_string(c.primary) + "," + std::to_string(c.secondary) + ")";
  return std::to_string(c.primary);
}

}  // namespace

std::string search_group_name(SearchGroup group) {
  switch (group) {
    case SearchGroup::kFD: return "FD";
    case SearchGroup::kAH: return "AH";
    case SearchGroup::kCK: return "CK";
  }
  throw std::invalid_argument("search_group_name: unknown group");
}

ChoiceList fd_pairs(const std::vector<int64_t>& widths) {
  ChoiceList out;
  for (int64_t a : widths)
    for (int64_t b : widths) out.push_back({a, b});
  return out;
}

ChoiceList fd_tied(const std::vector<int64_t>& widths) {
  ChoiceList out;
  for (int64_t a : widths) out.push_back({a, a});
  return out;
}

ChoiceList ah_choices(const std::vector<int64_t>& heads) {
  ChoiceList out;
  for (int64_t h : heads) out.push_back({h, 0});
  return out;
}

ChoiceList ck_choices(const std::vector<int64_t>& kernels) {
  ChoiceList out;
  for (int64_t k : kernels) out.push_back({k, 0});
  return out;
}

std::vector<int64_t> full_fd_scope() { return {512, 1024, 2048, 3072, 4096}; }
std::vector<int64_t> full_ah_scope() { return {2, 4, 8}; }
std::vector<int64_t> full_ck_scope() { return {3, 5, 7}; }
std::vector<int64_t> desk_fd_scope() { return {16, 32, 64}; }
std::vector<int64_t> desk_ah_scope() { return {2, 4}; }
std::vector<int64_t> desk_ck_scope() { return {3, 5, 7}; }

int64_t block_param_count(const BlockConfig& b, int64_t rel_max_dist) {
  int64_t d = b.model_dim;
  auto ff = [d](int64_t f) { return 2 * d + d * f + f + f * d + d; };
  int64_t att = 2 * d + 4 * d * d + 4 * d + b.num_heads * (2 * rel_max_dist + 1);
  int64_t conv = 2 * d + (d * 2 * d + 2 * d) + (d * b.conv_kernel + d) + 2 * d + (d * d + d);
  return ff(b.ff_dims[0]) + att + conv + ff(b.ff_dims[1]) + 2 * d;
}

WeightMode parse_weight_mode(const std::string& name) {
  if (name == "softmax") return WeightMode::kSoftmax;
  if (name == "gumbel") return WeightMode::kGumbel;
  throw std::invalid_argument("parse_weight_mode: want softmax or gumbel, got \"" + name + "\"");
}

std::string weight_mode_name(WeightMode mode) {
  return mode == WeightMode::kSoftmax ? "softmax" : "gumbel";
}

std::vector<double> softmax_weights(const std::vector<double>& alpha) {
  if (alpha.empty()) throw std::invalid_argument("softmax_weights: empty logit vector");
  double m = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (size_t i = 0; i < alpha.size(); ++i) {
    out[i] = std::exp(alpha[i] - m);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

std::vector<double> gumbel_weights(const std::vector<double>& alpha, double temperature, Rng& rng) {
  if (alpha.empty()) throw std::invalid_argument("gumbel_weights: empty logit vector");
  if (temperature <= 0.0)
    throw std::invalid_argument("gumbel_weights: temperature must be positive, got " + format_double(temperature));
  double lse = log_sum_exp(alpha);
  std::vector<double> z(alpha.size());
  for (size_t i = 0; i < alpha.size(); ++i) z[i] = (alpha[i] - lse + rng.gumbel()) / temperature;
  return softmax_weights(z);
}

std::vector<double> gumbel_weights(const std::vector<double>& alpha, double temperature, uint64_t seed) {
  Rng rng(seed);
  return gumbel_weights(alpha, temperature, rng);
}

double penalized_loss(double conformer_loss, const std::vector<std::vector<double>>& lambdas,
                      const std::vector<CandidateSet>& positions, double eta) {
  if (eta < 0.0) throw std::invalid_argument("penalized_loss: eta must be non-negative");
  if (lambdas.size() != positions.size())
    throw std::invalid_argument("penalized_loss: " + std::to_string(lambdas.size()) + " weight vectors for " +
                                std::to_string(positions.size()) + " candidate sets");
  if (eta == 0.0) return conformer_loss;
  double acc = 0.0;
  for (size_t l = 0; l < positions.size(); ++l) {
    const auto& lam = lambdas[l];
    const auto& costs = positions[l].param_costs;
    if (lam.size() != costs.size())
      throw std::invalid_argument("penalized_loss: weight/cost length mismatch at block " + std::to_string(l));
    for (size_t i = 0; i < lam.size(); ++i) acc += lam[i] * static_cast<double>(costs[i]);
  }
  return conformer_loss + eta * acc;
}

Tensor penalized_loss_node(Graph& g, Tensor conformer_loss, const std::vector<Tensor>& lambdas,
                           const std::vector<CandidateSet>& positions, double eta) {
  if (eta < 0.0) throw std::invalid_argument("penalized_loss: eta must be non-negative");
  if (lambdas.size() != positions.size())
    throw std::invalid_argument("penalized_loss: " + std::to_string(lambdas.size()) + " weight vectors for " +
                                std::to_string(positions.size()) + " candidate sets");
  if (eta == 0.0) return conformer_loss;
  Tensor acc;
  for (size_t l = 0; l < positions.size(); ++l) {
    const auto& costs = positions[l].param_costs;
    int64_t n = static_cast<int64_t>(costs.size());
    if (numel(g.shape(lambdas[l])) != n)
      throw std::invalid_argument("penalized_loss: weight/cost length mismatch at block " + std::to_string(l));
    std::vector<double> cv(costs.begin(), costs.end());
    Tensor dot = g.sum(g.mul(g.reshape(lambdas[l], {n}), g.constant(Array({n}, std::move(cv)))));
    acc = acc.valid() ? g.add(acc, dot) : dot;
  }
  return g.add(conformer_loss, g.scale_const(acc, eta));
}

ModelConfig apply_choices(const ModelConfig& base, const FixedChoices& fixed) {
  ModelConfig cfg = base;
  size_t blocks = cfg.encoder_blocks.size();
  auto apply = [&](const ChoiceList& list, SearchGroup group) {
    if (list.empty()) return;
    if (list.size() != blocks)
      throw std::invalid_argument("apply_choices: " + std::to_string(list.size()) + " " + search_group_name(group) +
                                  " choices for " + std::to_string(blocks) + " blocks");
    for (size_t l = 0; l < blocks; ++l) write_choice(cfg.encoder_blocks[l], group, list[l]);
  };
  apply(fixed.fd, SearchGroup::kFD);
  apply(fixed.ah, SearchGroup::kAH);
  apply(fixed.ck, SearchGroup::kCK);
  cfg.validate();
  return cfg;
}

ModelConfig apply_selection(const ModelConfig& base, const std::vector<CandidateSet>& positions,
                            const std::vector<int>& selection) {
  if (selection.size() != positions.size())
    throw std::invalid_argument("apply_selection: " + std::to_string(selection.size()) + " picks for " +
                                std::to_string(positions.size()) + " candidate sets");
  ModelConfig cfg = base;
  for (size_t l = 0; l < positions.size(); ++l) {
    const CandidateSet& pos = positions[l];
    int pick = selection[l];
    if (pick < 0 || static_cast<size_t>(pick) >= pos.candidates.size())
      throw std::invalid_argument("apply_selection: pick " + std::to_string(pick) + " out of range at block " +
                                  std::to_string(l));
    if (pos.layer_index < 0 || static_cast<size_t>(pos.layer_index) >= cfg.encoder_blocks.size())
      throw std::invalid_argument("apply_selection: layer index " + std::to_string(pos.layer_index) +
                                  " out of range");
    write_choice(cfg.encoder_blocks[static_cast<size_t>(pos.layer_index)], pos.group,
                 pos.candidates[static_cast<size_t>(pick)]);
  }
  cfg.validate();
  return cfg;
}

Supernet build_supernet(const ModelConfig& base, SearchGroup stage, const std::vector<ChoiceList>& scopes,
                        const FixedChoices& fixed, uint64_t seed) {
  const ChoiceList& own = stage == SearchGroup::kFD ? fixed.fd : stage == SearchGroup::kAH ? fixed.ah : fixed.ck;
  if (!own.empty())
    throw std::invalid_argument("build_supernet: stage " + search_group_name(stage) +
                                " cannot be pinned by fixed_choices");
  ModelConfig cfg = apply_choices(base, fixed);
  size_t blocks = cfg.encoder_blocks.size();
  if (scopes.size() != blocks)
    throw std::invalid_argument("build_supernet: " + std::to_string(scopes.size()) + " candidate scopes for " +
                                std::to_string(blocks) + " blocks");

  Supernet s;
  s.config = cfg;
  s.stage = stage;
  for (size_t l = 0; l < blocks; ++l) {
    const ChoiceList& scope = scopes[l];
    if (scope.empty()) throw std::invalid_argument("build_supernet: empty scope at block " + std::to_string(l));
    CandidateSet pos;
    pos.layer_index = static_cast<int>(l);
    pos.group = stage;
    pos.candidates = scope;
    for (size_t i = 0; i < scope.size(); ++i) {
      check_candidate(cfg, stage, scope[i]);
      for (size_t j = 0; j < i; ++j)
        if (scope[j] == scope[i])
          throw std::invalid_argument("build_supernet: duplicate candidate at block " + std::to_string(l));
      BlockConfig b = cfg.encoder_blocks[l];
      write_choice(b, stage, scope[i]);
      pos.param_costs.push_back(block_param_count(b, cfg.rel_max_dist));
    }
    s.positions.push_back(std::move(pos));
  }

  // Plain model parameters, minus the searched component's weights, which
  // come back per branch below (plain names when the scope is a singleton,
  // so a degenerate supernet is the plain model).
  ParameterSet plain = build_model(cfg, seed).params;
  auto searched = [&](const std::string& name, size_t l) {
    std::string p = block_prefix(static_cast<int>(l));
    switch (stage) {
      case SearchGroup::kFD:
        for (const char* mod : {".ff1.", ".ff2."})
          for (const char* w : {"w1", "b1", "w2", "b2"})
            if (name == p + mod + w) return true;
        return false;
      case SearchGroup::kAH:
        return name == p + ".att.relbias";
      case SearchGroup::kCK:
        return name == p + ".conv.dw.w";
    }
    return false;
  };
  for (const auto& item : plain.items()) {
    bool skip = false;
    for (size_t l = 0; l < blocks && !skip; ++l) skip = searched(item->name, l);
    if (!skip) s.params.add(item->name, item->shape, item->value);
  }

  int64_t d = cfg.model_dim;
  for (size_t l = 0; l < blocks; ++l) {
    const CandidateSet& pos = s.positions[l];
    std::string p = block_prefix(static_cast<int>(l));
    size_t n = pos.candidates.size();
    switch (stage) {
      case SearchGroup::kFD:
        for (size_t i = 0; i < n; ++i) {
          const ArchChoice& c = pos.candidates[i];
          std::string sfx = branch_suffix(n, static_cast<int>(i));
          for (int slot = 0; slot < 2; ++slot) {
            int64_t f = slot == 0 ? c.primary : c.secondary;
            std::string prefix = p + (slot == 0 ? ".ff1" : ".ff2") + sfx;
            s.params.add(prefix + ".w1", {d, f}, xavier_values(prefix + ".w1", d * f, d, f, seed));
            s.params.add(prefix + ".b1", {f}, std::vector<double>(static_cast<size_t>(f), 0.0));
            s.params.add(prefix + ".w2", {f, d}, xavier_values(prefix + ".w2", f * d, f, d, seed));
            s.params.add(prefix + ".b2", {d}, std::vector<double>(static_cast<size_t>(d), 0.0));
          }
        }
        break;
      case SearchGroup::kAH:
        for (size_t i = 0; i < n; ++i) {
          int64_t h = pos.candidates[i].primary;
          std::string name = p + ".att" + branch_suffix(n, static_cast<int>(i)) + ".relbias";
          s.params.add(name, {h, 2 * cfg.rel_max_dist + 1},
                       std::vector<double>(static_cast<size_t>(h * (2 * cfg.rel_max_dist + 1)), 0.0));
        }
        break;
      case SearchGroup::kCK: {
        int64_t k_max = 0;
        for (const auto& c : pos.candidates) k_max = std::max(k_max, c.primary);
        std::string name = p + ".conv.dw.w";
        s.params.add(name, {d, k_max}, xavier_values(name, d * k_max, k_max, k_max, seed));
        break;
      }
    }
    s.arch.logits.add("arch." + p, {static_cast<int64_t>(n)},
                      std::vector<double>(n, 0.0));
  }
  return s;
}

std::vector<Tensor> arch_weight_nodes(Graph& g, const Supernet& s, WeightMode mode, double temperature, Rng* rng) {
  if (mode == WeightMode::kGumbel) {
    if (temperature <= 0.0)
      throw std::invalid_argument("arch_weight_nodes: temperature must be positive, got " +
                                  format_double(temperature));
    if (!rng) throw std::invalid_argument("arch_weight_nodes: gumbel mode needs an rng");
  }
  std::vector<Tensor> out;
  out.reserve(s.positions.size());
  for (const auto& pos : s.positions) {
    Tensor alpha = g.param(s.arch.logits.get("arch." + block_prefix(pos.layer_index)));
    if (mode == WeightMode::kSoftmax) {
      out.push_back(g.softmax_rows(alpha));
    } else {
      int64_t n = static_cast<int64_t>(pos.candidates.size());
      std::vector<double> noise(static_cast<size_t>(n));
      for (auto& x : noise) x = rng->gumbel();
      Tensor z = g.add(g.log_softmax_rows(alpha), g.constant(Array({n}, std::move(noise))));
      out.push_back(g.softmax_rows(g.scale_const(z, 1.0 / temperature)));
    }
  }
  return out;
}

std::vector<std::vector<double>> current_weights(const Supernet& s) {
  std::vector<std::vector<double>> out;
  out.reserve(s.positions.size());
  for (const auto& pos : s.positions)
    out.push_back(softmax_weights(s.arch.logits.get("arch." + block_prefix(pos.layer_index))->value));
  return out;
}

Tensor supernet_encode(Graph& g, const Supernet& s, const Array& features, const std::vector<Tensor>& lambdas) {
  if (lambdas.size() != s.positions.size())
    throw std::invalid_argument("supernet_encode: " + std::to_string(lambdas.size()) + " weight nodes for " +
                                std::to_string(s.positions.size()) + " blocks");
  Tensor x = frontend_forward(g, s.params, s.config, features);
  for (size_t l = 0; l < s.positions.size(); ++l) {
    int64_t n = static_cast<int64_t>(s.positions[l].candidates.size());
    if (numel(g.shape(lambdas[l])) != n)
      throw std::invalid_argument("supernet_encode: weight node length mismatch at block " + std::to_string(l));
    Tensor row = g.reshape(lambdas[l], {1, n});
    Tensor mixed;
    for (int64_t i = 0; i < n; ++i) {
      Tensor y = g.scale(branch_forward(g, s, l, static_cast<int>(i), x), g.slice_cols(row, i, 1));
      mixed = mixed.valid() ? g.add(mixed, y) : y;
    }
    x = mixed;
  }
  return x;
}

UtteranceLoss supernet_loss(Graph& g, const Supernet& s, const std::vector<Tensor>& lambdas,
                            const Array& features, const std::vector<int>& targets, const LossWeights& weights) {
  weights.validate();
  check_targets(targets, s.config);
  Model view{s.config, s.params};
  UtteranceLoss out;
  Tensor enc = supernet_encode(g, s, features, lambdas);
  out.att = attention_ce_loss(g, view, enc, targets, weights.label_smoothing);
  out.ctc_feasible = ctc_admissible(g.shape(enc)[0], targets);
  if (out.ctc_feasible) {
    out.ctc = encoder_ctc_loss(g, view, enc, targets);
    out.total = g.add(g.scale_const(out.ctc, weights.ctc_weight), g.scale_const(out.att, 1.0 - weights.ctc_weight));
  } else {
    out.total = out.att;
  }
  return out;
}

std::vector<int> select_architecture(const std::vector<CandidateSet>& positions, const ParameterSet& logits) {
  std::vector<int> out;
  out.reserve(positions.size());
  for (const auto& pos : positions) {
    const auto& alpha = logits.get("arch." + block_prefix(pos.layer_index))->value;
    for (double a : alpha)
      if (!std::isfinite(a))
        throw std::invalid_argument("select_architecture: non-finite logit at block " +
                                    std::to_string(pos.layer_index));
    if (alpha.size() != pos.candidates.size())
      throw std::invalid_argument("select_architecture: logit/candidate length mismatch at block " +
                                  std::to_string(pos.layer_index));
    std::vector<double> lam = softmax_weights(alpha);
    size_t best = 0;
    for (size_t i = 1; i < lam.size(); ++i) {
      if (lam[i] > lam[best] || (lam[i] == lam[best] && pos.param_costs[i] < pos.param_costs[best])) best = i;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::string format_selection(const std::vector<CandidateSet>& positions, const std::vector<int>& selection) {
  if (selection.size() != positions.size())
    throw std::invalid_argument("format_selection: " + std::to_string(selection.size()) + " picks for " +
                                std::to_string(positions.size()) + " candidate sets");
  std::string out;
  for (size_t l = 0; l < positions.size(); ++l) {
    const CandidateSet& pos = positions[l];
    const ArchChoice& c = pos.candidates.at(static_cast<size_t>(selection[l]));
    if (l) out += ";";
    if (pos.group == SearchGroup::kFD) {
      std::set<int64_t> widths;
      for (const auto& cand : pos.candidates) {
        widths.insert(cand.primary);
        widths.insert(cand.secondary);
      }
      std::vector<int64_t> scope(widths.begin(), widths.end());
      auto index_of = [&scope](int64_t w) {
        return std::find(scope.begin(), scope.end(), w) - scope.begin();
      };
      out += "(" + std::to_string(index_of(c.primary)) + "," + std::to_string(index_of(c.secondary)) + ")";
    } else {
      out += std::to_string(c.primary);
    }
  }
  return out;
}

double TemperatureSchedule::at(int step, int total_steps) const {
  if (t_start <= 0.0 || t_end <= 0.0)
    throw std::invalid_argument("TemperatureSchedule: endpoints must be positive");
  if (total_steps <= 1 || step <= 0) return t_start;
  double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return t_start * std::pow(t_end / t_start, f);
}

void SearchRecipe::validate() const {
  if (steps < 1) throw std::invalid_argument("SearchRecipe: steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("SearchRecipe: batch_size must be >= 1");
  if (base_lr <= 0.0 || logit_lr <= 0.0) throw std::invalid_argument("SearchRecipe: learning rates must be positive");
  if (base_warmup < 1) throw std::invalid_argument("SearchRecipe: base_warmup must be >= 1");
  if (logit_delay < 0) throw std::invalid_argument("SearchRecipe: logit_delay must be >= 0");
  if (grad_clip < 0.0) throw std::invalid_argument("SearchRecipe: grad_clip must be >= 0");
  loss_weights().validate();
}

SearchReport pipelined_search(Supernet& s, const std::vector<Utterance>& train_split,
                              const std::vector<Utterance>& heldout_split, const SearchRecipe& recipe, double eta,
                              WeightMode mode, const TemperatureSchedule& temps, uint64_t seed) {
  recipe.validate();
  if (eta < 0.0) throw std::invalid_argument("pipelined_search: eta must be non-negative");
  if (train_split.empty() || heldout_split.empty())
    throw std::invalid_argument("pipelined_search: both splits must be non-empty");
  {
    std::set<std::string> train_ids;
    for (const auto& u : train_split) train_ids.insert(u.utt_id);
    for (const auto& u : heldout_split)
      if (train_ids.count(u.utt_id))
        throw std::invalid_argument("pipelined_search: splits overlap on " + u.utt_id);
  }
  temps.at(0, recipe.steps);  // endpoint validation

  s.arch.mode = mode;
  s.arch.eta = eta;
  LossWeights weights = recipe.loss_weights();
  Rng gumbel_rng(mix_seed(seed, "gumbel"));
  Cycler train_cycle(train_split, seed, "order:train");
  Cycler heldout_cycle(heldout_split, seed, "order:heldout");
  std::vector<ParamPtr> base_params = s.params.items();
  std::vector<ParamPtr> logit_params = s.arch.logits.items();

  SearchReport report;
  report.stage = s.stage;
  report.positions = s.positions;

  auto record = [&](int round, double temperature) {
    ReportStep st;
    st.step = round;
    st.temperature = temperature;
    st.lambdas = current_weights(s);
    st.penalty = penalized_loss(0.0, st.lambdas, s.positions, eta);
    report.trajectory.push_back(std::move(st));
  };
  record(0, temps.at(0, recipe.steps));

  double inv_batch = 1.0 / static_cast<double>(recipe.batch_size);
  for (int round = 1; round <= recipe.steps; ++round) {
    double temperature = temps.at(round - 1, recipe.steps);

    // Base-parameter step on the training split; logits enter as constants.
    {
      auto batch = train_cycle.next(recipe.batch_size);
      s.params.zero_grad();
      s.arch.logits.zero_grad();
      std::vector<std::vector<double>> lam_values(s.positions.size());
      for (size_t l = 0; l < s.positions.size(); ++l) {
        const auto& alpha = s.arch.logits.get("arch." + block_prefix(s.positions[l].layer_index))->value;
        lam_values[l] = mode == WeightMode::kSoftmax ? softmax_weights(alpha)
                                                     : gumbel_weights(alpha, temperature, gumbel_rng);
      }
      double mean_loss = 0.0;
      for (const Utterance* u : batch) {
        Graph g;
        std::vector<Tensor> lam;
        lam.reserve(lam_values.size());
        for (const auto& v : lam_values)
          lam.push_back(g.constant(Array({static_cast<int64_t>(v.size())}, v)));
        UtteranceLoss loss = supernet_loss(g, s, lam, u->features, u->targets, weights);
        g.backward(g.scale_const(loss.total, inv_batch));
        mean_loss += g.scalar(loss.total) * inv_batch;
      }
      if (!std::isfinite(mean_loss))
        throw std::runtime_error("pipelined_search: diverged (non-finite loss) at round " + std::to_string(round));
      clip_and_step(base_params, recipe.grad_clip, learning_rate(recipe.base_lr, recipe.base_warmup, round));
    }

    // Logit step on the held-out split; base parameters stay frozen.
    if (round > recipe.logit_delay) {
      auto batch = heldout_cycle.next(recipe.batch_size);
      s.params.zero_grad();
      s.arch.logits.zero_grad();
      double mean_loss = 0.0;
      for (const Utterance* u : batch) {
        Graph g;
        std::vector<Tensor> lam = arch_weight_nodes(g, s, mode, temperature, &gumbel_rng);
        UtteranceLoss loss = supernet_loss(g, s, lam, u->features, u->targets, weights);
        g.backward(g.scale_const(loss.total, inv_batch));
        mean_loss += g.scalar(loss.total) * inv_batch;
      }
      if (eta > 0.0) {
        // Expected-size penalty over the softmax distribution, once per batch.
        Graph g;
        std::vector<Tensor> lam = arch_weight_nodes(g, s, WeightMode::kSoftmax, temperature, nullptr);
        g.backward(penalized_loss_node(g, g.constant(Array({1}, {0.0})), lam, s.positions, eta));
      }
      if (!std::isfinite(mean_loss))
        throw std::runtime_error("pipelined_search: diverged (non-finite loss) at round " + std::to_string(round));
      clip_and_step(logit_params, recipe.grad_clip, recipe.logit_lr);
    }

    record(round, temperature);
  }

  report.selection = select_architecture(s.positions, s.arch.logits);
  report.config = apply_selection(s.config, s.positions, report.selection);
  report.param_count = count_params(report.config);
  return report;
}

ProgressiveResult progressive_search(const ModelConfig& base, const std::vector<ChoiceList>& fd_scopes,
                                     const std::vector<ChoiceList>& ah_scopes,
                                     const std::vector<ChoiceList>& ck_scopes,
                                     const std::vector<Utterance>& train_split,
                                     const std::vector<Utterance>& heldout_split, const SearchSettings& settings) {
  ProgressiveResult out;
  ModelConfig cfg = base;
  const std::pair<SearchGroup, const std::vector<ChoiceList>*> stages[] = {
      {SearchGroup::kFD, &fd_scopes}, {SearchGroup::kAH, &ah_scopes}, {SearchGroup::kCK, &ck_scopes}};
  for (const auto& [stage, scopes] : stages) {
    std::string tag = search_group_name(stage);
    Supernet s = build_supernet(cfg, stage, *scopes, FixedChoices{}, mix_seed(settings.seed, "supernet:" + tag));
    SearchReport report = pipelined_search(s, train_split, heldout_split, settings.recipe, settings.eta,
                                           settings.mode, settings.temps, mix_seed(settings.seed, "search:" + tag));
    cfg = report.config;
    out.stages.push_back(std::move(report));
  }
  out.config = cfg;
  out.param_count = count_params(cfg);
  return out;
}

std::string format_search_report(const SearchReport& report) {
  std::ostringstream os;
  os << "stage " << search_group_name(report.stage) << "\n";
  for (const auto& pos : report.positions) {
    os << "block " << pos.layer_index << " candidates";
    for (const auto& c : pos.candidates) os << " " << format_candidate(pos.group, c);
    os << " costs";
    for (int64_t p : pos.param_costs) os << " " << p;
    os << "\n";
  }
  for (const auto& st : report.trajectory) {
    os << "step " << st.step << " temperature " << format_double(st.temperature) << " penalty "
       << format_double(st.penalty) << "\n";
    for (size_t l = 0; l < st.lambdas.size(); ++l) {
      os << "lambda " << report.positions[l].layer_index;
      for (double w : st.lambdas[l]) os << " " << format_double(w);
      os << "\n";
    }
  }
  os << "selection " << format_selection(report.positions, report.selection) << "\n";
  os << "params " << report.param_count << "\n";
  return os.str();
}

void save_search_report(const std::string& path, const SearchReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_search_report: cannot open " + path);
  out << format_search_report(report);
  if (!out) throw std::runtime_error("save_search_report: write failed for " + path);
}

}  // namespace asrlab
