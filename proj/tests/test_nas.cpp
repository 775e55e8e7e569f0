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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "asrlab/nas.hpp"
#include "asrlab/train.hpp"
#include "doctest.h"

using namespace asrlab;

namespace {

Array random_features(int64_t t, int64_t f, uint64_t seed) {
  Array a = Array::zeros({t, f});
  Rng rng(seed);
  for (auto& v : a.v) v = rng.gaussian();
  return a;
}

// Two training speakers against strong per-speaker channel variation: wide
// feedforward branches memorize the pair of training channels and lose on the
// held-out speakers, so architecture quality is separable from seed noise.
CorpusSpec search_spec() {
  CorpusSpec spec;
  spec.train_speakers = 2;
  spec.dev_speakers = 2;
  spec.eval_speakers = 2;
  spec.utts_per_speaker = 12;
  spec.feature_dim = 8;
  spec.word_list_size = 24;
  spec.max_words = 1;
  spec.noise_level = 0.05;
  spec.channel_range = 0.5;
  spec.drift_range = 0.1;
  return spec;
}

const Corpus& search_corpus() {
  static Corpus corpus = synth_corpus(search_spec(), 42);
  return corpus;
}

ModelConfig search_base() { return ModelConfig::toy(2, 8, 32, 2, 1, 1); }

std::vector<int64_t> search_widths() { return {4, 512}; }

SearchRecipe search_recipe() {
  SearchRecipe r;
  r.steps = 300;
  r.batch_size = 8;
  r.base_lr = 0.2;
  r.base_warmup = 30;
  r.logit_lr = 0.3;
  r.logit_delay = 100;
  r.grad_clip = 5.0;
  r.ctc_weight = 0.3;
  r.label_smoothing = 0.0;
  return r;
}

constexpr double kSearchEta = 2e-5;

TrainRecipe oracle_recipe() {
  TrainRecipe r;
  r.ctc_weight = 0.3;
  r.label_smoothing = 0.0;
  r.peak_lr = 0.1;
  r.warmup_steps = 30;
  r.batch_size = 8;
  r.epochs = 120;
  return r;
}

struct OracleEntry {
  std::vector<int> selection;  // per-block candidate index into the tied scope
  double mean_dev_loss = 0.0;
};

// Retrains every architecture in the 2-block tied scope from scratch with
// three training seeds and ranks by mean held-out loss. Fully deterministic.
const std::vector<OracleEntry>& exhaustive_oracle() {
  static std::vector<OracleEntry> ranked = [] {
    const Corpus& corpus = search_corpus();
    std::vector<int64_t> widths = search_widths();
    std::vector<OracleEntry> entries;
    for (int c0 = 0; c0 < 2; ++c0)
      for (int c1 = 0; c1 < 2; ++c1) {
        ModelConfig cfg = search_base();
        cfg.encoder_blocks[0].ff_dims = {widths[c0], widths[c0]};
        cfg.encoder_blocks[1].ff_dims = {widths[c1], widths[c1]};
        double sum = 0.0;
        for (uint64_t tseed = 1; tseed <= 3; ++tseed) {
          TrainResult tr = train(cfg, build_model(cfg, 900 + tseed).params, corpus, oracle_recipe(), tseed);
          sum += dataset_loss(cfg, tr.params, corpus.dev, {0.3, 0.0});
        }
        entries.push_back({{c0, c1}, sum / 3.0});
      }
    std::sort(entries.begin(), entries.end(),
              [](const OracleEntry& a, const OracleEntry& b) { return a.mean_dev_loss < b.mean_dev_loss; });
    return entries;
  }();
  return ranked;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Builds the discrete model for `selection` and overwrites its values with
// the matching supernet parameters: shared ones by name, branch-owned ones by
// the branch naming rule, nested depthwise kernels by their center slice.
ParameterSet discrete_params_from(const Supernet& s, const ModelConfig& discrete_cfg,
                                  const std::vector<int>& selection) {
  std::map<std::string, ParamPtr> pool;
  for (const auto& p : s.params.items()) pool[p->name] = p;

  ParameterSet out = build_model(discrete_cfg, 1).params;
  for (const auto& p : out.items()) {
    auto direct = pool.find(p->name);
    if (direct != pool.end()) {
      const ParamPtr& src = direct->second;
      if (src->shape == p->shape) {
        p->value = src->value;
        continue;
      }
      // Same name, wider store: the nested depthwise kernel case.
      REQUIRE(p->name.find(".conv.dw.w") != std::string::npos);
      int64_t rows = p->shape[0];
      int64_t k = p->shape[1];
      int64_t kmax = src->shape[1];
      int64_t off = (kmax - k) / 2;
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < k; ++c) p->value[r * k + c] = src->value[r * kmax + c + off];
      continue;
    }
    // Branch-owned parameter: insert ".b{c}" after the block's group prefix.
    size_t second_dot = p->name.find('.', p->name.find('.') + 1);
    REQUIRE(second_dot != std::string::npos);
    int layer = std::stoi(p->name.substr(3, p->name.find('.') - 3));
    std::string branch_name = p->name.substr(0, second_dot) + ".b" + std::to_string(selection[layer]) +
                              p->name.substr(second_dot);
    auto branch = pool.find(branch_name);
    REQUIRE(branch != pool.end());
    REQUIRE(branch->second->shape == p->shape);
    p->value = branch->second->value;
  }
  return out;
}

std::vector<Tensor> one_hot_lambdas(Graph& g, const std::vector<CandidateSet>& positions,
                                    const std::vector<int>& selection) {
  std::vector<Tensor> lams;
  for (size_t l = 0; l < positions.size(); ++l) {
    std::vector<double> v(positions[l].candidates.size(), 0.0);
    v[static_cast<size_t>(selection[l])] = 1.0;
    lams.push_back(g.constant(Array({static_cast<int64_t>(v.size())}, v)));
  }
  return lams;
}

}  // namespace

TEST_CASE("softmax weights match hand values and a high-precision recomputation") {
  auto w = softmax_weights({0.0, 0.0});
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-12));

  auto v = softmax_weights({std::log(2.0), 0.0});
  CHECK(v[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Rng rng(77);
  std::vector<double> alpha(5);
  for (auto& a : alpha) a = rng.uniform(-4.0, 4.0);
  auto got = softmax_weights(alpha);
  long double norm = 0.0L;
  std::vector<long double> expect(alpha.size());
  for (size_t i = 0; i < alpha.size(); ++i) {
    expect[i] = expl(static_cast<long double>(alpha[i]));
    norm += expect[i];
  }
  double sum = 0.0;
  for (size_t i = 0; i < alpha.size(); ++i) {
    CHECK(std::abs(got[i] - static_cast<double>(expect[i] / norm)) < 1e-14);
    sum += got[i];
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("softmax weights are shift invariant, order preserving, and reject empty input") {
  std::vector<double> alpha = {1.2, -0.3, 0.4, 0.4};
  auto base = softmax_weights(alpha);
  for (auto& a : alpha) a += 1000.0;
  auto shifted = softmax_weights(alpha);
  for (size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - shifted[i]) < 1e-12);
  CHECK(base[0] > base[2]);
  CHECK(base[2] > base[1]);
  CHECK(base[2] == doctest::Approx(base[3]).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_weights({}), std::invalid_argument);
}

TEST_CASE("gumbel weights reproduce their formula draw for draw") {
  std::vector<double> alpha = {0.9, 0.1, -0.4};
  for (uint64_t seed : {3u, 11u}) {
    for (double t : {0.7, 2.5}) {
      auto got = gumbel_weights(alpha, t, seed);

      Rng rng(seed);
      std::vector<double> noisy(alpha.size());
      double lse = log_sum_exp(alpha);
      for (size_t i = 0; i < alpha.size(); ++i) noisy[i] = (alpha[i] - lse + rng.gumbel()) / t;
      auto expect = softmax_weights(noisy);
      for (size_t i = 0; i < alpha.size(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);

      double sum = 0.0;
      for (double x : got) sum += x;
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("gumbel weights sharpen to one-hot and flatten to uniform at the temperature limits") {
  std::vector<double> alpha = {0.9, 0.1, -0.4};
  double lse = log_sum_exp(alpha);
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<double> perturbed(alpha.size());
    for (size_t i = 0; i < alpha.size(); ++i) perturbed[i] = alpha[i] - lse + rng.gumbel();
    size_t arg = static_cast<size_t>(std::max_element(perturbed.begin(), perturbed.end()) - perturbed.begin());

    auto sharp = gumbel_weights(alpha, 0.01, seed);
    for (size_t i = 0; i < sharp.size(); ++i)
      CHECK(std::abs(sharp[i] - (i == arg ? 1.0 : 0.0)) < 1e-3);

    auto flat = gumbel_weights(alpha, 1e6, seed);
    for (double x : flat) CHECK(std::abs(x - 1.0 / 3.0) < 1e-3);
  }
}

TEST_CASE("gumbel weights require a positive temperature") {
  CHECK_THROWS_AS(gumbel_weights({0.1, 0.2}, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(gumbel_weights({0.1, 0.2}, -1.0, 1), std::invalid_argument);
}

TEST_CASE("gumbel argmax draws follow the softmax distribution") {
  struct Case {
    std::vector<double> probs;
    uint64_t seed;
  };
  for (const Case& c : {Case{{0.5, 0.3, 0.2}, 101}, Case{{0.7, 0.1, 0.1, 0.1}, 202}}) {
    std::vector<double> alpha(c.probs.size());
    for (size_t i = 0; i < c.probs.size(); ++i) alpha[i] = std::log(c.probs[i]);
    const int draws = 20000;
    std::vector<int> counts(c.probs.size(), 0);
    Rng rng(c.seed);
    for (int d = 0; d < draws; ++d) {
      double best = -1e300;
      size_t arg = 0;
      for (size_t i = 0; i < alpha.size(); ++i) {
        double x = alpha[i] + rng.gumbel();
        if (x > best) {
          best = x;
          arg = i;
        }
      }
      ++counts[arg];
    }
    for (size_t i = 0; i < c.probs.size(); ++i) {
      double freq = static_cast<double>(counts[i]) / draws;
      double sigma = std::sqrt(c.probs[i] * (1.0 - c.probs[i]) / draws);
      CHECK(std::abs(freq - c.probs[i]) <= 3.0 * sigma);
    }
  }
}

TEST_CASE("penalized loss matches the hand-computed scalar oracle") {
  std::vector<CandidateSet> positions(1);
  positions[0].candidates = {{1, 1}, {2, 2}};
  positions[0].param_costs = {100, 10};
  std::vector<std::vector<double>> lambdas = {{0.25, 0.75}};

  CHECK(penalized_loss(1.5, lambdas, positions, 0.0) == 1.5);
  CHECK(penalized_loss(1.5, lambdas, positions, 0.03) ==
        doctest::Approx(1.5 + 0.03 * (0.25 * 100 + 0.75 * 10)).epsilon(1e-12));
  CHECK(penalized_loss(1.5, lambdas, positions, 0.03) == doctest::Approx(2.475).epsilon(1e-12));

  CHECK_THROWS_AS(penalized_loss(1.5, lambdas, positions, -0.1), std::invalid_argument);
  std::vector<std::vector<double>> misaligned = {{0.25, 0.25, 0.5}};
  CHECK_THROWS_AS(penalized_loss(1.5, misaligned, positions, 0.03), std::invalid_argument);
}

TEST_CASE("penalized loss node agrees with the scalar form and its logit gradient with finite differences") {
  std::vector<CandidateSet> positions(2);
  positions[0].candidates = {{4, 4}, {8, 8}, {16, 16}};
  positions[0].param_costs = {400, 800, 1600};
  positions[1].candidates = {{4, 4}, {8, 8}, {16, 16}};
  positions[1].param_costs = {350, 700, 1400};
  const double eta = 0.003;

  ParameterSet ps;
  ParamPtr a0 = ps.add("alpha0", {3}, {0.3, -0.2, 0.8});
  ParamPtr a1 = ps.add("alpha1", {3}, {-1.0, 0.4, 0.1});

  auto build = [&](Graph& g) {
    std::vector<Tensor> lams = {g.softmax_rows(g.param(a0)), g.softmax_rows(g.param(a1))};
    return penalized_loss_node(g, g.constant(Array({1}, {1.5})), lams, positions, eta);
  };

  Graph g;
  Tensor node = build(g);
  std::vector<std::vector<double>> lambdas = {softmax_weights(a0->value), softmax_weights(a1->value)};
  CHECK(std::abs(g.scalar(node) - penalized_loss(1.5, lambdas, positions, eta)) < 1e-12);

  CHECK(grad_check(build, {a0, a1}) < 1e-6);

  Graph g2;
  std::vector<Tensor> lams2 = {g2.softmax_rows(g2.param(a0)), g2.softmax_rows(g2.param(a1))};
  Tensor same = penalized_loss_node(g2, g2.constant(Array({1}, {2.0})), lams2, positions, 0.0);
  CHECK(g2.scalar(same) == 2.0);
}

TEST_CASE("block parameter cost equals the model count difference it induces") {
  ModelConfig cfg = search_base();
  BlockConfig extra;
  extra.model_dim = cfg.model_dim;
  extra.ff_dims = {24, 40};
  extra.num_heads = 2;
  extra.head_dim = 4;
  extra.conv_kernel = 3;

  ModelConfig bigger = cfg;
  bigger.encoder_blocks.push_back(extra);
  CHECK(count_params(bigger) - count_params(cfg) == block_param_count(extra, cfg.rel_max_dist));

  // Pairwise differences across one knob at a time.
  for (int64_t width : {1, 4, 512}) {
    ModelConfig alt = cfg;
    alt.encoder_blocks[0].ff_dims = {width, width};
    CHECK(count_params(alt) - count_params(cfg) ==
          block_param_count(alt.encoder_blocks[0], cfg.rel_max_dist) -
              block_param_count(cfg.encoder_blocks[0], cfg.rel_max_dist));
  }
  for (int64_t heads : {1, 4, 8}) {
    ModelConfig alt = cfg;
    alt.encoder_blocks[1].num_heads = heads;
    alt.encoder_blocks[1].head_dim = cfg.model_dim / heads;
    CHECK(count_params(alt) - count_params(cfg) ==
          block_param_count(alt.encoder_blocks[1], cfg.rel_max_dist) -
              block_param_count(cfg.encoder_blocks[1], cfg.rel_max_dist));
  }
  for (int64_t kernel : {3, 5, 7}) {
    ModelConfig alt = cfg;
    alt.encoder_blocks[0].conv_kernel = kernel;
    CHECK(count_params(alt) - count_params(cfg) ==
          block_param_count(alt.encoder_blocks[0], cfg.rel_max_dist) -
              block_param_count(cfg.encoder_blocks[0], cfg.rel_max_dist));
  }
}

TEST_CASE("scope constructors enumerate candidates in declaration order") {
  auto pairs = fd_pairs({16, 32});
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0] == ArchChoice{16, 16});
  CHECK(pairs[1] == ArchChoice{16, 32});
  CHECK(pairs[2] == ArchChoice{32, 16});
  CHECK(pairs[3] == ArchChoice{32, 32});

  auto tied = fd_tied({16, 32});
  REQUIRE(tied.size() == 2);
  CHECK(tied[0] == ArchChoice{16, 16});
  CHECK(tied[1] == ArchChoice{32, 32});

  auto heads = ah_choices({2, 4, 8});
  REQUIRE(heads.size() == 3);
  CHECK(heads[1] == ArchChoice{4, 0});

  auto kernels = ck_choices({3, 5, 7});
  REQUIRE(kernels.size() == 3);
  CHECK(kernels[2] == ArchChoice{7, 0});

  CHECK(full_fd_scope() == std::vector<int64_t>{512, 1024, 2048, 3072, 4096});
  CHECK(full_ah_scope() == std::vector<int64_t>{2, 4, 8});
  CHECK(full_ck_scope() == std::vector<int64_t>{3, 5, 7});
  CHECK(fd_pairs(full_fd_scope()).size() == 25);
}

TEST_CASE("architecture selection takes the largest weight and breaks ties toward smaller cost") {
  CandidateSet pos;
  pos.candidates = {{4, 4}, {8, 8}, {16, 16}};
  pos.param_costs = {5, 3, 9};

  ParameterSet logits;
  logits.add("arch.enc0", {3}, {0.1, 0.8, 0.1});
  CHECK(select_architecture({pos}, logits) == std::vector<int>{1});

  ParameterSet shifted;
  shifted.add("arch.enc0", {3}, {100.1, 100.8, 100.1});
  CHECK(select_architecture({pos}, shifted) == std::vector<int>{1});

  CandidateSet two;
  two.candidates = {{4, 4}, {8, 8}};
  two.param_costs = {5, 3};
  ParameterSet tied;
  tied.add("arch.enc0", {2}, {0.0, 0.0});
  CHECK(select_architecture({two}, tied) == std::vector<int>{1});

  CandidateSet equal_cost;
  equal_cost.candidates = {{4, 4}, {8, 8}};
  equal_cost.param_costs = {3, 3};
  ParameterSet tied2;
  tied2.add("arch.enc0", {2}, {0.7, 0.7});
  CHECK(select_architecture({equal_cost}, tied2) == std::vector<int>{0});

  ParameterSet bad;
  bad.add("arch.enc0", {3}, {0.1, std::nan(""), 0.0});
  CHECK_THROWS_AS(select_architecture({pos}, bad), std::invalid_argument);
}

TEST_CASE("applying choices writes them into the config and validates shapes") {
  ModelConfig base = ModelConfig::toy(2, 16, 32, 2, 3, 1);

  FixedChoices fixed;
  fixed.fd = {{8, 24}, {48, 16}};
  fixed.ah = {{4, 0}, {1, 0}};
  fixed.ck = {{5, 0}, {1, 0}};
  ModelConfig cfg = apply_choices(base, fixed);
  CHECK(cfg.encoder_blocks[0].ff_dims == std::array<int64_t, 2>{8, 24});
  CHECK(cfg.encoder_blocks[1].ff_dims == std::array<int64_t, 2>{48, 16});
  CHECK(cfg.encoder_blocks[0].num_heads == 4);
  CHECK(cfg.encoder_blocks[0].head_dim == 4);
  CHECK(cfg.encoder_blocks[1].num_heads == 1);
  CHECK(cfg.encoder_blocks[1].head_dim == 16);
  CHECK(cfg.encoder_blocks[0].conv_kernel == 5);
  CHECK(cfg.encoder_blocks[1].conv_kernel == 1);

  FixedChoices empty;
  CHECK(model_config_to_json(apply_choices(base, empty)) == model_config_to_json(base));

  FixedChoices bad_heads;
  bad_heads.ah = {{3, 0}, {2, 0}};  // 3 does not divide 16
  CHECK_THROWS_AS(apply_choices(base, bad_heads), std::invalid_argument);

  FixedChoices wrong_arity;
  wrong_arity.fd = {{8, 8}};
  CHECK_THROWS_AS(apply_choices(base, wrong_arity), std::invalid_argument);
}

TEST_CASE("selection formatting reproduces the published per-block rows") {
  // Feedforward rows print index pairs into the sorted width scope.
  ChoiceList fd_scope = fd_pairs(full_fd_scope());
  std::vector<CandidateSet> fd_positions(12);
  std::vector<int> fd_selection;
  const int pairs[12][2] = {{1, 1}, {1, 3}, {0, 3}, {0, 2}, {0, 0}, {0, 0},
                            {0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 1}, {1, 0}};
  for (int l = 0; l < 12; ++l) {
    fd_positions[l].layer_index = l;
    fd_positions[l].group = SearchGroup::kFD;
    fd_positions[l].candidates = fd_scope;
    fd_positions[l].param_costs.assign(fd_scope.size(), 0);
    fd_selection.push_back(pairs[l][0] * 5 + pairs[l][1]);
  }
  CHECK(format_selection(fd_positions, fd_selection) ==
        "(1,1);(1,3);(0,3);(0,2);(0,0);(0,0);(0,0);(0,0);(0,0);(0,0);(0,1);(1,0)");

  // Head-count and kernel rows print the chosen values.
  ChoiceList ah_scope = ah_choices(full_ah_scope());
  std::vector<CandidateSet> ah_positions(12);
  const int64_t heads[12] = {8, 8, 4, 4, 8, 8, 8, 2, 2, 4, 8, 8};
  std::vector<int> ah_selection;
  for (int l = 0; l < 12; ++l) {
    ah_positions[l].layer_index = l;
    ah_positions[l].group = SearchGroup::kAH;
    ah_positions[l].candidates = ah_scope;
    ah_positions[l].param_costs.assign(ah_scope.size(), 0);
    ah_selection.push_back(heads[l] == 2 ? 0 : heads[l] == 4 ? 1 : 2);
  }
  CHECK(format_selection(ah_positions, ah_selection) == "8;8;4;4;8;8;8;2;2;4;8;8");

  ChoiceList ck_scope = ck_choices(full_ck_scope());
  std::vector<CandidateSet> ck_positions(12);
  const int64_t kernels[12] = {7, 7, 3, 7, 5, 5, 7, 7, 7, 7, 7, 7};
  std::vector<int> ck_selection;
  for (int l = 0; l < 12; ++l) {
    ck_positions[l].layer_index = l;
    ck_positions[l].group = SearchGroup::kCK;
    ck_positions[l].candidates = ck_scope;
    ck_positions[l].param_costs.assign(ck_scope.size(), 0);
    ck_selection.push_back(kernels[l] == 3 ? 0 : kernels[l] == 5 ? 1 : 2);
  }
  CHECK(format_selection(ck_positions, ck_selection) == "7;7;3;7;5;5;7;7;7;7;7;7");

  // Applying the feedforward row to the full-scale base lands on the
  // published size.
  ModelConfig full = ModelConfig::baseline();
  for (auto& b : full.encoder_blocks) b.conv_kernel = 7;
  full.decoder.num_blocks = 12;
  ModelConfig applied = apply_selection(full, fd_positions, fd_selection);
  CHECK(count_params(applied) == 36849518);
  CHECK(std::abs(static_cast<double>(count_params(applied)) - 37.6e6) <= 0.05 * 37.6e6);
}

TEST_CASE("a two-block tied width scope reaches exactly four distinct architectures") {
  ModelConfig base = ModelConfig::toy(2, 16, 32, 2, 3, 1);
  std::vector<ChoiceList> scopes(2, fd_tied({16, 32}));
  Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, 5);

  std::set<std::string> configs;
  std::set<std::pair<int64_t, int64_t>> shapes;
  for (int c0 = 0; c0 < 2; ++c0)
    for (int c1 = 0; c1 < 2; ++c1) {
      ModelConfig cfg = apply_selection(s.config, s.positions, {c0, c1});
      cfg.validate();
      configs.insert(model_config_to_json(cfg));
      shapes.insert({cfg.encoder_blocks[0].ff_dims[0], cfg.encoder_blocks[1].ff_dims[0]});
      CHECK(cfg.encoder_blocks[0].ff_dims[0] == (c0 == 0 ? 16 : 32));
      CHECK(cfg.encoder_blocks[0].ff_dims[1] == cfg.encoder_blocks[0].ff_dims[0]);
    }
  CHECK(configs.size() == 4);
  CHECK(shapes.size() == 4);
}

TEST_CASE("singleton scopes build a supernet bitwise identical to the plain model") {
  ModelConfig base = ModelConfig::toy(2, 8, 32, 2, 3, 1);
  Model plain = build_model(base, 17);
  Array features = random_features(16, base.feature_dim, 3);

  struct StageCase {
    SearchGroup stage;
    ChoiceList scope;
  };
  for (const StageCase& sc : {StageCase{SearchGroup::kFD, fd_tied({32})},
                              StageCase{SearchGroup::kAH, ah_choices({2})},
                              StageCase{SearchGroup::kCK, ck_choices({3})}}) {
    CAPTURE(search_group_name(sc.stage));
    Supernet s = build_supernet(base, sc.stage, {sc.scope, sc.scope}, {}, 17);

    REQUIRE(s.params.items().size() == plain.params.items().size());
    for (const auto& p : plain.params.items()) {
      ParamPtr q = s.params.find(p->name);
      REQUIRE(q != nullptr);
      REQUIRE(q->shape == p->shape);
      CHECK(max_abs_diff(q->value, p->value) == 0.0);
    }

    Graph g;
    Tensor plain_out = encode(g, plain, features);
    Tensor mixed_out = supernet_encode(g, s, features, one_hot_lambdas(g, s.positions, {0, 0}));
    CHECK(max_abs_diff(g.array(plain_out).v, g.array(mixed_out).v) == 0.0);
  }
}

TEST_CASE("one-hot mixture weights reproduce each discrete architecture") {
  ModelConfig base = ModelConfig::toy(2, 8, 32, 2, 3, 1);
  Array features = random_features(20, base.feature_dim, 9);

  struct StageCase {
    SearchGroup stage;
    ChoiceList scope;
  };
  for (const StageCase& sc : {StageCase{SearchGroup::kFD, fd_tied({4, 8})},
                              StageCase{SearchGroup::kAH, ah_choices({1, 2})},
                              StageCase{SearchGroup::kCK, ck_choices({1, 3})}}) {
    CAPTURE(search_group_name(sc.stage));
    Supernet s = build_supernet(base, sc.stage, {sc.scope, sc.scope}, {}, 23);
    for (int c0 = 0; c0 < 2; ++c0)
      for (int c1 = 0; c1 < 2; ++c1) {
        std::vector<int> sel = {c0, c1};
        ModelConfig cfg = apply_selection(s.config, s.positions, sel);
        Model discrete{cfg, discrete_params_from(s, cfg, sel)};

        Graph g;
        Tensor mixed = supernet_encode(g, s, features, one_hot_lambdas(g, s.positions, sel));
        Tensor exact = encode(g, discrete, features);
        CHECK(max_abs_diff(g.array(mixed).v, g.array(exact).v) < 1e-10);
      }
  }
}

TEST_CASE("supernet construction rejects malformed scopes") {
  ModelConfig base = ModelConfig::toy(2, 16, 32, 2, 3, 1);
  CHECK_THROWS_AS(build_supernet(base, SearchGroup::kFD, {fd_tied({16, 32})}, {}, 1),
                  std::invalid_argument);  // one scope for two blocks
  std::vector<ChoiceList> dup(2, ChoiceList{{16, 16}, {16, 16}});
  CHECK_THROWS_AS(build_supernet(base, SearchGroup::kFD, dup, {}, 1), std::invalid_argument);
  std::vector<ChoiceList> bad_heads(2, ah_choices({3}));
  CHECK_THROWS_AS(build_supernet(base, SearchGroup::kAH, bad_heads, {}, 1), std::invalid_argument);
  std::vector<ChoiceList> even_kernel(2, ck_choices({4}));
  CHECK_THROWS_AS(build_supernet(base, SearchGroup::kCK, even_kernel, {}, 1), std::invalid_argument);

  FixedChoices pins_self;
  pins_self.fd = {{16, 16}, {16, 16}};
  CHECK_THROWS_AS(build_supernet(base, SearchGroup::kFD, {fd_tied({16, 32}), fd_tied({16, 32})}, pins_self, 1),
                  std::invalid_argument);
}

TEST_CASE("temperature schedule interpolates exponentially between its endpoints") {
  TemperatureSchedule sched{1.0, 0.1};
  CHECK(sched.at(0, 100) == 1.0);
  CHECK(sched.at(99, 100) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(sched.at(200, 100) == doctest::Approx(0.1).epsilon(1e-12));
  double prev = sched.at(0, 100);
  for (int s = 1; s < 100; ++s) {
    double t = sched.at(s, 100);
    CHECK(t < prev);
    prev = t;
  }
  // Halfway in log space.
  CHECK(TemperatureSchedule{1.0, 0.01}.at(50, 101) == doctest::Approx(0.1).epsilon(1e-9));

  CHECK_THROWS_AS((TemperatureSchedule{0.0, 0.1}.at(0, 10)), std::invalid_argument);
  CHECK_THROWS_AS((TemperatureSchedule{1.0, -0.1}.at(0, 10)), std::invalid_argument);
}

TEST_CASE("search recipe validation rejects out-of-range settings") {
  SearchRecipe ok = search_recipe();
  ok.validate();

  SearchRecipe r = ok;
  r.steps = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.batch_size = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.base_lr = 0.0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.logit_lr = -0.1;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.base_warmup = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.logit_delay = -1;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.grad_clip = -1.0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r = ok;
  r.ctc_weight = 1.5;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("pipelined search rejects overlapping or empty splits") {
  ModelConfig base = search_base();
  std::vector<ChoiceList> scopes(2, fd_tied({4, 8}));
  const Corpus& corpus = search_corpus();
  SearchRecipe quick;
  quick.steps = 2;
  quick.batch_size = 2;

  Supernet s1 = build_supernet(base, SearchGroup::kFD, scopes, {}, 1);
  CHECK_THROWS_WITH_AS(
      pipelined_search(s1, corpus.train, corpus.train, quick, 0.0, WeightMode::kSoftmax, TemperatureSchedule{}, 1),
      doctest::Contains("overlap"), std::invalid_argument);

  Supernet s2 = build_supernet(base, SearchGroup::kFD, scopes, {}, 1);
  CHECK_THROWS_AS(
      pipelined_search(s2, {}, corpus.dev, quick, 0.0, WeightMode::kSoftmax, TemperatureSchedule{}, 1),
      std::invalid_argument);
  Supernet s3 = build_supernet(base, SearchGroup::kFD, scopes, {}, 1);
  CHECK_THROWS_AS(
      pipelined_search(s3, corpus.train, corpus.train, quick, -0.5, WeightMode::kSoftmax, TemperatureSchedule{}, 1),
      std::invalid_argument);
}

TEST_CASE("pipelined search over a singleton scope is the degenerate mixture") {
  ModelConfig base = search_base();
  std::vector<ChoiceList> scopes(2, fd_tied({32}));
  const Corpus& corpus = search_corpus();
  SearchRecipe quick;
  quick.steps = 5;
  quick.batch_size = 4;

  Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, 11);
  SearchReport rep =
      pipelined_search(s, corpus.train, corpus.dev, quick, 0.0, WeightMode::kGumbel, TemperatureSchedule{}, 11);

  CHECK(rep.selection == std::vector<int>{0, 0});
  CHECK(model_config_to_json(rep.config) == model_config_to_json(base));
  CHECK(rep.param_count == count_params(base));
  REQUIRE(rep.trajectory.size() == 6);  // initial state plus one entry per round
  for (const ReportStep& st : rep.trajectory)
    for (const auto& lam : st.lambdas) {
      REQUIRE(lam.size() == 1);
      CHECK(lam[0] == 1.0);
    }
  CHECK(rep.trajectory.front().temperature == 1.0);
  CHECK(format_selection(rep.positions, rep.selection) == "(0,0);(0,0)");
}

TEST_CASE("pipelined search is reproducible for a fixed seed") {
  ModelConfig base = search_base();
  const Corpus& corpus = search_corpus();
  SearchRecipe quick;
  quick.steps = 4;
  quick.batch_size = 4;

  std::string first, second;
  for (std::string* out : {&first, &second}) {
    std::vector<ChoiceList> scopes(2, fd_tied({4, 8}));
    Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, 19);
    SearchReport rep =
        pipelined_search(s, corpus.train, corpus.dev, quick, 1e-5, WeightMode::kGumbel, TemperatureSchedule{}, 19);
    *out = format_search_report(rep);
  }
  CHECK(first == second);
  CHECK(first.find("stage") != std::string::npos);
  CHECK(first.find("selection") != std::string::npos);
  CHECK(first.find("params") != std::string::npos);

  std::string path = "nas_report_roundtrip.txt";
  {
    std::vector<ChoiceList> scopes(2, fd_tied({4, 8}));
    Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, 19);
    SearchReport rep =
        pipelined_search(s, corpus.train, corpus.dev, quick, 1e-5, WeightMode::kGumbel, TemperatureSchedule{}, 19);
    save_search_report(path, rep);
  }
  FILE* f = std::fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string loaded;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) loaded.append(buf, n);
  std::fclose(f);
  std::remove(path.c_str());
  CHECK(loaded == first);
}

TEST_CASE("an overwhelming size penalty drives the search to the smallest candidates") {
  ModelConfig base = search_base();
  const Corpus& corpus = search_corpus();
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    std::vector<ChoiceList> scopes(2, fd_tied(search_widths()));
    Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, mix_seed(seed, "sup"));
    SearchReport rep = pipelined_search(s, corpus.train, corpus.dev, search_recipe(), 1000.0, WeightMode::kSoftmax,
                                        TemperatureSchedule{}, seed);
    CHECK(rep.selection == std::vector<int>{0, 0});
    CHECK(rep.config.encoder_blocks[0].ff_dims[0] == 4);
    CHECK(rep.config.encoder_blocks[1].ff_dims[0] == 4);
  }
}

TEST_CASE("both weighting modes recover the architecture that retrains best") {
  const std::vector<OracleEntry>& oracle = exhaustive_oracle();
  REQUIRE(oracle.size() == 4);
  const std::vector<int>& best = oracle.front().selection;

  ModelConfig base = search_base();
  const Corpus& corpus = search_corpus();
  for (WeightMode mode : {WeightMode::kSoftmax, WeightMode::kGumbel}) {
    CAPTURE(weight_mode_name(mode));
    int hits = 0;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
      std::vector<ChoiceList> scopes(2, fd_tied(search_widths()));
      Supernet s = build_supernet(base, SearchGroup::kFD, scopes, {}, mix_seed(seed, "sup"));
      SearchReport rep = pipelined_search(s, corpus.train, corpus.dev, search_recipe(), kSearchEta, mode,
                                          TemperatureSchedule{}, seed);
      if (rep.selection == best) ++hits;
    }
    CHECK(hits >= 7);
  }
}

TEST_CASE("progressive search lands in the exhaustive top two") {
  const std::vector<OracleEntry>& oracle = exhaustive_oracle();
  std::set<std::vector<int>> top2 = {oracle[0].selection, oracle[1].selection};

  ModelConfig base = search_base();
  const Corpus& corpus = search_corpus();
  std::vector<int64_t> widths = search_widths();

  int hits = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    SearchSettings settings;
    settings.recipe = search_recipe();
    settings.eta = kSearchEta;
    settings.mode = WeightMode::kGumbel;
    settings.seed = seed;
    std::vector<ChoiceList> fd(2, fd_tied(widths));
    std::vector<ChoiceList> ah(2, ah_choices({2}));
    std::vector<ChoiceList> ck(2, ck_choices({1}));
    ProgressiveResult result = progressive_search(base, fd, ah, ck, corpus.train, corpus.dev, settings);

    REQUIRE(result.stages.size() == 3);
    std::vector<int> sel;
    for (int l = 0; l < 2; ++l)
      sel.push_back(result.config.encoder_blocks[l].ff_dims[0] == widths[0] ? 0 : 1);
    if (top2.count(sel)) ++hits;
    CHECK(result.param_count == count_params(result.config));

    // Singleton follow-up stages must keep the base values they were given.
    CHECK(result.config.encoder_blocks[0].num_heads == 2);
    CHECK(result.config.encoder_blocks[0].conv_kernel == 1);
  }
  CHECK(hits >= 7);
}

TEST_CASE("progressive search with all scopes singleton returns the base config unchanged") {
  ModelConfig base = search_base();
  const Corpus& corpus = search_corpus();

  SearchSettings settings;
  settings.recipe.steps = 3;
  settings.recipe.batch_size = 2;
  settings.seed = 4;
  std::vector<ChoiceList> fd(2, fd_tied({32}));
  std::vector<ChoiceList> ah(2, ah_choices({2}));
  std::vector<ChoiceList> ck(2, ck_choices({1}));
  ProgressiveResult result = progressive_search(base, fd, ah, ck, corpus.train, corpus.dev, settings);
  CHECK(model_config_to_json(result.config) == model_config_to_json(base));
  CHECK(result.param_count == count_params(base));
}
