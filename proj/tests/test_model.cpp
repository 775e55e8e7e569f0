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
#include <doctest.h>

#include <cmath>

#include "asrlab/model.hpp"

using namespace asrlab;

namespace {

Array random_features(int64_t t, int64_t f, uint64_t seed) {
  Array a = Array::zeros({t, f});
  Rng rng(seed);
  for (auto& v : a.v) v = rng.gaussian();
  return a;
}

ModelConfig manual_deep_decoder() {  // decoder depth doubled, small conv kernel
  ModelConfig c = ModelConfig::baseline();
  for (auto& b : c.encoder_blocks) b.conv_kernel = 7;
  c.decoder.num_blocks = 12;
  return c;
}

ModelConfig searched_config() {  // per-block macaron dims from the 5-point scope
  const int64_t scope[5] = {512, 1024, 2048, 3072, 4096};
  const int pairs[12][2] = {{1, 1}, {1, 3}, {0, 3}, {0, 2}, {0, 0}, {0, 0},
                            {0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 1}, {1, 0}};
  ModelConfig c = ModelConfig::baseline();
  for (int i = 0; i < 12; ++i) {
    c.encoder_blocks[i].ff_dims = {scope[pairs[i][0]], scope[pairs[i][1]]};
    c.encoder_blocks[i].conv_kernel = 7;
  }
  c.decoder.num_blocks = 12;
  return c;
}

}  // namespace

TEST_CASE("parameter counts of the three reference systems land in their published bands") {
  auto within = [](int64_t count, double target_m) {
    return std::abs(static_cast<double>(count) - target_m * 1e6) <= 0.05 * target_m * 1e6;
  };
  CHECK(within(count_params(ModelConfig::baseline()), 42.3));
  CHECK(within(count_params(manual_deep_decoder()), 51.8));
  CHECK(within(count_params(searched_config()), 37.6));
}

TEST_CASE("count_params equals built size across random configs from the search scopes") {
  const int64_t fd_scope[5] = {512, 1024, 2048, 3072, 4096};
  const int64_t ah_scope[3] = {2, 4, 8};
  const int64_t ck_scope[3] = {3, 5, 7};
  Rng rng(20260819);
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig c;
    c.feature_dim = 40;
    c.model_dim = 64;
    c.vocab_size = 31;
    c.rel_max_dist = 64;
    int64_t n_enc = 1 + rng.uniform_int(3);
    for (int64_t i = 0; i < n_enc; ++i) {
      BlockConfig b;
      b.model_dim = 64;
      b.ff_dims = {fd_scope[rng.uniform_int(5)], fd_scope[rng.uniform_int(5)]};
      b.num_heads = ah_scope[rng.uniform_int(3)];
      b.head_dim = 64 / b.num_heads;
      b.conv_kernel = ck_scope[rng.uniform_int(3)];
      c.encoder_blocks.push_back(b);
    }
    c.decoder.num_blocks = 1 + rng.uniform_int(2);
    c.decoder.num_heads = ah_scope[rng.uniform_int(3)];
    c.decoder.head_dim = 64 / c.decoder.num_heads;
    c.decoder.ff_dim = fd_scope[rng.uniform_int(5)];
    CHECK(count_params(c) == build_model(c, trial).params.total_size());
  }
}

TEST_CASE("count_params equals built size at full reference scale") {
  ModelConfig c = ModelConfig::baseline();
  CHECK(count_params(c) == build_model(c, 1).params.total_size());
}

TEST_CASE("invalid configurations are rejected with the violated invariant") {
  ModelConfig c = ModelConfig::baseline();
  c.encoder_blocks[0].num_heads = 3;
  c.encoder_blocks[0].head_dim = 85;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  ModelConfig c2 = ModelConfig::baseline();
  c2.encoder_blocks[3].conv_kernel = 30;
  CHECK_THROWS_AS(count_params(c2), std::invalid_argument);

  ModelConfig c3 = ModelConfig::baseline();
  c3.encoder_blocks.clear();
  CHECK_THROWS_AS(c3.validate(), std::invalid_argument);

  ModelConfig c4 = ModelConfig::baseline();
  c4.decoder.num_blocks = 0;
  CHECK_THROWS_AS(build_model(c4, 0), std::invalid_argument);
}

TEST_CASE("frontend reduces time length by exactly a factor of four") {
  ModelConfig c = ModelConfig::toy();
  Model m = build_model(c, 3);
  for (int64_t t : {8, 9, 10, 11, 12, 15, 20, 21, 33, 40}) {
    Graph g(false);
    Tensor out = encode(g, m, random_features(t, c.feature_dim, 5));
    CHECK(g.shape(out) == Shape{t / 4, c.model_dim});
  }
  Graph g(false);
  CHECK_THROWS_AS(encode(g, m, random_features(7, c.feature_dim, 5)), std::invalid_argument);
  CHECK_THROWS_AS(encode(g, m, random_features(20, c.feature_dim + 1, 5)), std::invalid_argument);
}

TEST_CASE("identical frames give identical interior encoder states") {
  ModelConfig c = ModelConfig::toy(2, 16, 32, 2, 3, 1);
  c.rel_max_dist = 4;
  Model m = build_model(c, 9);

  Array feats = Array::zeros({96, c.feature_dim});
  Rng rng(4);
  std::vector<double> frame(static_cast<size_t>(c.feature_dim));
  for (auto& v : frame) v = rng.gaussian();
  for (int64_t t = 0; t < 96; ++t)
    for (int64_t f = 0; f < c.feature_dim; ++f) feats.v[static_cast<size_t>(t * c.feature_dim + f)] = frame[f];

  SUBCASE("fresh model (zero position bias): interior rows bitwise equal") {
    Graph g(false);
    Tensor out = encode(g, m, feats);
    int64_t t_out = g.shape(out)[0];
    int64_t d = g.shape(out)[1];
    const auto& v = g.value(out);
    int64_t margin = 4;
    for (int64_t t = margin + 1; t < t_out - margin; ++t)
      for (int64_t j = 0; j < d; ++j)
        CHECK(v[t * d + j] == v[margin * d + j]);
  }

  SUBCASE("random position bias: interior rows agree up to edge leakage") {
    // With a clipped relative bias the softmax normalizer still feels the
    // sequence ends (clip buckets have position-dependent multiplicity), so
    // interior rows are equal only up to the attention mass on edge frames.
    // An absolute-position encoding would differ at O(1); bound the leak well
    // below that.
    for (size_t i = 0; i < c.encoder_blocks.size(); ++i) {
      auto rb = m.params.get("enc" + std::to_string(i) + ".att.relbias");
      Rng r2(100 + i);
      for (auto& x : rb->value) x = r2.gaussian() * 0.3;
    }
    Graph g(false);
    Tensor out = encode(g, m, feats);
    int64_t t_out = g.shape(out)[0];
    int64_t d = g.shape(out)[1];
    const auto& v = g.value(out);
    int64_t margin = c.rel_max_dist + 4;
    REQUIRE(t_out > 2 * margin + 2);
    for (int64_t t = margin + 1; t < t_out - margin; ++t)
      for (int64_t j = 0; j < d; ++j)
        CHECK(std::abs(v[t * d + j] - v[margin * d + j]) < 0.02);
  }
}

TEST_CASE("builds are reproducible by seed") {
  ModelConfig c = ModelConfig::toy();
  Model a = build_model(c, 7);
  Model b = build_model(c, 7);
  Model d = build_model(c, 8);
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < a.params.items().size(); ++i) {
    all_equal = all_equal && a.params.items()[i]->value == b.params.items()[i]->value;
    any_diff = any_diff || a.params.items()[i]->value != d.params.items()[i]->value;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("projection surgery touches exactly the output layers") {
  ModelConfig c = ModelConfig::toy();
  Model m = build_model(c, 11);
  Rng rng(50);
  for (const auto& p : m.params.items())
    for (auto& v : p->value) v += rng.gaussian() * 0.01;  // pretend-trained

  SUBCASE("same vocabulary: only the two projections (and their biases) change") {
    ParameterSet out = replace_projections(m.params, c.vocab_size, 77);
    REQUIRE(out.items().size() == m.params.items().size());
    for (size_t i = 0; i < out.items().size(); ++i) {
      const auto& name = out.items()[i]->name;
      CHECK(name == m.params.items()[i]->name);
      bool is_proj = name == "ctc.proj.w" || name == "ctc.proj.b" || name == "dec.proj.w" || name == "dec.proj.b";
      if (is_proj) {
        CHECK(out.items()[i]->value != m.params.items()[i]->value);
      } else {
        CHECK(out.items()[i]->value == m.params.items()[i]->value);  // bitwise
      }
    }
  }

  SUBCASE("smaller vocabulary: output shapes follow") {
    ParameterSet out = replace_projections(m.params, 28, 77);
    CHECK(out.get("ctc.proj.w")->shape == Shape{c.model_dim, 28});
    CHECK(out.get("dec.proj.b")->shape == Shape{28});
    CHECK(out.get("dec.embed")->shape == Shape{28, c.model_dim});
    CHECK(out.get("enc0.ff1.w1")->value == m.params.get("enc0.ff1.w1")->value);
    CHECK(m.params.get("ctc.proj.w")->shape == Shape{c.model_dim, c.vocab_size});  // input untouched
  }

  SUBCASE("degenerate vocabulary rejected") {
    CHECK_THROWS_AS(replace_projections(m.params, 3, 1), std::invalid_argument);
  }
}

TEST_CASE("lhuc scaling: identity at zero, saturates to doubling, matches elementwise oracle") {
  ModelConfig c = ModelConfig::toy(1, 16, 32, 2, 3, 1);
  Model m = build_model(c, 13);
  Array feats = random_features(24, c.feature_dim, 21);

  Graph g0(false);
  Tensor base = encode(g0, m, feats);
  const auto& base_v = g0.value(base);

  LhucState zero = make_lhuc_state(c, "spk0");
  Graph g1(false);
  CHECK(g1.value(encode(g1, m, feats, &zero)) == base_v);  // bitwise

  LhucState sat = make_lhuc_state(c, "spk1");
  for (auto& v : sat.scales.get("lhuc.enc0.r")->value) v = 100.0;
  Graph g2(false);
  const auto& sat_v = g2.value(encode(g2, m, feats, &sat));
  for (size_t i = 0; i < base_v.size(); ++i)
    CHECK(sat_v[i] == doctest::Approx(2.0 * base_v[i]).epsilon(1e-9));

  LhucState rand_state = make_lhuc_state(c, "spk2");
  Rng rng(31);
  auto& r = rand_state.scales.get("lhuc.enc0.r")->value;
  for (auto& v : r) v = rng.gaussian();
  Graph g3(false);
  const auto& adapted = g3.value(encode(g3, m, feats, &rand_state));
  int64_t d = c.model_dim;
  for (size_t i = 0; i < adapted.size(); ++i) {
    double amp = 2.0 / (1.0 + std::exp(-r[i % static_cast<size_t>(d)]));
    CHECK(adapted[i] == doctest::Approx(base_v[i] * amp).epsilon(1e-12));
  }

  LhucState bad = make_lhuc_state(c, "spk3");
  bad.scales.get("lhuc.enc0.r")->shape = {8};
  bad.scales.get("lhuc.enc0.r")->value.resize(8);
  Graph g4(false);
  CHECK_THROWS_AS(encode(g4, m, feats, &bad), std::invalid_argument);
}

TEST_CASE("decoder is causal and produces one logit row per input token") {
  ModelConfig c = ModelConfig::toy();
  Model m = build_model(c, 17);
  Array feats = random_features(16, c.feature_dim, 3);

  Graph g(false);
  Tensor enc = encode(g, m, feats);
  std::vector<int> toks_a = {29, 0, 1, 2, 3};
  std::vector<int> toks_b = {29, 0, 1, 7, 3};  // differs at position 3
  Tensor la = decoder_logits(g, m, enc, toks_a);
  Tensor lb = decoder_logits(g, m, enc, toks_b);
  CHECK(g.shape(la) == Shape{5, c.vocab_size});
  const auto& va = g.value(la);
  const auto& vb = g.value(lb);
  int64_t v_sz = c.vocab_size;
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t k = 0; k < v_sz; ++k) CHECK(va[t * v_sz + k] == vb[t * v_sz + k]);
  bool later_differ = false;
  for (int64_t t = 3; t < 5; ++t)
    for (int64_t k = 0; k < v_sz; ++k) later_differ = later_differ || va[t * v_sz + k] != vb[t * v_sz + k];
  CHECK(later_differ);
}

TEST_CASE("ctc head emits log-distributions") {
  ModelConfig c = ModelConfig::toy();
  Model m = build_model(c, 19);
  Graph g(false);
  Tensor lp = ctc_log_probs(g, m, encode(g, m, random_features(12, c.feature_dim, 9)));
  CHECK(g.shape(lp) == Shape{3, c.vocab_size});
  const auto& v = g.value(lp);
  for (int64_t t = 0; t < 3; ++t) {
    double s = 0.0;
    for (int64_t k = 0; k < c.vocab_size; ++k) s += std::exp(v[t * c.vocab_size + k]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("model config round-trips through json") {
  ModelConfig c = searched_config();
  c.rel_max_dist = 32;
  std::string text = model_config_to_json(c);
  ModelConfig back = model_config_from_json(text);
  CHECK(model_config_to_json(back) == text);
  CHECK(back.encoder_blocks.size() == 12);
  CHECK(back.encoder_blocks[1].ff_dims == std::array<int64_t, 2>{1024, 3072});
  CHECK(back.decoder.num_blocks == 12);
  CHECK(back.rel_max_dist == 32);

  CHECK_THROWS_AS(model_config_from_json("{ nope"), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json("{\"feature_dim\": 40}"), std::invalid_argument);
  CHECK_THROWS_AS(load_model_config("/nonexistent.json"), std::invalid_argument);
}

TEST_CASE("standard vocabulary carries letters, space, apostrophe, blank and sentinels") {
  Vocab v = Vocab::standard();
  CHECK(v.size() == 31);
  for (char ch = 'a'; ch <= 'z'; ++ch) CHECK(v.find(std::string(1, ch)) >= 0);
  CHECK(v.find("<spc>") >= 0);
  CHECK(v.find("'") >= 0);
  CHECK(v.blank_id >= 0);
  CHECK(v.sos_id >= 0);
  CHECK(v.eos_id >= 0);

  auto ids = v.encode("don't stop");
  CHECK(v.decode(ids) == "don't stop");
  CHECK_THROWS_AS(v.encode("Zebra!"), std::invalid_argument);

  Vocab toy = Vocab::sized(4);
  CHECK(toy.size() == 7);
  CHECK(toy.blank_id == 4);
}
