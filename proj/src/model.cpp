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

#include "asrlab/model.hpp"

#include <cmath>
#include <functional>

namespace asrlab {

namespace {

enum class Init { kUniform, kZero, kOne };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  int64_t fan_in;
  int64_t fan_out;
};

void attention_params(const std::function<void(ParamSpec)>& f, const std::string& prefix, int64_t d) {
  f({prefix + ".norm.gamma", {d}, Init::kOne, 0, 0});
  f({prefix + ".norm.beta", {d}, Init::kZero, 0, 0});
  for (const char* m : {"wq", "wk", "wv", "wo"}) f({prefix + "." + m, {d, d}, Init::kUniform, d, d});
  for (const char* b : {"bq", "bk", "bv", "bo"}) f({prefix + "." + b, {d}, Init::kZero, 0, 0});
}

void feedforward_params(const std::function<void(ParamSpec)>& f, const std::string& prefix, int64_t d, int64_t ff) {
  f({prefix + ".norm.gamma", {d}, Init::kOne, 0, 0});
  f({prefix + ".norm.beta", {d}, Init::kZero, 0, 0});
  f({prefix + ".w1", {d, ff}, Init::kUniform, d, ff});
  f({prefix + ".b1", {ff}, Init::kZero, 0, 0});
  f({prefix + ".w2", {ff, d}, Init::kUniform, ff, d});
  f({prefix + ".b2", {d}, Init::kZero, 0, 0});
}

// Single authority on what parameters exist; build and count both walk it.
void for_each_param(const ModelConfig& c, const std::function<void(ParamSpec)>& f) {
  int64_t d = c.model_dim;
  int64_t fsub = (c.feature_dim / 2) / 2;
  f({"frontend.conv0.w", {d, 1, 3, 3}, Init::kUniform, 9, 9 * d});
  f({"frontend.conv0.b", {d}, Init::kZero, 0, 0});
  f({"frontend.conv1.w", {d, d, 3, 3}, Init::kUniform, 9 * d, 9 * d});
  f({"frontend.conv1.b", {d}, Init::kZero, 0, 0});
  f({"frontend.proj.w", {d * fsub, d}, Init::kUniform, d * fsub, d});
  f({"frontend.proj.b", {d}, Init::kZero, 0, 0});

  for (size_t i = 0; i < c.encoder_blocks.size(); ++i) {
    const BlockConfig& b = c.encoder_blocks[i];
    std::string p = "enc" + std::to_string(i);
    feedforward_params(f, p + ".ff1", d, b.ff_dims[0]);
    attention_params(f, p + ".att", d);
    f({p + ".att.relbias", {b.num_heads, 2 * c.rel_max_dist + 1}, Init::kZero, 0, 0});
    f({p + ".conv.norm.gamma", {d}, Init::kOne, 0, 0});
    f({p + ".conv.norm.beta", {d}, Init::kZero, 0, 0});
    f({p + ".conv.pw1.w", {d, 2 * d}, Init::kUniform, d, 2 * d});
    f({p + ".conv.pw1.b", {2 * d}, Init::kZero, 0, 0});
    f({p + ".conv.dw.w", {d, b.conv_kernel}, Init::kUniform, b.conv_kernel, b.conv_kernel});
    f({p + ".conv.dw.b", {d}, Init::kZero, 0, 0});
    f({p + ".conv.norm2.gamma", {d}, Init::kOne, 0, 0});
    f({p + ".conv.norm2.beta", {d}, Init::kZero, 0, 0});
    f({p + ".conv.pw2.w", {d, d}, Init::kUniform, d, d});
    f({p + ".conv.pw2.b", {d}, Init::kZero, 0, 0});
    feedforward_params(f, p + ".ff2", d, b.ff_dims[1]);
    f({p + ".final_norm.gamma", {d}, Init::kOne, 0, 0});
    f({p + ".final_norm.beta", {d}, Init::kZero, 0, 0});
  }

  f({"ctc.proj.w", {d, c.vocab_size}, Init::kUniform, d, c.vocab_size});
  f({"ctc.proj.b", {c.vocab_size}, Init::kZero, 0, 0});

  f({"dec.embed", {c.vocab_size, d}, Init::kUniform, c.vocab_size, d});
  for (int64_t i = 0; i < c.decoder.num_blocks; ++i) {
    std::string p = "dec" + std::to_string(i);
    attention_params(f, p + ".self", d);
    attention_params(f, p + ".cross", d);
    feedforward_params(f, p + ".ff", d, c.decoder.ff_dim);
  }
  f({"dec.final_norm.gamma", {d}, Init::kOne, 0, 0});
  f({"dec.final_norm.beta", {d}, Init::kZero, 0, 0});
  f({"dec.proj.w", {d, c.vocab_size}, Init::kUniform, d, c.vocab_size});
  f({"dec.proj.b", {c.vocab_size}, Init::kZero, 0, 0});
}

std::vector<double> init_values(const ParamSpec& s, uint64_t seed) {
  int64_t n = numel(s.shape);
  std::vector<double> v(static_cast<size_t>(n), 0.0);
  switch (s.init) {
    case Init::kZero:
      break;
    case Init::kOne:
      std::fill(v.begin(), v.end(), 1.0);
      break;
    case Init::kUniform: {
      Rng rng(mix_seed(seed, s.name));
      double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
      for (auto& x : v) x = rng.uniform(-bound, bound);
      break;
    }
  }
  return v;
}

Array sinusoid_positions(int64_t len, int64_t d) {
  Array pos = Array::zeros({len, d});
  for (int64_t t = 0; t < len; ++t)
    for (int64_t i = 0; i < d / 2; ++i) {
      double rate = std::exp(-static_cast<double>(2 * i) * std::log(10000.0) / static_cast<double>(d));
      pos.v[static_cast<size_t>(t * d + 2 * i)] = std::sin(static_cast<double>(t) * rate);
      pos.v[static_cast<size_t>(t * d + 2 * i + 1)] = std::cos(static_cast<double>(t) * rate);
    }
  return pos;
}

}  // namespace

Tensor linear(Graph& g, const ParameterSet& ps, Tensor x, const std::string& w, const std::string& b) {
  return g.bias_add(g.matmul(x, g.param(ps.get(w))), g.param(ps.get(b)));
}

Tensor pre_norm(Graph& g, const ParameterSet& ps, Tensor x, const std::string& prefix) {
  return g.layer_norm(x, g.param(ps.get(prefix + ".gamma")), g.param(ps.get(prefix + ".beta")));
}

// Multi-head attention over already-normalized queries/memory. rel_table, if
// a valid tensor, is the [num_heads x 2*max_dist+1] table; causal adds an
// upper-triangular mask. q_in and kv_in are [Tq x d] / [Tkv x d].
Tensor multi_head_attention(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor q_in, Tensor kv_in,
                            int64_t num_heads, int64_t head_dim, Tensor rel_table, int64_t rel_max_dist,
                            bool causal) {
  Tensor q = linear(g, ps, q_in, prefix + ".wq", prefix + ".bq");
  Tensor k = linear(g, ps, kv_in, prefix + ".wk", prefix + ".bk");
  Tensor v = linear(g, ps, kv_in, prefix + ".wv", prefix + ".bv");
  int64_t tq = g.shape(q)[0];
  int64_t tk = g.shape(k)[0];
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<uint8_t> mask;
  if (causal) {
    mask.assign(static_cast<size_t>(tq * tk), 0);
    for (int64_t i = 0; i < tq; ++i)
      for (int64_t j = i + 1; j < tk; ++j) mask[static_cast<size_t>(i * tk + j)] = 1;
  }

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(num_heads));
  for (int64_t h = 0; h < num_heads; ++h) {
    Tensor qh = g.slice_cols(q, h * head_dim, head_dim);
    Tensor kh = g.slice_cols(k, h * head_dim, head_dim);
    Tensor vh = g.slice_cols(v, h * head_dim, head_dim);
    Tensor scores = g.scale_const(g.matmul(qh, g.transpose(kh)), inv_sqrt);
    if (rel_table.valid()) {
      Tensor row = g.reshape(g.slice_rows(rel_table, h, 1), {2 * rel_max_dist + 1});
      scores = g.add(scores, g.rel_position_bias(row, tq, rel_max_dist));
    }
    if (causal) scores = g.masked_fill(scores, mask, -1e30);
    heads.push_back(g.matmul(g.softmax_rows(scores), vh));
  }
  Tensor ctx = num_heads == 1 ? heads[0] : g.concat_cols(heads);
  return linear(g, ps, ctx, prefix + ".wo", prefix + ".bo");
}

Tensor feedforward_core(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor x_normed) {
  Tensor t = g.swish(linear(g, ps, x_normed, prefix + ".w1", prefix + ".b1"));
  return linear(g, ps, t, prefix + ".w2", prefix + ".b2");
}

Tensor conv_module_core(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor x_normed,
                        Tensor dw_kernel, Tensor dw_bias) {
  Tensor t = g.glu(linear(g, ps, x_normed, prefix + ".pw1.w", prefix + ".pw1.b"));
  t = g.depthwise_conv1d(t, dw_kernel, dw_bias);
  t = pre_norm(g, ps, t, prefix + ".norm2");
  t = g.swish(t);
  return linear(g, ps, t, prefix + ".pw2.w", prefix + ".pw2.b");
}

Tensor frontend_forward(Graph& g, const ParameterSet& ps, const ModelConfig& c, const Array& features) {
  if (features.shape.size() != 2 || features.shape[1] != c.feature_dim)
    throw std::invalid_argument("encode: features " + shape_str(features.shape) + " do not match feature_dim " +
                                std::to_string(c.feature_dim));
  int64_t t_in = features.shape[0];
  if (t_in < 8) throw std::invalid_argument("encode: need at least 8 frames, got " + std::to_string(t_in));

  Tensor x = g.reshape(g.constant(features), {1, t_in, c.feature_dim});
  x = g.relu(g.conv2d_stride2(x, g.param(ps.get("frontend.conv0.w")), g.param(ps.get("frontend.conv0.b"))));
  x = g.relu(g.conv2d_stride2(x, g.param(ps.get("frontend.conv1.w")), g.param(ps.get("frontend.conv1.b"))));
  int64_t t_out = g.shape(x)[1];
  int64_t fsub = g.shape(x)[2];
  x = g.reshape(g.permute(x, {1, 0, 2}), {t_out, c.model_dim * fsub});
  return linear(g, ps, x, "frontend.proj.w", "frontend.proj.b");
}

namespace {

Tensor feedforward(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor x) {
  return feedforward_core(g, ps, prefix, pre_norm(g, ps, x, prefix + ".norm"));
}

}  // namespace

Model build_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  for_each_param(config, [&](ParamSpec s) {
    auto values = init_values(s, seed);
    m.params.add(s.name, std::move(s.shape), std::move(values));
  });
  return m;
}

int64_t count_params(const ModelConfig& config) {
  config.validate();
  int64_t total = 0;
  for_each_param(config, [&](ParamSpec s) { total += numel(s.shape); });
  return total;
}

LhucState make_lhuc_state(const ModelConfig& config, const std::string& speaker_id) {
  config.validate();
  LhucState st;
  st.speaker_id = speaker_id;
  for (size_t i = 0; i < config.encoder_blocks.size(); ++i)
    st.scales.add("lhuc.enc" + std::to_string(i) + ".r", {config.model_dim},
                  std::vector<double>(static_cast<size_t>(config.model_dim), 0.0));
  return st;
}

Tensor encode(Graph& g, const Model& m, const Array& features, const LhucState* lhuc) {
  const ModelConfig& c = m.config;
  const ParameterSet& ps = m.params;
  if (lhuc) {
    if (lhuc->scales.items().size() != c.encoder_blocks.size())
      throw std::invalid_argument("encode: lhuc state covers " + std::to_string(lhuc->scales.items().size()) +
                                  " blocks, model has " + std::to_string(c.encoder_blocks.size()));
    for (const auto& p : lhuc->scales.items())
      if (p->shape != Shape{c.model_dim})
        throw std::invalid_argument("encode: lhuc vector " + p->name + " has shape " + shape_str(p->shape) +
                                    ", want [" + std::to_string(c.model_dim) + "]");
  }

  Tensor x = frontend_forward(g, ps, c, features);

  for (size_t i = 0; i < c.encoder_blocks.size(); ++i) {
    const BlockConfig& b = c.encoder_blocks[i];
    std::string p = "enc" + std::to_string(i);

    x = g.add(x, g.scale_const(feedforward(g, ps, p + ".ff1", x), 0.5));

    Tensor normed = pre_norm(g, ps, x, p + ".att.norm");
    x = g.add(x, multi_head_attention(g, ps, p + ".att", normed, normed, b.num_heads, b.head_dim,
                                      g.param(ps.get(p + ".att.relbias")), c.rel_max_dist, false));

    Tensor t = conv_module_core(g, ps, p + ".conv", pre_norm(g, ps, x, p + ".conv.norm"),
                                g.param(ps.get(p + ".conv.dw.w")), g.param(ps.get(p + ".conv.dw.b")));
    x = g.add(x, t);

    x = g.add(x, g.scale_const(feedforward(g, ps, p + ".ff2", x), 0.5));
    x = pre_norm(g, ps, x, p + ".final_norm");

    if (lhuc) {
      Tensor r = g.param(lhuc->scales.get("lhuc.enc" + std::to_string(i) + ".r"));
      x = g.mul_rows(x, g.scale_const(g.sigmoid(r), 2.0));
    }
  }
  return x;
}

Tensor decoder_logits(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& input_tokens) {
  const ModelConfig& c = m.config;
  const ParameterSet& ps = m.params;
  if (input_tokens.empty()) throw std::invalid_argument("decoder_logits: empty input token sequence");
  int64_t len = static_cast<int64_t>(input_tokens.size());

  Tensor x = g.embedding(g.param(ps.get("dec.embed")), input_tokens);
  x = g.scale_const(x, std::sqrt(static_cast<double>(c.model_dim)));
  x = g.add(x, g.constant(sinusoid_positions(len, c.model_dim)));

  for (int64_t i = 0; i < c.decoder.num_blocks; ++i) {
    std::string p = "dec" + std::to_string(i);
    Tensor normed = pre_norm(g, ps, x, p + ".self.norm");
    x = g.add(x, multi_head_attention(g, ps, p + ".self", normed, normed, c.decoder.num_heads, c.decoder.head_dim,
                                      Tensor{}, 0, true));
    normed = pre_norm(g, ps, x, p + ".cross.norm");
    x = g.add(x, multi_head_attention(g, ps, p + ".cross", normed, enc_out, c.decoder.num_heads,
                                      c.decoder.head_dim, Tensor{}, 0, false));
    x = g.add(x, feedforward(g, ps, p + ".ff", x));
  }
  x = pre_norm(g, ps, x, "dec.final_norm");
  return linear(g, ps, x, "dec.proj.w", "dec.proj.b");
}

Tensor ctc_log_probs(Graph& g, const Model& m, Tensor enc_out) {
  return g.log_softmax_rows(linear(g, m.params, enc_out, "ctc.proj.w", "ctc.proj.b"));
}

ParameterSet replace_projections(const ParameterSet& params, int64_t new_vocab_size, uint64_t seed) {
  if (new_vocab_size <= 3)
    throw std::invalid_argument("replace_projections: vocab must exceed the 3 sentinel symbols, got " +
                                std::to_string(new_vocab_size));
  for (const char* name : {"ctc.proj.w", "ctc.proj.b", "dec.proj.w", "dec.proj.b", "dec.embed"})
    if (!params.has(name)) throw std::invalid_argument(std::string("replace_projections: missing ") + name);
  int64_t d = params.get("ctc.proj.w")->shape[0];
  int64_t old_vocab = params.get("ctc.proj.w")->shape[1];

  ParameterSet out = params.clone();
  auto reinit = [&](const std::string& name, Shape shape, int64_t fan_in, int64_t fan_out) {
    auto p = out.get(name);
    p->shape = shape;
    p->grad.clear();
    if (name.ends_with(".b")) {
      p->value.assign(static_cast<size_t>(numel(shape)), 0.0);
    } else {
      Rng rng(mix_seed(seed, name));
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      p->value.resize(static_cast<size_t>(numel(shape)));
      for (auto& x : p->value) x = rng.uniform(-bound, bound);
    }
  };
  reinit("ctc.proj.w", {d, new_vocab_size}, d, new_vocab_size);
  reinit("ctc.proj.b", {new_vocab_size}, 0, 0);
  reinit("dec.proj.w", {d, new_vocab_size}, d, new_vocab_size);
  reinit("dec.proj.b", {new_vocab_size}, 0, 0);
  if (new_vocab_size != old_vocab) reinit("dec.embed", {new_vocab_size, d}, new_vocab_size, d);
  return out;
}

}  // namespace asrlab
