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

#ifndef ASRLAB_MODEL_HPP_
#define ASRLAB_MODEL_HPP_

#include "asrlab/config.hpp"
#include "asrlab/tensor.hpp"

namespace asrlab {

// Encoder-decoder model: two stride-2 convolution blocks over the feature
// map, a stack of Conformer encoder blocks (half-step macaron feedforwards,
// relative-position self-attention, GLU/depthwise convolution module), a
// Transformer decoder with sinusoidal positions, plus linear projections
// for the blank-based and attention output distributions.
struct Model {
  ModelConfig config;
  ParameterSet params;
};

// All parameters drawn from per-name seeded streams, so two builds with the
// same seed are bitwise identical regardless of construction order.
Model build_model(const ModelConfig& config, uint64_t seed);

// Closed-form trainable-scalar count; equals build_model(...).params.total_size().
int64_t count_params(const ModelConfig& config);

// Per-speaker hidden-unit scaling: one logit vector per encoder block
// (width model_dim). Amplitude applied in forward is 2*sigmoid(r), so r = 0
// leaves the model untouched.
struct LhucState {
  std::string speaker_id;
  ParameterSet scales;  // "lhuc.enc{i}.r", shape [model_dim]
};

LhucState make_lhuc_state(const ModelConfig& config, const std::string& speaker_id);

// features [T x feature_dim] -> encoder states [floor(T/4) x model_dim].
// If lhuc is given, each block output is scaled by 2*sigmoid(r_block).
Tensor encode(Graph& g, const Model& m, const Array& features, const LhucState* lhuc = nullptr);

// Teacher-forced decoder pass. input_tokens start with <sos>; returns one
// logit row per input token ([len x vocab]). Self-attention is causal.
Tensor decoder_logits(Graph& g, const Model& m, Tensor enc_out, const std::vector<int>& input_tokens);

// Log-distributions over the vocabulary (blank included) per encoder frame.
Tensor ctc_log_probs(Graph& g, const Model& m, Tensor enc_out);

// Returns a copy of params where the two output projections ("ctc.proj.*",
// "dec.proj.*") and the decoder embedding are freshly initialized for
// new_vocab_size; everything else is bitwise identical. Input is untouched.
ParameterSet replace_projections(const ParameterSet& params, int64_t new_vocab_size, uint64_t seed);

// Graph builders for the component pieces. The architecture-search supernet
// assembles candidate branches from these, so plain and branch forwards stay
// numerically identical.
Tensor linear(Graph& g, const ParameterSet& ps, Tensor x, const std::string& w, const std::string& b);
Tensor pre_norm(Graph& g, const ParameterSet& ps, Tensor x, const std::string& prefix);
Tensor multi_head_attention(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor q_in, Tensor kv_in,
                            int64_t num_heads, int64_t head_dim, Tensor rel_table, int64_t rel_max_dist,
                            bool causal);
// swish(x W1 + b1) W2 + b2 with weights under `prefix`; the caller applies
// the pre-norm so branches can share it.
Tensor feedforward_core(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor x_normed);
// GLU pointwise -> depthwise conv (explicit kernel/bias tensors) -> norm ->
// swish -> pointwise, with the fixed weights under `prefix`.
Tensor conv_module_core(Graph& g, const ParameterSet& ps, const std::string& prefix, Tensor x_normed,
                        Tensor dw_kernel, Tensor dw_bias);
// Two stride-2 convolutions plus projection: [T x feature_dim] features to
// [floor(T/4) x model_dim] frames. Validates the feature shape.
Tensor frontend_forward(Graph& g, const ParameterSet& ps, const ModelConfig& config, const Array& features);

}  // namespace asrlab

#endif  // ASRLAB_MODEL_HPP_
