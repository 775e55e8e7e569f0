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

#ifndef ASRLAB_TENSOR_HPP_
#define ASRLAB_TENSOR_HPP_

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrlab/array.hpp"

namespace asrlab {

// A named trainable buffer. Lives outside any graph; graphs bind to it via
// Graph::param and flush gradients into `grad` on backward().
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily on first backward

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { grad.assign(value.size(), 0.0); }
};

using ParamPtr = std::shared_ptr<Parameter>;

// Ordered name -> Parameter map. Treated as an immutable snapshot once a
// model is built; ops that modify parameters clone first.
class ParameterSet {
 public:
  ParamPtr add(const std::string& name, Shape shape, std::vector<double> value);
  ParamPtr get(const std::string& name) const;
  ParamPtr find(const std::string& name) const;  // nullptr if absent
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<ParamPtr>& items() const { return items_; }
  int64_t total_size() const;
  ParameterSet clone() const;
  void zero_grad() const;

 private:
  std::vector<ParamPtr> items_;
  std::unordered_map<std::string, size_t> index_;
};

// Handle to a node inside one Graph.
struct Tensor {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode computation graph over dense float64 arrays. Nodes are
// appended in construction order, which is a topological order, so backward
// is a single reverse sweep. Single-threaded by contract.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  // --- leaves ---
  Tensor constant(Array a);
  Tensor param(const ParamPtr& p);

  // --- elementwise / shape ---
  Tensor add(Tensor a, Tensor b);        // same shape
  Tensor sub(Tensor a, Tensor b);        // same shape
  Tensor mul(Tensor a, Tensor b);        // same shape, elementwise
  Tensor scale_const(Tensor x, double c);
  Tensor add_const(Tensor x, double c);
  Tensor scale(Tensor x, Tensor s);      // s has exactly one element
  Tensor bias_add(Tensor x, Tensor b);   // x [n x d] + row vector b [d]
  Tensor mul_rows(Tensor x, Tensor v);   // x [n x d] * row vector v [d]
  Tensor reshape(Tensor x, Shape shape);
  Tensor transpose(Tensor x);            // 2-D
  Tensor permute(Tensor x, const std::vector<int>& axes);
  Tensor slice_rows(Tensor x, int64_t start, int64_t len);   // 2-D
  Tensor slice_cols(Tensor x, int64_t start, int64_t len);   // 2-D
  Tensor concat_cols(const std::vector<Tensor>& xs);         // 2-D
  Tensor concat_rows(const std::vector<Tensor>& xs);         // 2-D

  // --- activations ---
  Tensor sigmoid(Tensor x);
  Tensor swish(Tensor x);
  Tensor relu(Tensor x);
  Tensor glu(Tensor x);                  // split last dim in halves; a * sigmoid(b)
  Tensor softmax_rows(Tensor x);         // 2-D (or 1-D treated as one row)
  Tensor log_softmax_rows(Tensor x);
  Tensor layer_norm(Tensor x, Tensor gamma, Tensor beta);  // per row, eps 1e-5
  Tensor dropout(Tensor x, double rate, Rng& rng);

  // --- linear algebra / convolution ---
  Tensor matmul(Tensor a, Tensor b);     // [m x k] * [k x n]
  // True convolution (kernel flipped), zero-padded to "same" length.
  // x [T x C], kernel [C x k] with odd k, optional bias [C].
  Tensor depthwise_conv1d(Tensor x, Tensor kernel, Tensor bias);
  // x [Cin x H x W], w [Cout x Cin x kh x kw]; stride 2, zero pad bottom/right
  // so that H -> floor(H/2), W -> floor(W/2) for kh = kw = 3.
  Tensor conv2d_stride2(Tensor x, Tensor w, Tensor bias);
  Tensor embedding(Tensor table, const std::vector<int>& ids);  // table [V x d]
  // B[t, s] = table[clip(s - t, -max_dist, max_dist) + max_dist], table [2*max_dist+1]
  Tensor rel_position_bias(Tensor table, int64_t t_len, int64_t max_dist);
  Tensor masked_fill(Tensor x, const std::vector<uint8_t>& mask, double value);

  // --- reductions / losses ---
  Tensor sum(Tensor x);                  // -> [1]
  Tensor mean(Tensor x);                 // -> [1]
  // Mean token-level cross entropy with label smoothing over logits [n x V].
  Tensor cross_entropy(Tensor logits, const std::vector<int>& targets, double smoothing);
  // -log P(target | log_probs) by the forward-backward recursion; log_probs
  // [T x V] rows must be log-distributions. Throws if target is inadmissible
  // for T (check with ctc_admissible first).
  Tensor ctc_loss(Tensor log_probs, const std::vector<int>& targets, int blank);

  // --- execution ---
  // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, and accumulates
  // parameter gradients into their Parameter::grad buffers. Node-local grads
  // are reset at entry, so repeated calls are idempotent given zeroed
  // Parameter grads. loss must be scalar.
  void backward(Tensor loss);

  const Shape& shape(Tensor t) const { return node(t).shape; }
  const std::vector<double>& value(Tensor t) const { return node(t).value; }
  const std::vector<double>& grad(Tensor t) const { return node(t).grad; }
  double scalar(Tensor t) const;
  Array array(Tensor t) const { return Array(node(t).shape, node(t).value); }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Graph&)> backprop;  // null for leaves
    ParamPtr bound;                        // param leaves only
    bool needs_grad = false;
  };

  Node& node(Tensor t) { return nodes_.at(static_cast<size_t>(t.id)); }
  const Node& node(Tensor t) const { return nodes_.at(static_cast<size_t>(t.id)); }
  Tensor make_node(Shape shape, std::vector<double> value, bool needs_grad,
                   std::function<void(Graph&)> backprop);
  std::vector<double>& grad_buf(Tensor t);
  void check_same_shape(const char* op, Tensor a, Tensor b) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Minimum number of frames CTC needs for `targets` (repeats force a blank).
int64_t ctc_min_frames(const std::vector<int>& targets);
inline bool ctc_admissible(int64_t t_len, const std::vector<int>& targets) {
  return t_len >= ctc_min_frames(targets);
}

// Central-difference gradient check. `build` must construct a scalar loss
// from the current values of `params` (pure function of them). Returns
// max over parameter scalars of |analytic - numeric| / max(|a|, |n|, 1e-12).
double grad_check(const std::function<Tensor(Graph&)>& build, const std::vector<ParamPtr>& params,
                  double eps = 1e-6);

}  // namespace asrlab

#endif  // ASRLAB_TENSOR_HPP_
