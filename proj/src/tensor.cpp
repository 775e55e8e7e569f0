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

#include "asrlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace asrlab {

namespace {

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * shape[i + 1];
  return st;
}

// Flattens all leading dims; returns {rows, cols} with cols = last dim.
std::pair<int64_t, int64_t> as_rows(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  int64_t cols = shape.back();
  int64_t rows = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, cols};
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterSet

ParamPtr ParameterSet::add(const std::string& name, Shape shape, std::vector<double> value) {
  if (index_.count(name)) throw std::invalid_argument("ParameterSet: duplicate parameter '" + name + "'");
  if (numel(shape) != static_cast<int64_t>(value.size()))
    throw std::invalid_argument("ParameterSet: shape/value mismatch for '" + name + "'");
  auto p = std::make_shared<Parameter>();
  p->name = name;
  p->shape = std::move(shape);
  p->value = std::move(value);
  index_[name] = items_.size();
  items_.push_back(p);
  return p;
}

ParamPtr ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParameterSet: no parameter '" + name + "'");
  return items_[it->second];
}

ParamPtr ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : items_[it->second];
}

int64_t ParameterSet::total_size() const {
  int64_t n = 0;
  for (const auto& p : items_) n += p->size();
  return n;
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& p : items_) out.add(p->name, p->shape, p->value);
  return out;
}

void ParameterSet::zero_grad() const {
  for (const auto& p : items_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Graph plumbing

Tensor Graph::make_node(Shape shape, std::vector<double> value, bool needs_grad,
                        std::function<void(Graph&)> backprop) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = grad_enabled_ && needs_grad;
  if (n.needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Tensor{static_cast<int32_t>(nodes_.size() - 1)};
}

std::vector<double>& Graph::grad_buf(Tensor t) {
  Node& n = node(t);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::check_same_shape(const char* op, Tensor a, Tensor b) const {
  if (node(a).shape != node(b).shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(node(a).shape) + " vs " +
                                shape_str(node(b).shape));
}

double Graph::scalar(Tensor t) const {
  const Node& n = node(t);
  if (n.value.size() != 1) throw std::invalid_argument("scalar: tensor has shape " + shape_str(n.shape));
  return n.value[0];
}

Tensor Graph::constant(Array a) {
  return make_node(std::move(a.shape), std::move(a.v), false, nullptr);
}

Tensor Graph::param(const ParamPtr& p) {
  Node n;
  n.shape = p->shape;
  n.value = p->value;
  n.needs_grad = grad_enabled_;
  n.bound = p;
  nodes_.push_back(std::move(n));
  return Tensor{static_cast<int32_t>(nodes_.size() - 1)};
}

void Graph::backward(Tensor loss) {
  Node& ln = node(loss);
  if (ln.value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(ln.shape));
  if (!grad_enabled_) throw std::invalid_argument("backward: graph was built with gradients disabled");
  for (auto& n : nodes_)
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
  grad_buf(loss)[0] = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backprop) n.backprop(*this);
  }
  for (auto& n : nodes_) {
    if (n.bound && n.needs_grad) {
      n.bound->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

Tensor Graph::add(Tensor a, Tensor b) {
  check_same_shape("add", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Tensor t = make_node(node(a).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [a, b, t](Graph& g) {
      const auto& go = g.node(t).grad;
      if (g.node(a).needs_grad) {
        auto& ga = g.grad_buf(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(b).needs_grad) {
        auto& gb = g.grad_buf(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  }
  return t;
}

Tensor Graph::sub(Tensor a, Tensor b) {
  check_same_shape("sub", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Tensor t = make_node(node(a).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [a, b, t](Graph& g) {
      const auto& go = g.node(t).grad;
      if (g.node(a).needs_grad) {
        auto& ga = g.grad_buf(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(b).needs_grad) {
        auto& gb = g.grad_buf(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  }
  return t;
}

Tensor Graph::mul(Tensor a, Tensor b) {
  check_same_shape("mul", a, b);
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Tensor t = make_node(node(a).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [a, b, t](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& av2 = g.node(a).value;
      const auto& bv2 = g.node(b).value;
      if (g.node(a).needs_grad) {
        auto& ga = g.grad_buf(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
      }
      if (g.node(b).needs_grad) {
        auto& gb = g.grad_buf(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
      }
    };
  }
  return t;
}

Tensor Graph::scale_const(Tensor x, double c) {
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * c;
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, c, t](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * c;
    };
  }
  return t;
}

Tensor Graph::add_const(Tensor x, double c) {
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + c;
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return t;
}

Tensor Graph::scale(Tensor x, Tensor s) {
  if (node(s).value.size() != 1)
    throw std::invalid_argument("scale: scale factor must have one element, got " + shape_str(node(s).shape));
  double sv = node(s).value[0];
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * sv;
  bool ng = node(x).needs_grad || node(s).needs_grad;
  Tensor t = make_node(node(x).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, s, t](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      double sv2 = g.node(s).value[0];
      if (g.node(x).needs_grad) {
        auto& gx = g.grad_buf(x);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * sv2;
      }
      if (g.node(s).needs_grad) {
        double acc = 0.0;
        for (size_t i = 0; i < go.size(); ++i) acc += go[i] * xv2[i];
        g.grad_buf(s)[0] += acc;
      }
    };
  }
  return t;
}

Tensor Graph::bias_add(Tensor x, Tensor b) {
  auto [rows, cols] = as_rows(node(x).shape);
  if (numel(node(b).shape) != cols)
    throw std::invalid_argument("bias_add: bias " + shape_str(node(b).shape) + " does not match last dim of " +
                                shape_str(node(x).shape));
  const auto& xv = node(x).value;
  const auto& bv = node(b).value;
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  bool ng = node(x).needs_grad || node(b).needs_grad;
  Tensor t = make_node(node(x).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, b, t, rows, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      if (g.node(x).needs_grad) {
        auto& gx = g.grad_buf(x);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (g.node(b).needs_grad) {
        auto& gb = g.grad_buf(b);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) gb[c] += go[r * cols + c];
      }
    };
  }
  return t;
}

Tensor Graph::mul_rows(Tensor x, Tensor v) {
  auto [rows, cols] = as_rows(node(x).shape);
  if (numel(node(v).shape) != cols)
    throw std::invalid_argument("mul_rows: vector " + shape_str(node(v).shape) + " does not match last dim of " +
                                shape_str(node(x).shape));
  const auto& xv = node(x).value;
  const auto& vv = node(v).value;
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * vv[c];
  bool ng = node(x).needs_grad || node(v).needs_grad;
  Tensor t = make_node(node(x).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, v, t, rows, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      const auto& vv2 = g.node(v).value;
      if (g.node(x).needs_grad) {
        auto& gx = g.grad_buf(x);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) gx[r * cols + c] += go[r * cols + c] * vv2[c];
      }
      if (g.node(v).needs_grad) {
        auto& gv = g.grad_buf(v);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) gv[c] += go[r * cols + c] * xv2[r * cols + c];
      }
    };
  }
  return t;
}

Tensor Graph::reshape(Tensor x, Shape shape) {
  if (numel(shape) != numel(node(x).shape))
    throw std::invalid_argument("reshape: cannot view " + shape_str(node(x).shape) + " as " + shape_str(shape));
  Tensor t = make_node(std::move(shape), node(x).value, node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return t;
}

Tensor Graph::permute(Tensor x, const std::vector<int>& axes) {
  const Shape& is = node(x).shape;
  if (axes.size() != is.size()) throw std::invalid_argument("permute: axes rank mismatch for " + shape_str(is));
  Shape os(is.size());
  for (size_t i = 0; i < axes.size(); ++i) os[i] = is[static_cast<size_t>(axes[i])];
  auto ist = row_major_strides(is);
  auto ost = row_major_strides(os);
  int64_t n = numel(is);
  const auto& xv = node(x).value;
  std::vector<double> out(static_cast<size_t>(n));
  std::vector<int64_t> idx(is.size(), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    // flat indexes the *output*; map back to input offset
    int64_t rem = flat, in_off = 0;
    for (size_t d = 0; d < os.size(); ++d) {
      int64_t q = rem / ost[d];
      rem %= ost[d];
      in_off += q * ist[static_cast<size_t>(axes[d])];
    }
    out[static_cast<size_t>(flat)] = xv[static_cast<size_t>(in_off)];
  }
  Tensor t = make_node(std::move(os), std::move(out), node(x).needs_grad, nullptr);
  Node& nn = node(t);
  if (nn.needs_grad) {
    auto axes_c = axes;
    nn.backprop = [x, t, axes_c](Graph& g) {
      const Shape& is2 = g.node(x).shape;
      const Shape& os2 = g.node(t).shape;
      auto ist2 = row_major_strides(is2);
      auto ost2 = row_major_strides(os2);
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      int64_t n2 = numel(is2);
      for (int64_t flat = 0; flat < n2; ++flat) {
        int64_t rem = flat, in_off = 0;
        for (size_t d = 0; d < os2.size(); ++d) {
          int64_t q = rem / ost2[d];
          rem %= ost2[d];
          in_off += q * ist2[static_cast<size_t>(axes_c[d])];
        }
        gx[static_cast<size_t>(in_off)] += go[static_cast<size_t>(flat)];
      }
    };
  }
  return t;
}

Tensor Graph::transpose(Tensor x) {
  if (node(x).shape.size() != 2)
    throw std::invalid_argument("transpose: expected 2-D, got " + shape_str(node(x).shape));
  return permute(x, {1, 0});
}

Tensor Graph::slice_rows(Tensor x, int64_t start, int64_t len) {
  const Shape& s = node(x).shape;
  if (s.size() != 2) throw std::invalid_argument("slice_rows: expected 2-D, got " + shape_str(s));
  if (start < 0 || len < 1 || start + len > s[0])
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of bounds for " + shape_str(s));
  int64_t cols = s[1];
  const auto& xv = node(x).value;
  std::vector<double> out(static_cast<size_t>(len * cols));
  std::copy(xv.begin() + start * cols, xv.begin() + (start + len) * cols, out.begin());
  Tensor t = make_node({len, cols}, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, start, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[static_cast<size_t>(start * cols) + i] += go[i];
    };
  }
  return t;
}

Tensor Graph::slice_cols(Tensor x, int64_t start, int64_t len) {
  const Shape& s = node(x).shape;
  if (s.size() != 2) throw std::invalid_argument("slice_cols: expected 2-D, got " + shape_str(s));
  if (start < 0 || len < 1 || start + len > s[1])
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                ") out of bounds for " + shape_str(s));
  int64_t rows = s[0], cols = s[1];
  const auto& xv = node(x).value;
  std::vector<double> out(static_cast<size_t>(rows * len));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < len; ++c) out[r * len + c] = xv[r * cols + start + c];
  Tensor t = make_node({rows, len}, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, start, rows, cols, len](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < len; ++c) gx[r * cols + start + c] += go[r * len + c];
    };
  }
  return t;
}

Tensor Graph::concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input list");
  int64_t rows = node(xs[0]).shape.at(0);
  int64_t total = 0;
  bool ng = false;
  for (Tensor x : xs) {
    const Shape& s = node(x).shape;
    if (s.size() != 2 || s[0] != rows)
      throw std::invalid_argument("concat_cols: incompatible shape " + shape_str(s));
    total += s[1];
    ng = ng || node(x).needs_grad;
  }
  std::vector<double> out(static_cast<size_t>(rows * total));
  int64_t off = 0;
  for (Tensor x : xs) {
    int64_t c = node(x).shape[1];
    const auto& xv = node(x).value;
    for (int64_t r = 0; r < rows; ++r)
      std::copy(xv.begin() + r * c, xv.begin() + (r + 1) * c, out.begin() + r * total + off);
    off += c;
  }
  Tensor t = make_node({rows, total}, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    auto xs_c = xs;
    n.backprop = [xs_c, t, rows, total](Graph& g) {
      const auto& go = g.node(t).grad;
      int64_t off2 = 0;
      for (Tensor x : xs_c) {
        int64_t c = g.node(x).shape[1];
        if (g.node(x).needs_grad) {
          auto& gx = g.grad_buf(x);
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < c; ++j) gx[r * c + j] += go[r * total + off2 + j];
        }
        off2 += c;
      }
    };
  }
  return t;
}

Tensor Graph::concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
  int64_t cols = node(xs[0]).shape.at(1);
  int64_t total = 0;
  bool ng = false;
  for (Tensor x : xs) {
    const Shape& s = node(x).shape;
    if (s.size() != 2 || s[1] != cols)
      throw std::invalid_argument("concat_rows: incompatible shape " + shape_str(s));
    total += s[0];
    ng = ng || node(x).needs_grad;
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total * cols));
  for (Tensor x : xs) out.insert(out.end(), node(x).value.begin(), node(x).value.end());
  Tensor t = make_node({total, cols}, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    auto xs_c = xs;
    n.backprop = [xs_c, t](Graph& g) {
      const auto& go = g.node(t).grad;
      size_t off = 0;
      for (Tensor x : xs_c) {
        size_t len = g.node(x).value.size();
        if (g.node(x).needs_grad) {
          auto& gx = g.grad_buf(x);
          for (size_t i = 0; i < len; ++i) gx[i] += go[off + i];
        }
        off += len;
      }
    };
  }
  return t;
}

// ---------------------------------------------------------------------------
// Activations

Tensor Graph::sigmoid(Tensor x) {
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& y = g.node(t).value;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
    };
  }
  return t;
}

Tensor Graph::swish(Tensor x) {
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-xv2[i]));
        gx[i] += go[i] * s * (1.0 + xv2[i] * (1.0 - s));
      }
    };
  }
  return t;
}

Tensor Graph::relu(Tensor x) {
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i)
        if (xv2[i] > 0.0) gx[i] += go[i];
    };
  }
  return t;
}

Tensor Graph::glu(Tensor x) {
  auto [rows, cols] = as_rows(node(x).shape);
  if (cols % 2 != 0)
    throw std::invalid_argument("glu: last dim must be even, got " + shape_str(node(x).shape));
  int64_t half = cols / 2;
  const auto& xv = node(x).value;
  std::vector<double> out(static_cast<size_t>(rows * half));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < half; ++c) {
      double a = xv[r * cols + c];
      double b = xv[r * cols + half + c];
      out[r * half + c] = a / (1.0 + std::exp(-b));
    }
  Shape os = node(x).shape;
  os.back() = half;
  Tensor t = make_node(std::move(os), std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, rows, cols, half](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      auto& gx = g.grad_buf(x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < half; ++c) {
          double a = xv2[r * cols + c];
          double b = xv2[r * cols + half + c];
          double s = 1.0 / (1.0 + std::exp(-b));
          double d = go[r * half + c];
          gx[r * cols + c] += d * s;
          gx[r * cols + half + c] += d * a * s * (1.0 - s);
        }
    };
  }
  return t;
}

Tensor Graph::softmax_rows(Tensor x) {
  auto [rows, cols] = as_rows(node(x).shape);
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * cols;
    double m = kNegInf;
    for (int64_t c = 0; c < cols; ++c) m = std::max(m, xr[c]);
    double s = 0.0;
    for (int64_t c = 0; c < cols; ++c) s += std::exp(xr[c] - m);
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = std::exp(xr[c] - m) / s;
  }
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, rows, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& y = g.node(t).value;
      auto& gx = g.grad_buf(x);
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int64_t c = 0; c < cols; ++c) dot += go[r * cols + c] * y[r * cols + c];
        for (int64_t c = 0; c < cols; ++c) gx[r * cols + c] += y[r * cols + c] * (go[r * cols + c] - dot);
      }
    };
  }
  return t;
}

Tensor Graph::log_softmax_rows(Tensor x) {
  auto [rows, cols] = as_rows(node(x).shape);
  const auto& xv = node(x).value;
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r) {
    double lse = log_sum_exp(xv.data() + r * cols, cols);
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] - lse;
  }
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, rows, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& y = g.node(t).value;  // log-probs
      auto& gx = g.grad_buf(x);
      for (int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int64_t c = 0; c < cols; ++c) s += go[r * cols + c];
        for (int64_t c = 0; c < cols; ++c)
          gx[r * cols + c] += go[r * cols + c] - std::exp(y[r * cols + c]) * s;
      }
    };
  }
  return t;
}

Tensor Graph::layer_norm(Tensor x, Tensor gamma, Tensor beta) {
  constexpr double kEps = 1e-5;
  auto [rows, cols] = as_rows(node(x).shape);
  if (numel(node(gamma).shape) != cols || numel(node(beta).shape) != cols)
    throw std::invalid_argument("layer_norm: scale/offset " + shape_str(node(gamma).shape) + "/" +
                                shape_str(node(beta).shape) + " do not match last dim of " +
                                shape_str(node(x).shape));
  const auto& xv = node(x).value;
  const auto& gv = node(gamma).value;
  const auto& bv = node(beta).value;
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * cols;
    double mu = 0.0;
    for (int64_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    double inv = 1.0 / std::sqrt(var + kEps);
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = (xr[c] - mu) * inv * gv[c] + bv[c];
  }
  bool ng = node(x).needs_grad || node(gamma).needs_grad || node(beta).needs_grad;
  Tensor t = make_node(node(x).shape, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, gamma, beta, t, rows, cols](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      const auto& gv2 = g.node(gamma).value;
      for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xv2.data() + r * cols;
        double mu = 0.0;
        for (int64_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<double>(cols);
        double inv = 1.0 / std::sqrt(var + kEps);
        double mean_dg = 0.0, mean_dgx = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          double xhat = (xr[c] - mu) * inv;
          double dg = go[r * cols + c] * gv2[c];
          mean_dg += dg;
          mean_dgx += dg * xhat;
        }
        mean_dg /= static_cast<double>(cols);
        mean_dgx /= static_cast<double>(cols);
        if (g.node(x).needs_grad) {
          auto& gx = g.grad_buf(x);
          for (int64_t c = 0; c < cols; ++c) {
            double xhat = (xr[c] - mu) * inv;
            double dg = go[r * cols + c] * gv2[c];
            gx[r * cols + c] += inv * (dg - mean_dg - xhat * mean_dgx);
          }
        }
        if (g.node(gamma).needs_grad) {
          auto& gg = g.grad_buf(gamma);
          for (int64_t c = 0; c < cols; ++c) gg[c] += go[r * cols + c] * (xr[c] - mu) * inv;
        }
        if (g.node(beta).needs_grad) {
          auto& gb = g.grad_buf(beta);
          for (int64_t c = 0; c < cols; ++c) gb[c] += go[r * cols + c];
        }
      }
    };
  }
  return t;
}

Tensor Graph::dropout(Tensor x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;  // exact identity, draws nothing from rng
  const auto& xv = node(x).value;
  std::vector<double> keep(xv.size());
  double inv = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < xv.size(); ++i) keep[i] = rng.uniform() >= rate ? inv : 0.0;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * keep[i];
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, keep = std::move(keep)](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * keep[i];
    };
  }
  return t;
}

// ---------------------------------------------------------------------------
// Linear algebra / convolution

Tensor Graph::matmul(Tensor a, Tensor b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(sa) + " x " + shape_str(sb));
  int64_t m = sa[0], k = sa[1], nn = sb[1];
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<double> out(static_cast<size_t>(m * nn), 0.0);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* br = bv.data() + p * nn;
      double* orow = out.data() + i * nn;
      for (int64_t j = 0; j < nn; ++j) orow[j] += aip * br[j];
    }
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Tensor t = make_node({m, nn}, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [a, b, t, m, k, nn](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& av2 = g.node(a).value;
      const auto& bv2 = g.node(b).value;
      if (g.node(a).needs_grad) {
        auto& ga = g.grad_buf(a);  // dA = dY * B^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* gr = go.data() + i * nn;
            const double* br = bv2.data() + p * nn;
            for (int64_t j = 0; j < nn; ++j) acc += gr[j] * br[j];
            ga[i * k + p] += acc;
          }
      }
      if (g.node(b).needs_grad) {
        auto& gb = g.grad_buf(b);  // dB = A^T * dY
        for (int64_t p = 0; p < k; ++p)
          for (int64_t i = 0; i < m; ++i) {
            double aip = av2[i * k + p];
            if (aip == 0.0) continue;
            const double* gr = go.data() + i * nn;
            double* gbr = gb.data() + p * nn;
            for (int64_t j = 0; j < nn; ++j) gbr[j] += aip * gr[j];
          }
      }
    };
  }
  return t;
}

Tensor Graph::depthwise_conv1d(Tensor x, Tensor kernel, Tensor bias) {
  const Shape& sx = node(x).shape;
  const Shape& sk = node(kernel).shape;
  if (sx.size() != 2 || sk.size() != 2 || sk[0] != sx[1] || sk[1] % 2 == 0)
    throw std::invalid_argument("depthwise_conv1d: input " + shape_str(sx) + " incompatible with kernel " +
                                shape_str(sk) + " (want [T x C] and [C x k], k odd)");
  bool has_bias = bias.valid();
  if (has_bias && numel(node(bias).shape) != sx[1])
    throw std::invalid_argument("depthwise_conv1d: bias " + shape_str(node(bias).shape) +
                                " does not match channels of " + shape_str(sx));
  int64_t T = sx[0], C = sx[1], k = sk[1], h = (k - 1) / 2;
  const auto& xv = node(x).value;
  const auto& kv = node(kernel).value;
  std::vector<double> out(static_cast<size_t>(T * C), 0.0);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t c = 0; c < C; ++c) {
      double acc = has_bias ? node(bias).value[static_cast<size_t>(c)] : 0.0;
      for (int64_t j = 0; j < k; ++j) {
        int64_t u = t + h - j;  // kernel flipped: true convolution
        if (u >= 0 && u < T) acc += kv[c * k + j] * xv[u * C + c];
      }
      out[t * C + c] = acc;
    }
  bool ng = node(x).needs_grad || node(kernel).needs_grad || (has_bias && node(bias).needs_grad);
  Tensor t_out = make_node({T, C}, std::move(out), ng, nullptr);
  Node& n = node(t_out);
  if (n.needs_grad) {
    n.backprop = [x, kernel, bias, has_bias, t_out, T, C, k, h](Graph& g) {
      const auto& go = g.node(t_out).grad;
      const auto& xv2 = g.node(x).value;
      const auto& kv2 = g.node(kernel).value;
      if (g.node(x).needs_grad) {
        auto& gx = g.grad_buf(x);
        for (int64_t t = 0; t < T; ++t)
          for (int64_t c = 0; c < C; ++c) {
            double d = go[t * C + c];
            if (d == 0.0) continue;
            for (int64_t j = 0; j < k; ++j) {
              int64_t u = t + h - j;
              if (u >= 0 && u < T) gx[u * C + c] += d * kv2[c * k + j];
            }
          }
      }
      if (g.node(kernel).needs_grad) {
        auto& gk = g.grad_buf(kernel);
        for (int64_t t = 0; t < T; ++t)
          for (int64_t c = 0; c < C; ++c) {
            double d = go[t * C + c];
            if (d == 0.0) continue;
            for (int64_t j = 0; j < k; ++j) {
              int64_t u = t + h - j;
              if (u >= 0 && u < T) gk[c * k + j] += d * xv2[u * C + c];
            }
          }
      }
      if (has_bias && g.node(bias).needs_grad) {
        auto& gb = g.grad_buf(bias);
        for (int64_t t = 0; t < T; ++t)
          for (int64_t c = 0; c < C; ++c) gb[c] += go[t * C + c];
      }
    };
  }
  return t_out;
}

Tensor Graph::conv2d_stride2(Tensor x, Tensor w, Tensor bias) {
  const Shape& sx = node(x).shape;
  const Shape& sw = node(w).shape;
  if (sx.size() != 3 || sw.size() != 4 || sw[1] != sx[0])
    throw std::invalid_argument("conv2d_stride2: input " + shape_str(sx) + " incompatible with weight " +
                                shape_str(sw) + " (want [Cin x H x W] and [Cout x Cin x kh x kw])");
  int64_t Cin = sx[0], H = sx[1], W = sx[2];
  int64_t Cout = sw[0], kh = sw[2], kw = sw[3];
  bool has_bias = bias.valid();
  if (has_bias && numel(node(bias).shape) != Cout)
    throw std::invalid_argument("conv2d_stride2: bias does not match output channels");
  int64_t Ho = H / 2, Wo = W / 2;  // zero pad bottom/right as needed
  const auto& xv = node(x).value;
  const auto& wv = node(w).value;
  std::vector<double> out(static_cast<size_t>(Cout * Ho * Wo), 0.0);
  for (int64_t o = 0; o < Cout; ++o)
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j) {
        double acc = has_bias ? node(bias).value[static_cast<size_t>(o)] : 0.0;
        for (int64_t c = 0; c < Cin; ++c)
          for (int64_t p = 0; p < kh; ++p) {
            int64_t u = 2 * i + p;
            if (u >= H) continue;
            for (int64_t q = 0; q < kw; ++q) {
              int64_t v = 2 * j + q;
              if (v >= W) continue;
              acc += wv[((o * Cin + c) * kh + p) * kw + q] * xv[(c * H + u) * W + v];
            }
          }
        out[(o * Ho + i) * Wo + j] = acc;
      }
  bool ng = node(x).needs_grad || node(w).needs_grad || (has_bias && node(bias).needs_grad);
  Tensor t = make_node({Cout, Ho, Wo}, std::move(out), ng, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, w, bias, has_bias, t, Cin, H, W, Cout, kh, kw, Ho, Wo](Graph& g) {
      const auto& go = g.node(t).grad;
      const auto& xv2 = g.node(x).value;
      const auto& wv2 = g.node(w).value;
      bool need_x = g.node(x).needs_grad;
      bool need_w = g.node(w).needs_grad;
      for (int64_t o = 0; o < Cout; ++o)
        for (int64_t i = 0; i < Ho; ++i)
          for (int64_t j = 0; j < Wo; ++j) {
            double d = go[(o * Ho + i) * Wo + j];
            if (d == 0.0) continue;
            for (int64_t c = 0; c < Cin; ++c)
              for (int64_t p = 0; p < kh; ++p) {
                int64_t u = 2 * i + p;
                if (u >= H) continue;
                for (int64_t q = 0; q < kw; ++q) {
                  int64_t v = 2 * j + q;
                  if (v >= W) continue;
                  if (need_x) g.grad_buf(x)[(c * H + u) * W + v] += d * wv2[((o * Cin + c) * kh + p) * kw + q];
                  if (need_w) g.grad_buf(w)[((o * Cin + c) * kh + p) * kw + q] += d * xv2[(c * H + u) * W + v];
                }
              }
          }
      if (has_bias && g.node(bias).needs_grad) {
        auto& gb = g.grad_buf(bias);
        for (int64_t o = 0; o < Cout; ++o)
          for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) gb[o] += go[(o * Ho + i) * Wo + j];
      }
    };
  }
  return t;
}

Tensor Graph::embedding(Tensor table, const std::vector<int>& ids) {
  const Shape& st = node(table).shape;
  if (st.size() != 2) throw std::invalid_argument("embedding: table must be 2-D, got " + shape_str(st));
  int64_t V = st[0], d = st[1];
  for (int id : ids)
    if (id < 0 || id >= V)
      throw std::invalid_argument("embedding: id " + std::to_string(id) + " out of range for table " + shape_str(st));
  int64_t n = static_cast<int64_t>(ids.size());
  const auto& tv = node(table).value;
  std::vector<double> out(static_cast<size_t>(n * d));
  for (int64_t r = 0; r < n; ++r)
    std::copy(tv.begin() + ids[static_cast<size_t>(r)] * d, tv.begin() + (ids[static_cast<size_t>(r)] + 1) * d,
              out.begin() + r * d);
  Tensor t = make_node({n, d}, std::move(out), node(table).needs_grad, nullptr);
  Node& nn = node(t);
  if (nn.needs_grad) {
    auto ids_c = ids;
    nn.backprop = [table, t, ids_c, d](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gt = g.grad_buf(table);
      for (size_t r = 0; r < ids_c.size(); ++r)
        for (int64_t c = 0; c < d; ++c) gt[ids_c[r] * d + c] += go[static_cast<int64_t>(r) * d + c];
    };
  }
  return t;
}

Tensor Graph::rel_position_bias(Tensor table, int64_t t_len, int64_t max_dist) {
  const Shape& st = node(table).shape;
  if (numel(st) != 2 * max_dist + 1)
    throw std::invalid_argument("rel_position_bias: table " + shape_str(st) + " must have 2*max_dist+1 = " +
                                std::to_string(2 * max_dist + 1) + " entries");
  const auto& tv = node(table).value;
  std::vector<double> out(static_cast<size_t>(t_len * t_len));
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t s = 0; s < t_len; ++s) {
      int64_t d = std::clamp(s - t, -max_dist, max_dist);
      out[t * t_len + s] = tv[static_cast<size_t>(d + max_dist)];
    }
  Tensor out_t = make_node({t_len, t_len}, std::move(out), node(table).needs_grad, nullptr);
  Node& n = node(out_t);
  if (n.needs_grad) {
    n.backprop = [table, out_t, t_len, max_dist](Graph& g) {
      const auto& go = g.node(out_t).grad;
      auto& gt = g.grad_buf(table);
      for (int64_t t = 0; t < t_len; ++t)
        for (int64_t s = 0; s < t_len; ++s) {
          int64_t d = std::clamp(s - t, -max_dist, max_dist);
          gt[static_cast<size_t>(d + max_dist)] += go[t * t_len + s];
        }
    };
  }
  return out_t;
}

Tensor Graph::masked_fill(Tensor x, const std::vector<uint8_t>& mask, double value) {
  const auto& xv = node(x).value;
  if (mask.size() != xv.size())
    throw std::invalid_argument("masked_fill: mask size " + std::to_string(mask.size()) +
                                " does not match tensor " + shape_str(node(x).shape));
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = mask[i] ? value : xv[i];
  Tensor t = make_node(node(x).shape, std::move(out), node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t, mask](Graph& g) {
      const auto& go = g.node(t).grad;
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < go.size(); ++i)
        if (!mask[i]) gx[i] += go[i];
    };
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reductions and losses

Tensor Graph::sum(Tensor x) {
  const auto& xv = node(x).value;
  double s = 0.0;
  for (double v : xv) s += v;
  Tensor t = make_node({1}, {s}, node(x).needs_grad, nullptr);
  Node& n = node(t);
  if (n.needs_grad) {
    n.backprop = [x, t](Graph& g) {
      double d = g.node(t).grad[0];
      auto& gx = g.grad_buf(x);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += d;
    };
  }
  return t;
}

Tensor Graph::mean(Tensor x) {
  int64_t n = numel(node(x).shape);
  return scale_const(sum(x), 1.0 / static_cast<double>(n));
}

Tensor Graph::cross_entropy(Tensor logits, const std::vector<int>& targets, double smoothing) {
  const Shape& s = node(logits).shape;
  if (s.size() != 2) throw std::invalid_argument("cross_entropy: logits must be 2-D, got " + shape_str(s));
  int64_t n = s[0], V = s[1];
  if (static_cast<int64_t>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(n) + " logit rows");
  if (smoothing < 0.0 || smoothing >= 1.0) throw std::invalid_argument("cross_entropy: smoothing must be in [0, 1)");
  for (int y : targets)
    if (y < 0 || y >= V) throw std::invalid_argument("cross_entropy: target " + std::to_string(y) + " out of range");
  const auto& lv = node(logits).value;
  double loss = 0.0;
  std::vector<double> logp(lv.size());
  for (int64_t r = 0; r < n; ++r) {
    double lse = log_sum_exp(lv.data() + r * V, V);
    double row = 0.0;
    for (int64_t c = 0; c < V; ++c) {
      logp[r * V + c] = lv[r * V + c] - lse;
      double q = smoothing / static_cast<double>(V) + (c == targets[static_cast<size_t>(r)] ? 1.0 - smoothing : 0.0);
      row -= q * logp[r * V + c];
    }
    loss += row;
  }
  loss /= static_cast<double>(n);
  Tensor t = make_node({1}, {loss}, node(logits).needs_grad, nullptr);
  Node& nn = node(t);
  if (nn.needs_grad) {
    auto tg = targets;
    nn.backprop = [logits, t, tg, smoothing, n, V, logp = std::move(logp)](Graph& g) {
      double d = g.node(t).grad[0] / static_cast<double>(n);
      auto& gl = g.grad_buf(logits);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < V; ++c) {
          double q = smoothing / static_cast<double>(V) + (c == tg[static_cast<size_t>(r)] ? 1.0 - smoothing : 0.0);
          gl[r * V + c] += d * (std::exp(logp[r * V + c]) - q);
        }
    };
  }
  return t;
}

int64_t ctc_min_frames(const std::vector<int>& targets) {
  int64_t n = static_cast<int64_t>(targets.size());
  for (size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++n;
  return n;
}

Tensor Graph::ctc_loss(Tensor log_probs, const std::vector<int>& targets, int blank) {
  const Shape& s = node(log_probs).shape;
  if (s.size() != 2) throw std::invalid_argument("ctc_loss: log_probs must be 2-D, got " + shape_str(s));
  int64_t T = s[0], V = s[1];
  if (targets.empty()) throw std::invalid_argument("ctc_loss: empty target");
  if (blank < 0 || blank >= V) throw std::invalid_argument("ctc_loss: blank id out of range");
  for (int y : targets)
    if (y < 0 || y >= V || y == blank)
      throw std::invalid_argument("ctc_loss: target symbol " + std::to_string(y) + " invalid");
  if (!ctc_admissible(T, targets))
    throw std::invalid_argument("ctc_loss: target needs at least " + std::to_string(ctc_min_frames(targets)) +
                                " frames, got " + std::to_string(T));

  int64_t U = static_cast<int64_t>(targets.size());
  int64_t S = 2 * U + 1;
  auto lab = [&](int64_t st) { return st % 2 == 0 ? blank : targets[static_cast<size_t>((st - 1) / 2)]; };
  const auto& lp = node(log_probs).value;

  std::vector<double> alpha(static_cast<size_t>(T * S), kNegInf);
  alpha[0] = lp[0 * V + blank];
  if (S > 1) alpha[1] = lp[0 * V + lab(1)];
  for (int64_t t = 1; t < T; ++t)
    for (int64_t st = 0; st < S; ++st) {
      double a = alpha[(t - 1) * S + st];
      if (st >= 1) a = log_add(a, alpha[(t - 1) * S + st - 1]);
      if (st >= 2 && lab(st) != blank && lab(st) != lab(st - 2)) a = log_add(a, alpha[(t - 1) * S + st - 2]);
      alpha[t * S + st] = a == kNegInf ? kNegInf : a + lp[t * V + lab(st)];
    }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);
  double loss = -log_p;

  Tensor t_out = make_node({1}, {loss}, node(log_probs).needs_grad, nullptr);
  Node& n = node(t_out);
  if (n.needs_grad) {
    auto tg = targets;
    n.backprop = [log_probs, t_out, tg, blank, T, V, S, log_p, alpha = std::move(alpha)](Graph& g) {
      auto lab2 = [&](int64_t st) { return st % 2 == 0 ? blank : tg[static_cast<size_t>((st - 1) / 2)]; };
      const auto& lp2 = g.node(log_probs).value;
      // beta excludes the emission at t, so alpha + beta is the full path mass
      std::vector<double> beta(static_cast<size_t>(T * S), kNegInf);
      beta[(T - 1) * S + S - 1] = 0.0;
      if (S > 1) beta[(T - 1) * S + S - 2] = 0.0;
      for (int64_t t = T - 2; t >= 0; --t)
        for (int64_t st = 0; st < S; ++st) {
          double b = beta[(t + 1) * S + st] + lp2[(t + 1) * V + lab2(st)];
          if (st + 1 < S) b = log_add(b, beta[(t + 1) * S + st + 1] + lp2[(t + 1) * V + lab2(st + 1)]);
          if (st + 2 < S && lab2(st + 2) != blank && lab2(st + 2) != lab2(st))
            b = log_add(b, beta[(t + 1) * S + st + 2] + lp2[(t + 1) * V + lab2(st + 2)]);
          beta[t * S + st] = b;
        }
      double d = g.node(t_out).grad[0];
      auto& gl = g.grad_buf(log_probs);
      std::vector<double> occ(static_cast<size_t>(V));
      for (int64_t t = 0; t < T; ++t) {
        std::fill(occ.begin(), occ.end(), kNegInf);
        for (int64_t st = 0; st < S; ++st) {
          double o = alpha[t * S + st] + beta[t * S + st];
          if (o != kNegInf) occ[static_cast<size_t>(lab2(st))] = log_add(occ[static_cast<size_t>(lab2(st))], o);
        }
        for (int64_t k = 0; k < V; ++k)
          if (occ[static_cast<size_t>(k)] != kNegInf)
            gl[t * V + k] += d * -std::exp(occ[static_cast<size_t>(k)] - log_p);
      }
    };
  }
  return t_out;
}

// ---------------------------------------------------------------------------
// Gradient checking

double grad_check(const std::function<Tensor(Graph&)>& build, const std::vector<ParamPtr>& params, double eps) {
  for (const auto& p : params) p->zero_grad();
  {
    Graph g;
    Tensor loss = build(g);
    g.backward(loss);
  }
  double max_rel = 0.0;
  for (const auto& p : params) {
    p->ensure_grad();
    for (size_t i = 0; i < p->value.size(); ++i) {
      double orig = p->value[i];
      p->value[i] = orig + eps;
      Graph g1(false);
      double f1 = g1.scalar(build(g1));
      p->value[i] = orig - eps;
      Graph g2(false);
      double f2 = g2.scalar(build(g2));
      p->value[i] = orig;
      double numeric = (f1 - f2) / (2.0 * eps);
      double analytic = p->grad[i];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace asrlab
