#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab {

// Raw float kernels shared by the tape and the no-tape inference paths.
// Reductions accumulate in double so values are stable enough for
// finite-difference checks.
namespace kern {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

inline CMap map(const Tensor& t) { return CMap(t.data.data(), t.rows(), t.cols()); }
inline MMap map(Tensor& t) { return MMap(t.data.data(), t.rows(), t.cols()); }

// out = a[m,k] * b[k,n]
inline void matmul(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree " + a.shape_str() + " vs " + b.shape_str());
  if (!accumulate) {
    out = Tensor({a.rows(), b.cols()});
    map(out).noalias() = map(a) * map(b);
  } else {
    map(out).noalias() += map(a) * map(b);
  }
}

// out = a[m,k] * b[n,k]^T
inline void matmul_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree " + a.shape_str() + " vs " + b.shape_str());
  if (!accumulate) {
    out = Tensor({a.rows(), b.rows()});
    map(out).noalias() = map(a) * map(b).transpose();
  } else {
    map(out).noalias() += map(a) * map(b).transpose();
  }
}

// out = a[k,m]^T * b[k,n]
inline void matmul_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: inner dimensions disagree " + a.shape_str() + " vs " + b.shape_str());
  if (!accumulate) {
    out = Tensor({a.cols(), b.cols()});
    map(out).noalias() = map(a).transpose() * map(b);
  } else {
    map(out).noalias() += map(a).transpose() * map(b);
  }
}

// Row-wise stable softmax. Max-subtraction keeps exp() in range for inputs
// of magnitude 1e4 and beyond.
inline void softmax_rows(const Tensor& x, Tensor& out) {
  require_matrix(x, "softmax_rows");
  out = Tensor(x.shape);
  const int m = x.rows(), n = x.cols();
  for (int i = 0; i < m; ++i) {
    const float* xi = x.row_ptr(i);
    float* oi = out.row_ptr(i);
    float mx = xi[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      float e = std::exp(xi[j] - mx);
      oi[j] = e;
      sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < n; ++j) oi[j] *= inv;
  }
}

constexpr float kLayerNormEps = 1e-5f;

// Per-row layer norm with affine gain/bias. Also returns the normalized
// values and inverse stddevs when the caller needs them for backward.
inline void layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Tensor& out,
                       Tensor* xhat_out = nullptr, std::vector<float>* inv_std_out = nullptr) {
  require_matrix(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n)
    throw ShapeError("layer_norm: gain/bias length must equal row width " + std::to_string(n));
  out = Tensor(x.shape);
  if (xhat_out) *xhat_out = Tensor(x.shape);
  if (inv_std_out) inv_std_out->assign(m, 0.0f);
  for (int i = 0; i < m; ++i) {
    const float* xi = x.row_ptr(i);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xi[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = xi[j] - mean;
      var += d * d;
    }
    var /= n;
    float inv_std = static_cast<float>(1.0 / std::sqrt(var + kLayerNormEps));
    float* oi = out.row_ptr(i);
    float* hi = xhat_out ? xhat_out->row_ptr(i) : nullptr;
    for (int j = 0; j < n; ++j) {
      float xh = (xi[j] - static_cast<float>(mean)) * inv_std;
      if (hi) hi[j] = xh;
      oi[j] = xh * gain.at(j) + bias.at(j);
    }
    if (inv_std_out) (*inv_std_out)[i] = inv_std;
  }
}

inline float gelu_scalar(float x) {
  const float c = 0.7978845608028654f;  // sqrt(2/pi)
  float inner = c * (x + 0.044715f * x * x * x);
  return 0.5f * x * (1.0f + std::tanh(inner));
}

inline float gelu_derivative(float x) {
  const float c = 0.7978845608028654f;
  float x2 = x * x;
  float inner = c * (x + 0.044715f * x * x2);
  float t = std::tanh(inner);
  float sech2 = 1.0f - t * t;
  return 0.5f * (1.0f + t) + 0.5f * x * sech2 * c * (1.0f + 3.0f * 0.044715f * x2);
}

// Mean negative log-likelihood in nats over all rows of logits [T,V].
inline float cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                           Tensor* softmax_cache = nullptr) {
  require_matrix(logits, "cross_entropy");
  const int t_len = logits.rows(), vocab = logits.cols();
  if (static_cast<int>(targets.size()) != t_len)
    throw ShapeError("cross_entropy: got " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(t_len) + " rows");
  Tensor probs;
  softmax_rows(logits, probs);
  double total = 0.0;
  for (int i = 0; i < t_len; ++i) {
    int tgt = targets[i];
    if (tgt < 0 || tgt >= vocab)
      throw ContractError("cross_entropy: target id " + std::to_string(tgt) +
                          " outside [0, " + std::to_string(vocab) + ")");
    total += -std::log(static_cast<double>(probs.at(i, tgt)) + 1e-45);
  }
  if (softmax_cache) *softmax_cache = std::move(probs);
  return static_cast<float>(total / t_len);
}

}  // namespace kern

// Reverse-mode autodiff over a linear tape of recorded operations. Nodes are
// appended in execution order, which is automatically a topological order, so
// backward() is a single reverse sweep that visits each node exactly once.
// One tape per training step; tapes are not shared across threads.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(const Tensor& t) { return push(t, {}, nullptr); }

  const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[check(id)].grad; }
  size_t size() const { return nodes_.size(); }

  NodeId add(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      t.accumulate(t.nodes_[id].inputs[0], g);
      t.accumulate(t.nodes_[id].inputs[1], g);
    });
  }

  // x[m,n] + row-broadcast bias[n]
  NodeId add_row(NodeId a, NodeId bias) {
    const Tensor& va = value(a);
    const Tensor& vb = value(bias);
    require_matrix(va, "add_row");
    if (vb.numel() != va.cols())
      throw ShapeError("add_row: bias length " + std::to_string(vb.numel()) +
                       " != row width " + std::to_string(va.cols()));
    Tensor out = va;
    for (int i = 0; i < va.rows(); ++i) {
      float* oi = out.row_ptr(i);
      for (int j = 0; j < va.cols(); ++j) oi[j] += vb.data[static_cast<size_t>(j)];
    }
    return push(std::move(out), {a, bias}, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      t.accumulate(t.nodes_[id].inputs[0], g);
      Tensor& gb = t.grad_ref(t.nodes_[id].inputs[1]);
      for (int i = 0; i < g.rows(); ++i) {
        const float* gi = g.row_ptr(i);
        for (int j = 0; j < g.cols(); ++j) gb.data[static_cast<size_t>(j)] += gi[j];
      }
    });
  }

  NodeId scale(NodeId a, float c) {
    Tensor out = value(a);
    for (float& x : out.data) x *= c;
    return push(std::move(out), {a}, [c](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
  }

  NodeId matmul(NodeId a, NodeId b) {
    Tensor out;
    kern::matmul(value(a), value(b), out);
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
      NodeId a = t.nodes_[id].inputs[0], b = t.nodes_[id].inputs[1];
      const Tensor& g = t.nodes_[id].grad;
      kern::matmul_nt(g, t.value(b), t.grad_ref(a), /*accumulate=*/true);
      kern::matmul_tn(t.value(a), g, t.grad_ref(b), /*accumulate=*/true);
    });
  }

  // a[m,k] * b[n,k]^T
  NodeId matmul_nt(NodeId a, NodeId b) {
    Tensor out;
    kern::matmul_nt(value(a), value(b), out);
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
      NodeId a = t.nodes_[id].inputs[0], b = t.nodes_[id].inputs[1];
      const Tensor& g = t.nodes_[id].grad;
      kern::matmul(g, t.value(b), t.grad_ref(a), /*accumulate=*/true);
      kern::matmul_tn(g, t.value(a), t.grad_ref(b), /*accumulate=*/true);
    });
  }

  NodeId slice_cols(NodeId a, int c0, int c1) {
    const Tensor& va = value(a);
    require_matrix(va, "slice_cols");
    if (c0 < 0 || c1 > va.cols() || c0 >= c1)
      throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                       ") for width " + std::to_string(va.cols()));
    Tensor out({va.rows(), c1 - c0});
    for (int i = 0; i < va.rows(); ++i)
      std::copy(va.row_ptr(i) + c0, va.row_ptr(i) + c1, out.row_ptr(i));
    return push(std::move(out), {a}, [c0, c1](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (int i = 0; i < g.rows(); ++i) {
        const float* gi = g.row_ptr(i);
        float* gai = ga.row_ptr(i);
        for (int j = c0; j < c1; ++j) gai[j] += gi[j - c0];
      }
    });
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    int rows = value(parts[0]).rows();
    int total = 0;
    for (NodeId p : parts) {
      require_matrix(value(p), "concat_cols");
      if (value(p).rows() != rows) throw ShapeError("concat_cols: row count mismatch");
      total += value(p).cols();
    }
    Tensor out({rows, total});
    int off = 0;
    for (NodeId p : parts) {
      const Tensor& vp = value(p);
      for (int i = 0; i < rows; ++i)
        std::copy(vp.row_ptr(i), vp.row_ptr(i) + vp.cols(), out.row_ptr(i) + off);
      off += vp.cols();
    }
    return push(std::move(out), parts, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      int off = 0;
      for (NodeId p : t.nodes_[id].inputs) {
        Tensor& gp = t.grad_ref(p);
        for (int i = 0; i < g.rows(); ++i) {
          const float* gi = g.row_ptr(i) + off;
          float* gpi = gp.row_ptr(i);
          for (int j = 0; j < gp.cols(); ++j) gpi[j] += gi[j];
        }
        off += gp.cols();
      }
    });
  }

  NodeId slice_rows(NodeId a, int r0, int r1) {
    const Tensor& va = value(a);
    require_matrix(va, "slice_rows");
    if (r0 < 0 || r1 > va.rows() || r0 >= r1)
      throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                       ") for " + std::to_string(va.rows()) + " rows");
    Tensor out({r1 - r0, va.cols()});
    std::copy(va.row_ptr(r0), va.row_ptr(r0) + out.numel(), out.data.data());
    return push(std::move(out), {a}, [r0](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (int i = 0; i < g.rows(); ++i) {
        const float* gi = g.row_ptr(i);
        float* gai = ga.row_ptr(i + r0);
        for (int j = 0; j < g.cols(); ++j) gai[j] += gi[j];
      }
    });
  }

  // Gather rows of an embedding table by token id; backward scatter-adds.
  NodeId embedding(NodeId table, const std::vector<int>& ids) {
    const Tensor& vt = value(table);
    require_matrix(vt, "embedding");
    Tensor out({static_cast<int>(ids.size()), vt.cols()});
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= vt.rows())
        throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside [0, " +
                            std::to_string(vt.rows()) + ")");
      std::copy(vt.row_ptr(ids[i]), vt.row_ptr(ids[i]) + vt.cols(),
                out.row_ptr(static_cast<int>(i)));
    }
    return push(std::move(out), {table}, [ids](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& gt = t.grad_ref(t.nodes_[id].inputs[0]);
      for (size_t i = 0; i < ids.size(); ++i) {
        const float* gi = g.row_ptr(static_cast<int>(i));
        float* gti = gt.row_ptr(ids[i]);
        for (int j = 0; j < g.cols(); ++j) gti[j] += gi[j];
      }
    });
  }

  // Additive causal mask over a square score matrix: entries with col > row
  // become a large negative constant, so downstream softmax zeroes them.
  NodeId causal_mask(NodeId a) {
    const Tensor& va = value(a);
    require_matrix(va, "causal_mask");
    if (va.rows() != va.cols()) throw ShapeError("causal_mask: expected square scores, got " + va.shape_str());
    Tensor out = va;
    for (int i = 0; i < va.rows(); ++i) {
      float* oi = out.row_ptr(i);
      for (int j = i + 1; j < va.cols(); ++j) oi[j] = -1e30f;
    }
    return push(std::move(out), {a}, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (int i = 0; i < g.rows(); ++i) {
        const float* gi = g.row_ptr(i);
        float* gai = ga.row_ptr(i);
        for (int j = 0; j <= i; ++j) gai[j] += gi[j];
      }
    });
  }

  NodeId softmax_rows(NodeId a) {
    Tensor out;
    kern::softmax_rows(value(a), out);
    return push(std::move(out), {a}, [](Tape& t, NodeId id) {
      const Tensor& y = t.nodes_[id].value;
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (int i = 0; i < y.rows(); ++i) {
        const float* yi = y.row_ptr(i);
        const float* gi = g.row_ptr(i);
        float* gai = ga.row_ptr(i);
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += static_cast<double>(gi[j]) * yi[j];
        for (int j = 0; j < y.cols(); ++j) gai[j] += yi[j] * (gi[j] - static_cast<float>(dot));
      }
    });
  }

  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias) {
    Tensor out, xhat;
    std::vector<float> inv_std;
    kern::layer_norm(value(x), value(gain), value(bias), out, &xhat, &inv_std);
    auto xh = std::make_shared<Tensor>(std::move(xhat));
    auto is = std::make_shared<std::vector<float>>(std::move(inv_std));
    return push(std::move(out), {x, gain, bias}, [xh, is](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& vg = t.value(t.nodes_[id].inputs[1]);
      Tensor& gx = t.grad_ref(t.nodes_[id].inputs[0]);
      Tensor& gg = t.grad_ref(t.nodes_[id].inputs[1]);
      Tensor& gb = t.grad_ref(t.nodes_[id].inputs[2]);
      const int m = g.rows(), n = g.cols();
      for (int i = 0; i < m; ++i) {
        const float* gi = g.row_ptr(i);
        const float* hi = xh->row_ptr(i);
        float* gxi = gx.row_ptr(i);
        double sum_dy = 0.0, sum_dy_h = 0.0;
        for (int j = 0; j < n; ++j) {
          float dyg = gi[j] * vg.data[static_cast<size_t>(j)];
          sum_dy += dyg;
          sum_dy_h += static_cast<double>(dyg) * hi[j];
          gg.data[static_cast<size_t>(j)] += gi[j] * hi[j];
          gb.data[static_cast<size_t>(j)] += gi[j];
        }
        float mean_dy = static_cast<float>(sum_dy / n);
        float mean_dy_h = static_cast<float>(sum_dy_h / n);
        float s = (*is)[i];
        for (int j = 0; j < n; ++j) {
          float dyg = gi[j] * vg.data[static_cast<size_t>(j)];
          gxi[j] += s * (dyg - mean_dy - hi[j] * mean_dy_h);
        }
      }
    });
  }

  NodeId gelu(NodeId a) {
    Tensor out = value(a);
    for (float& x : out.data) x = kern::gelu_scalar(x);
    return push(std::move(out), {a}, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& vx = t.value(t.nodes_[id].inputs[0]);
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += g.data[i] * kern::gelu_derivative(vx.data[i]);
    });
  }

  NodeId relu(NodeId a) {
    Tensor out = value(a);
    for (float& x : out.data) x = x > 0.0f ? x : 0.0f;
    return push(std::move(out), {a}, [](Tape& t, NodeId id) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& vx = t.value(t.nodes_[id].inputs[0]);
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (size_t i = 0; i < g.data.size(); ++i)
        if (vx.data[i] > 0.0f) ga.data[i] += g.data[i];
    });
  }

  // Mean NLL over rows; returns a scalar node.
  NodeId cross_entropy(NodeId logits, const std::vector<int>& targets) {
    Tensor probs;
    float loss = kern::cross_entropy(value(logits), targets, &probs);
    auto cache = std::make_shared<Tensor>(std::move(probs));
    Tensor out = Tensor::from({1}, {loss});
    return push(std::move(out), {logits}, [cache, targets](Tape& t, NodeId id) {
      float g = t.nodes_[id].grad.at(0);
      Tensor& gl = t.grad_ref(t.nodes_[id].inputs[0]);
      const int rows = cache->rows(), cols = cache->cols();
      float inv_t = g / static_cast<float>(rows);
      for (int i = 0; i < rows; ++i) {
        const float* pi = cache->row_ptr(i);
        float* gi = gl.row_ptr(i);
        for (int j = 0; j < cols; ++j) gi[j] += inv_t * pi[j];
        gi[targets[i]] -= inv_t;
      }
    });
  }

  // sum((a - b)^2) as a scalar node.
  NodeId sum_sq_diff(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "sum_sq_diff");
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    double s = 0.0;
    for (size_t i = 0; i < va.data.size(); ++i) {
      double d = static_cast<double>(va.data[i]) - vb.data[i];
      s += d * d;
    }
    Tensor out = Tensor::from({1}, {static_cast<float>(s)});
    return push(std::move(out), {a, b}, [](Tape& t, NodeId id) {
      float g = t.nodes_[id].grad.at(0);
      const Tensor& va = t.value(t.nodes_[id].inputs[0]);
      const Tensor& vb = t.value(t.nodes_[id].inputs[1]);
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      Tensor& gb = t.grad_ref(t.nodes_[id].inputs[1]);
      for (size_t i = 0; i < va.data.size(); ++i) {
        float d = 2.0f * (va.data[i] - vb.data[i]) * g;
        ga.data[i] += d;
        gb.data[i] -= d;
      }
    });
  }

  // sum(|a|) as a scalar node; subgradient 0 at 0.
  NodeId sum_abs(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (float x : va.data) s += std::fabs(static_cast<double>(x));
    Tensor out = Tensor::from({1}, {static_cast<float>(s)});
    return push(std::move(out), {a}, [](Tape& t, NodeId id) {
      float g = t.nodes_[id].grad.at(0);
      const Tensor& va = t.value(t.nodes_[id].inputs[0]);
      Tensor& ga = t.grad_ref(t.nodes_[id].inputs[0]);
      for (size_t i = 0; i < va.data.size(); ++i) {
        if (va.data[i] > 0.0f) ga.data[i] += g;
        else if (va.data[i] < 0.0f) ga.data[i] -= g;
      }
    });
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. Nodes not
  // on a path to the root keep zero gradients.
  void backward(NodeId loss) {
    if (value(loss).numel() != 1)
      throw ContractError("backward: root must be scalar, got shape " + value(loss).shape_str());
    for (auto& n : nodes_)
      if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    grad_ref(loss).at(0) = 1.0f;
    for (NodeId id = loss; id >= 0; --id) {
      if (nodes_[id].back) nodes_[id].back(*this, id);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Tensor value, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> back) {
    for (NodeId in : inputs) check(in);
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(back)});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId check(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw ContractError("tape: node id " + std::to_string(id) + " out of range");
    return id;
  }

  Tensor& grad_ref(NodeId id) {
    Node& n = nodes_[check(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  void accumulate(NodeId id, const Tensor& g) {
    Tensor& dst = grad_ref(id);
    for (size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace steerlab
