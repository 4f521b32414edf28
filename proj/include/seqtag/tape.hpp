#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/errors.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

// Reverse-mode autodiff over a linear tape of executed operations. A Tape is
// single-owner; independent tapes may run concurrently. Backward traverses
// nodes in reverse execution order once, accumulating gradients additively at
// shared inputs.
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(Array value) { return push(std::move(value), nullptr); }

  const Array& value(NodeId id) const { return nodes_[id].value; }
  const Array& grad(NodeId id) const { return nodes_[id].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  NodeId add(NodeId a, NodeId b) {
    require_same_shape("add", value(a), value(b));
    Array out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] += value(b)[i];
    return push(std::move(out), [a, b](Tape& t, NodeId o) {
      for (int i = 0; i < t.nodes_[o].grad.size(); ++i) {
        double g = t.nodes_[o].grad[i];
        t.nodes_[a].grad[i] += g;
        t.nodes_[b].grad[i] += g;
      }
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    require_same_shape("mul", value(a), value(b));
    Array out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
    return push(std::move(out), [a, b](Tape& t, NodeId o) {
      for (int i = 0; i < t.nodes_[o].grad.size(); ++i) {
        double g = t.nodes_[o].grad[i];
        t.nodes_[a].grad[i] += g * t.nodes_[b].value[i];
        t.nodes_[b].grad[i] += g * t.nodes_[a].value[i];
      }
    });
  }

  NodeId tanh(NodeId a) {
    Array out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    return push(std::move(out), [a](Tape& t, NodeId o) {
      for (int i = 0; i < t.nodes_[o].grad.size(); ++i) {
        double y = t.nodes_[o].value[i];
        t.nodes_[a].grad[i] += t.nodes_[o].grad[i] * (1.0 - y * y);
      }
    });
  }

  NodeId sigmoid(NodeId a) {
    Array out = value(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(out), [a](Tape& t, NodeId o) {
      for (int i = 0; i < t.nodes_[o].grad.size(); ++i) {
        double y = t.nodes_[o].value[i];
        t.nodes_[a].grad[i] += t.nodes_[o].grad[i] * y * (1.0 - y);
      }
    });
  }

  // (m x k) * (k x n) -> (m x n)
  NodeId matmul(NodeId a, NodeId b) {
    const Array& A = value(a);
    const Array& B = value(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
      throw ShapeError("matmul: incompatible shapes " + A.shape_string() +
                       " vs " + B.shape_string());
    int m = A.rows(), k = A.cols(), n = B.cols();
    Array out({m, n});
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double av = A(i, p);
        for (int j = 0; j < n; ++j) out(i, j) += av * B(p, j);
      }
    return push(std::move(out), [a, b, m, k, n](Tape& t, NodeId o) {
      const Array& G = t.nodes_[o].grad;
      const Array& A = t.nodes_[a].value;
      const Array& B = t.nodes_[b].value;
      Array& dA = t.nodes_[a].grad;
      Array& dB = t.nodes_[b].grad;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double g = G(i, j);
          for (int p = 0; p < k; ++p) {
            dA(i, p) += g * B(p, j);
            dB(p, j) += g * A(i, p);
          }
        }
    });
  }

  // (r x c) * (c) -> (r)
  NodeId matvec(NodeId m, NodeId v) {
    const Array& M = value(m);
    const Array& V = value(v);
    if (M.ndim() != 2 || V.ndim() != 1 || M.cols() != V.size())
      throw ShapeError("matvec: incompatible shapes " + M.shape_string() +
                       " vs " + V.shape_string());
    int r = M.rows(), c = M.cols();
    Array out({r});
    for (int i = 0; i < r; ++i) {
      double s = 0.0;
      const double* row = M.data.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) s += row[j] * V[j];
      out[i] = s;
    }
    return push(std::move(out), [m, v, r, c](Tape& t, NodeId o) {
      const Array& G = t.nodes_[o].grad;
      const Array& M = t.nodes_[m].value;
      const Array& V = t.nodes_[v].value;
      Array& dM = t.nodes_[m].grad;
      Array& dV = t.nodes_[v].grad;
      for (int i = 0; i < r; ++i) {
        double g = G[i];
        for (int j = 0; j < c; ++j) {
          dM(i, j) += g * V[j];
          dV[j] += g * M(i, j);
        }
      }
    });
  }

  NodeId concat(const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int nd = value(parts[0]).ndim();
    if (axis < 0 || axis >= nd)
      throw ShapeError("concat: axis " + std::to_string(axis) +
                       " out of range for rank " + std::to_string(nd));
    std::vector<int> out_shape = value(parts[0]).shape;
    out_shape[axis] = 0;
    for (NodeId p : parts) {
      const Array& v = value(p);
      if (v.ndim() != nd)
        throw ShapeError("concat: rank mismatch across inputs");
      for (int d = 0; d < nd; ++d)
        if (d != axis && v.shape[d] != out_shape[d])
          throw ShapeError("concat: shape mismatch " + v.shape_string());
      out_shape[axis] += v.shape[axis];
    }
    Array out(out_shape);
    // Treat each input as (outer, axis_extent, inner) and copy blocks.
    int offset = 0;
    for (NodeId p : parts) {
      const Array& v = value(p);
      int outer = 1, inner = 1;
      for (int d = 0; d < axis; ++d) outer *= v.shape[d];
      for (int d = axis + 1; d < nd; ++d) inner *= v.shape[d];
      int ext = v.shape[axis];
      for (int u = 0; u < outer; ++u)
        for (int e = 0; e < ext; ++e)
          for (int in = 0; in < inner; ++in)
            out.data[(static_cast<size_t>(u) * out_shape[axis] + offset + e) *
                         inner +
                     in] = v.data[(static_cast<size_t>(u) * ext + e) * inner + in];
      offset += ext;
    }
    std::vector<NodeId> ps = parts;
    int total = out_shape[axis];
    return push(std::move(out), [ps, axis, nd, total](Tape& t, NodeId o) {
      const Array& G = t.nodes_[o].grad;
      int offset = 0;
      for (NodeId p : ps) {
        Array& dP = t.nodes_[p].grad;
        const Array& v = t.nodes_[p].value;
        int outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= v.shape[d];
        for (int d = axis + 1; d < nd; ++d) inner *= v.shape[d];
        int ext = v.shape[axis];
        for (int u = 0; u < outer; ++u)
          for (int e = 0; e < ext; ++e)
            for (int in = 0; in < inner; ++in)
              dP.data[(static_cast<size_t>(u) * ext + e) * inner + in] +=
                  G.data[(static_cast<size_t>(u) * total + offset + e) * inner +
                         in];
        offset += ext;
      }
    });
  }

  NodeId slice(NodeId a, int axis, int start, int len) {
    const Array& v = value(a);
    int nd = v.ndim();
    if (axis < 0 || axis >= nd || start < 0 || len <= 0 ||
        start + len > v.shape[axis])
      throw ShapeError("slice: range [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") invalid for axis " +
                       std::to_string(axis) + " of " + v.shape_string());
    std::vector<int> out_shape = v.shape;
    out_shape[axis] = len;
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= v.shape[d];
    for (int d = axis + 1; d < nd; ++d) inner *= v.shape[d];
    int ext = v.shape[axis];
    Array out(out_shape);
    for (int u = 0; u < outer; ++u)
      for (int e = 0; e < len; ++e)
        for (int in = 0; in < inner; ++in)
          out.data[(static_cast<size_t>(u) * len + e) * inner + in] =
              v.data[(static_cast<size_t>(u) * ext + start + e) * inner + in];
    return push(std::move(out),
                [a, start, len, outer, inner, ext](Tape& t, NodeId o) {
                  const Array& G = t.nodes_[o].grad;
                  Array& dA = t.nodes_[a].grad;
                  for (int u = 0; u < outer; ++u)
                    for (int e = 0; e < len; ++e)
                      for (int in = 0; in < inner; ++in)
                        dA.data[(static_cast<size_t>(u) * ext + start + e) *
                                    inner +
                                in] +=
                            G.data[(static_cast<size_t>(u) * len + e) * inner +
                                   in];
                });
  }

  // Max-shifted log-sum-exp. 1-D input reduces to a scalar (shape {1});
  // 2-D input reduces along `axis`.
  NodeId logsumexp(NodeId a, int axis = 0) {
    const Array& v = value(a);
    if (v.ndim() == 1) {
      Array out({1});
      out[0] = logsumexp_raw(v.data.data(), v.size(), 1);
      return push(std::move(out), [a](Tape& t, NodeId o) {
        double lse = t.nodes_[o].value[0];
        double g = t.nodes_[o].grad[0];
        const Array& v = t.nodes_[a].value;
        Array& dA = t.nodes_[a].grad;
        for (int i = 0; i < v.size(); ++i)
          dA[i] += g * std::exp(v[i] - lse);
      });
    }
    if (v.ndim() != 2 || (axis != 0 && axis != 1))
      throw ShapeError("logsumexp: unsupported input " + v.shape_string() +
                       " axis " + std::to_string(axis));
    int r = v.rows(), c = v.cols();
    int out_len = axis == 0 ? c : r;
    Array out({out_len});
    if (axis == 1) {
      for (int i = 0; i < r; ++i)
        out[i] = logsumexp_raw(v.data.data() + static_cast<size_t>(i) * c, c, 1);
    } else {
      for (int j = 0; j < c; ++j)
        out[j] = logsumexp_raw(v.data.data() + j, r, c);
    }
    return push(std::move(out), [a, axis, r, c](Tape& t, NodeId o) {
      const Array& v = t.nodes_[a].value;
      const Array& L = t.nodes_[o].value;
      const Array& G = t.nodes_[o].grad;
      Array& dA = t.nodes_[a].grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          int k = axis == 1 ? i : j;
          dA(i, j) += G[k] * std::exp(v(i, j) - L[k]);
        }
    });
  }

  // Mask-based dropout: the mask (entries 0 or 1/(1-rate)) is built by the
  // caller and recorded, so forward and backward apply the same pattern.
  NodeId dropout(NodeId a, Array mask) {
    require_same_shape("dropout", value(a), mask);
    Array out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] *= mask[i];
    auto m = std::make_shared<Array>(std::move(mask));
    return push(std::move(out), [a, m](Tape& t, NodeId o) {
      for (int i = 0; i < t.nodes_[o].grad.size(); ++i)
        t.nodes_[a].grad[i] += t.nodes_[o].grad[i] * (*m)[i];
    });
  }

  // Gather rows of a 2-D table; backward scatter-adds into the table.
  NodeId gather_rows(NodeId table, std::vector<int> rows) {
    const Array& T = value(table);
    if (T.ndim() != 2) throw ShapeError("gather_rows: table must be 2-D");
    int c = T.cols();
    Array out({static_cast<int>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= T.rows())
        throw ShapeError("gather_rows: row " + std::to_string(rows[i]) +
                         " out of range for " + T.shape_string());
      for (int j = 0; j < c; ++j) out(static_cast<int>(i), j) = T(rows[i], j);
    }
    auto r = std::make_shared<std::vector<int>>(std::move(rows));
    return push(std::move(out), [table, r, c](Tape& t, NodeId o) {
      const Array& G = t.nodes_[o].grad;
      Array& dT = t.nodes_[table].grad;
      for (size_t i = 0; i < r->size(); ++i)
        for (int j = 0; j < c; ++j)
          dT((*r)[i], j) += G(static_cast<int>(i), j);
    });
  }

  // One row of a 2-D table as a vector.
  NodeId row(NodeId a, int i) {
    const Array& v = value(a);
    if (v.ndim() != 2 || i < 0 || i >= v.rows())
      throw ShapeError("row: index " + std::to_string(i) + " invalid for " +
                       v.shape_string());
    int c = v.cols();
    Array out({c});
    for (int j = 0; j < c; ++j) out[j] = v(i, j);
    return push(std::move(out), [a, i, c](Tape& t, NodeId o) {
      for (int j = 0; j < c; ++j)
        t.nodes_[a].grad(i, j) += t.nodes_[o].grad[j];
    });
  }

  // Stack equal-length vectors into a matrix, one per row.
  NodeId stack_rows(const std::vector<NodeId>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    int c = value(rows[0]).size();
    for (NodeId r : rows)
      if (value(r).ndim() != 1 || value(r).size() != c)
        throw ShapeError("stack_rows: inputs must be equal-length vectors");
    Array out({static_cast<int>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < c; ++j) out(static_cast<int>(i), j) = value(rows[i])[j];
    std::vector<NodeId> rs = rows;
    return push(std::move(out), [rs, c](Tape& t, NodeId o) {
      const Array& G = t.nodes_[o].grad;
      for (size_t i = 0; i < rs.size(); ++i)
        for (int j = 0; j < c; ++j)
          t.nodes_[rs[i]].grad[j] += G(static_cast<int>(i), j);
    });
  }

  NodeId sum_all(NodeId a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    return push(Array::scalar(s), [a](Tape& t, NodeId o) {
      double g = t.nodes_[o].grad[0];
      for (int i = 0; i < t.nodes_[a].grad.size(); ++i)
        t.nodes_[a].grad[i] += g;
    });
  }

  // Backward from a scalar output, seeded with 1.
  void backward(NodeId root) {
    if (value(root).size() != 1)
      throw ShapeError("backward: default seed requires a scalar output");
    backward(root, Array::scalar(1.0));
  }

  void backward(NodeId root, const Array& seed) {
    require_same_shape("backward seed", value(root), seed);
    for (auto& n : nodes_) {
      n.grad = Array(n.value.shape);
    }
    nodes_[root].grad = seed;
    for (int i = root; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

  static double logsumexp_raw(const double* v, int n, int stride) {
    double m = v[0];
    for (int i = 1; i < n; ++i) m = std::max(m, v[static_cast<size_t>(i) * stride]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[static_cast<size_t>(i) * stride] - m);
    return m + std::log(s);
  }

 private:
  struct Node {
    Array value;
    Array grad;
    std::function<void(Tape&, NodeId)> back;
  };

  NodeId push(Array value, std::function<void(Tape&, NodeId)> back) {
    nodes_.push_back(Node{std::move(value), Array(), std::move(back)});
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

inline Array make_dropout_mask(Rng& rng, const std::vector<int>& shape,
                               double rate) {
  Array m = Array::full(shape, 1.0);
  if (rate <= 0.0) return m;
  double keep = 1.0 - rate;
  for (double& v : m.data) v = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return m;
}

// A scalar function paired with its analytic gradient, as needed by
// grad_check and the kernel test harness.
struct DiffFunction {
  std::function<double(const Array&)> value;
  std::function<Array(const Array&)> gradient;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const DiffFunction& f, const Array& point, double h) {
  Array analytic = f.gradient(point);
  require_same_shape("grad_check", analytic, point);
  double worst = 0.0;
  Array p = point;
  for (int i = 0; i < p.size(); ++i) {
    double orig = p[i];
    p[i] = orig + h;
    double up = f.value(p);
    p[i] = orig - h;
    double down = f.value(p);
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("grad_check: non-finite evaluation at coordinate " +
                         std::to_string(i));
    double fd = (up - down) / (2.0 * h);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace seqtag
