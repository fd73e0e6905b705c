#pragma once

#include <Eigen/Core>

#include <functional>
#include <utility>
#include <vector>

#include "objfield/errors.hpp"
#include "objfield/parallel.hpp"
#include "objfield/tensor.hpp"

namespace objfield {

// Minimal reverse-mode tape over a fixed operator set: matrix multiply,
// elementwise add/mul, exp, sigmoid, softmax, reductions, plus custom nodes
// registered by the hash grid and the renderer. Creation order is a
// topological order, so backward is one reverse sweep.
//
// A tape lives for one forward/backward pass; parameter gradients accumulate
// into the ParamBlocks referenced by the ops.
template <class S>
class Tape {
 public:
  using Var = int;
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<EMat>;
  using MapC = Eigen::Map<const EMat>;

  Var constant(Tensor<S> t) { return add_node(std::move(t), false, nullptr); }

  // Differentiable non-parameter input (used by oracles and tests).
  Var input(Tensor<S> t) { return add_node(std::move(t), true, nullptr); }

  Var add_node(Tensor<S> val, bool needs_grad, std::function<void(Tape&, Var)> backward) {
    nodes_.push_back(Node{std::move(val), Tensor<S>{}, std::move(backward), needs_grad});
    return static_cast<Var>(nodes_.size()) - 1;
  }

  Tensor<S>& val(Var v) { return nodes_[v].val; }
  const Tensor<S>& val(Var v) const { return nodes_[v].val; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }

  // Gradient buffer, allocated with zeros on first touch.
  Tensor<S>& grad(Var v) {
    Node& n = nodes_[v];
    if (n.grad.size() == 0) n.grad = Tensor<S>(n.val.rows, n.val.cols);
    return n.grad;
  }
  bool has_grad(Var v) const { return nodes_[v].grad.size() != 0; }

  void backward(Var loss) {
    if (val(loss).size() != 1) throw InputDomainError("backward expects a scalar loss");
    grad(loss).v[0] = S(1);
    for (Var v = loss; v >= 0; --v) {
      Node& n = nodes_[v];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, v);
    }
  }

  // ---- built-in ops ----

  // y = x * W (+ b). W row-major (in x out) in a ParamBlock; b has out entries.
  Var linear(Var x, ParamBlock<S>& W, ParamBlock<S>* b, int64_t in, int64_t out) {
    const Tensor<S>& xv = val(x);
    if (xv.cols != in || W.value.size() != static_cast<size_t>(in * out))
      throw InputDomainError("linear: dimension mismatch");
    Tensor<S> y(xv.rows, out);
    MapC wm(W.value.data(), in, out);
    gemm_rows(xv, [&](MapC xb, MapM yb) { yb.noalias() = xb * wm; }, y);
    if (b) {
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bv(b->value.data(), out);
      MapM ym(y.v.data(), y.rows, y.cols);
      ym.rowwise() += bv;
    }
    bool ng = !W.frozen || needs_grad(x);
    ParamBlock<S>* wp = &W;
    return add_node(std::move(y), ng, [x, wp, b, in, out](Tape& t, Var self) {
      const Tensor<S>& g = t.grad(self);
      const Tensor<S>& xv = t.val(x);
      MapC wm(wp->value.data(), in, out);
      if (t.needs_grad(x)) {
        Tensor<S>& gx = t.grad(x);
        gemm_rows(g, [&](MapC gb, MapM gxb) { gxb.noalias() += gb * wm.transpose(); }, gx);
      }
      if (!wp->frozen) {
        accumulate_gemm_tn(xv, g, wp->grad);
        if (b) {
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(b->grad.data(), out);
          MapC gm(g.v.data(), g.rows, g.cols);
          gb += gm.colwise().sum();
        }
      }
    });
  }

  Var relu(Var x) {
    Tensor<S> y = val(x);
    for (S& v : y.v) v = v > S(0) ? v : S(0);
    return unary(x, std::move(y), [](Tape& t, Var x, Var self) {
      const Tensor<S>& g = t.grad(self);
      const Tensor<S>& xv = t.val(x);
      Tensor<S>& gx = t.grad(x);
      for (int64_t i = 0; i < g.size(); ++i)
        if (xv.v[i] > S(0)) gx.v[i] += g.v[i];
    });
  }

  Var sigmoid(Var x) {
    Tensor<S> y = val(x);
    for (S& v : y.v) v = S(1) / (S(1) + std::exp(-v));
    return unary(x, std::move(y), [](Tape& t, Var x, Var self) {
      const Tensor<S>& g = t.grad(self);
      const Tensor<S>& yv = t.val(self);
      Tensor<S>& gx = t.grad(x);
      for (int64_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * yv.v[i] * (S(1) - yv.v[i]);
    });
  }

  // exp with an upper clamp; gradient is zero on the clamped branch.
  Var exp_clamped(Var x, S hi) {
    Tensor<S> y = val(x);
    for (S& v : y.v) {
      v = std::exp(v);
      if (v > hi) v = hi;
    }
    return unary(x, std::move(y), [hi](Tape& t, Var x, Var self) {
      const Tensor<S>& g = t.grad(self);
      const Tensor<S>& yv = t.val(self);
      Tensor<S>& gx = t.grad(x);
      for (int64_t i = 0; i < g.size(); ++i)
        if (yv.v[i] < hi) gx.v[i] += g.v[i] * yv.v[i];
    });
  }

  Var softmax_rows(Var x) {
    Tensor<S> y = val(x);
    for (int64_t r = 0; r < y.rows; ++r) {
      S* row = y.v.data() + r * y.cols;
      S mx = row[0];
      for (int64_t c = 1; c < y.cols; ++c) mx = std::max(mx, row[c]);
      S sum = S(0);
      for (int64_t c = 0; c < y.cols; ++c) {
        row[c] = std::exp(row[c] - mx);
        sum += row[c];
      }
      for (int64_t c = 0; c < y.cols; ++c) row[c] /= sum;
    }
    return unary(x, std::move(y), [](Tape& t, Var x, Var self) {
      const Tensor<S>& g = t.grad(self);
      const Tensor<S>& yv = t.val(self);
      Tensor<S>& gx = t.grad(x);
      for (int64_t r = 0; r < g.rows; ++r) {
        const S* gr = g.v.data() + r * g.cols;
        const S* yr = yv.v.data() + r * g.cols;
        S dot = S(0);
        for (int64_t c = 0; c < g.cols; ++c) dot += gr[c] * yr[c];
        S* gxr = gx.v.data() + r * g.cols;
        for (int64_t c = 0; c < g.cols; ++c) gxr[c] += yr[c] * (gr[c] - dot);
      }
    });
  }

  Var add(Var a, Var b) { return binary_ew(a, b, [](S x, S y) { return x + y; }, S(1), S(1)); }
  Var sub(Var a, Var b) { return binary_ew(a, b, [](S x, S y) { return x - y; }, S(1), S(-1)); }

  Var hadamard(Var a, Var b) {
    const Tensor<S>&av = val(a), &bv = val(b);
    if (!av.same_shape(bv)) throw InputDomainError("hadamard: shape mismatch");
    Tensor<S> y(av.rows, av.cols);
    for (int64_t i = 0; i < y.size(); ++i) y.v[i] = av.v[i] * bv.v[i];
    bool ng = needs_grad(a) || needs_grad(b);
    return add_node(std::move(y), ng, [a, b](Tape& t, Var self) {
      const Tensor<S>& g = t.grad(self);
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        const Tensor<S>& bv = t.val(b);
        for (int64_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * bv.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        const Tensor<S>& av = t.val(a);
        for (int64_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * av.v[i];
      }
    });
  }

  Var scale(Var a, S c) {
    Tensor<S> y = val(a);
    for (S& v : y.v) v *= c;
    return unary(a, std::move(y), [c](Tape& t, Var a, Var self) {
      const Tensor<S>& g = t.grad(self);
      Tensor<S>& ga = t.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.v[i] += c * g.v[i];
    });
  }

  Var concat_cols(Var a, Var b) {
    const Tensor<S>&av = val(a), &bv = val(b);
    if (av.rows != bv.rows) throw InputDomainError("concat_cols: row mismatch");
    Tensor<S> y(av.rows, av.cols + bv.cols);
    for (int64_t r = 0; r < y.rows; ++r) {
      std::copy_n(av.v.data() + r * av.cols, av.cols, y.v.data() + r * y.cols);
      std::copy_n(bv.v.data() + r * bv.cols, bv.cols, y.v.data() + r * y.cols + av.cols);
    }
    bool ng = needs_grad(a) || needs_grad(b);
    return add_node(std::move(y), ng, [a, b](Tape& t, Var self) {
      const Tensor<S>& g = t.grad(self);
      int64_t ac = t.val(a).cols, bc = t.val(b).cols;
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        for (int64_t r = 0; r < g.rows; ++r)
          for (int64_t c = 0; c < ac; ++c) ga(r, c) += g(r, c);
      }
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        for (int64_t r = 0; r < g.rows; ++r)
          for (int64_t c = 0; c < bc; ++c) gb(r, c) += g(r, ac + c);
      }
    });
  }

  // Columns [c0, c1) of x.
  Var slice_cols(Var x, int64_t c0, int64_t c1) {
    const Tensor<S>& xv = val(x);
    Tensor<S> y(xv.rows, c1 - c0);
    for (int64_t r = 0; r < y.rows; ++r)
      std::copy_n(xv.v.data() + r * xv.cols + c0, c1 - c0, y.v.data() + r * y.cols);
    return unary(x, std::move(y), [c0, c1](Tape& t, Var x, Var self) {
      const Tensor<S>& g = t.grad(self);
      Tensor<S>& gx = t.grad(x);
      for (int64_t r = 0; r < g.rows; ++r)
        for (int64_t c = 0; c < c1 - c0; ++c) gx(r, c0 + c) += g(r, c);
    });
  }

  Var sum_all(Var x) {
    S s = S(0);
    for (S v : val(x).v) s += v;
    Tensor<S> y(1, 1);
    y.v[0] = s;
    return unary(x, std::move(y), [](Tape& t, Var x, Var self) {
      S g = t.grad(self).v[0];
      Tensor<S>& gx = t.grad(x);
      for (int64_t i = 0; i < gx.size(); ++i) gx.v[i] += g;
    });
  }

  Var mean_all(Var x) { return scale(sum_all(x), S(1) / static_cast<S>(val(x).size())); }

  Var sum_squares(Var x) {
    const Tensor<S>& xv = val(x);
    S s = S(0);
    for (S v : xv.v) s += v * v;
    Tensor<S> y(1, 1);
    y.v[0] = s;
    return unary(x, std::move(y), [](Tape& t, Var x, Var self) {
      S g = t.grad(self).v[0];
      const Tensor<S>& xv = t.val(x);
      Tensor<S>& gx = t.grad(x);
      for (int64_t i = 0; i < gx.size(); ++i) gx.v[i] += S(2) * g * xv.v[i];
    });
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> val;
    Tensor<S> grad;
    std::function<void(Tape&, Var)> backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;

  template <class F>
  Var unary(Var x, Tensor<S> y, F&& back) {
    bool ng = needs_grad(x);
    return add_node(std::move(y), ng, [x, back = std::forward<F>(back)](Tape& t, Var self) {
      if (t.needs_grad(x)) back(t, x, self);
    });
  }

  template <class F>
  Var binary_ew(Var a, Var b, F&& fwd, S da, S db) {
    const Tensor<S>&av = val(a), &bv = val(b);
    if (!av.same_shape(bv)) throw InputDomainError("elementwise op: shape mismatch");
    Tensor<S> y(av.rows, av.cols);
    for (int64_t i = 0; i < y.size(); ++i) y.v[i] = fwd(av.v[i], bv.v[i]);
    bool ng = needs_grad(a) || needs_grad(b);
    return add_node(std::move(y), ng, [a, b, da, db](Tape& t, Var self) {
      const Tensor<S>& g = t.grad(self);
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) ga.v[i] += da * g.v[i];
      }
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        for (int64_t i = 0; i < g.size(); ++i) gb.v[i] += db * g.v[i];
      }
    });
  }

  // Row-partitioned GEMM; fixed partition count keeps results independent of
  // the worker count.
  template <class F>
  static void gemm_rows(const Tensor<S>& x, F&& body, Tensor<S>& y) {
    parallel_ranges(x.rows, kScatterPartitions, [&](int, int64_t b, int64_t e) {
      MapC xb(x.v.data() + b * x.cols, e - b, x.cols);
      MapM yb(y.v.data() + b * y.cols, e - b, y.cols);
      body(xb, yb);
    });
  }

  // dW += x^T * g with per-partition partials reduced in partition order.
  static void accumulate_gemm_tn(const Tensor<S>& x, const Tensor<S>& g, std::vector<S>& dw) {
    auto ranges = static_partition(x.rows, kScatterPartitions);
    int nr = static_cast<int>(ranges.size());
    std::vector<EMat> partials(nr);
#pragma omp parallel for schedule(dynamic, 1) num_threads(num_threads())
    for (int r = 0; r < nr; ++r) {
      MapC xb(x.v.data() + ranges[r].begin * x.cols, ranges[r].end - ranges[r].begin, x.cols);
      MapC gb(g.v.data() + ranges[r].begin * g.cols, ranges[r].end - ranges[r].begin, g.cols);
      partials[r].noalias() = xb.transpose() * gb;
    }
    MapM dwm(dw.data(), x.cols, g.cols);
    for (int r = 0; r < nr; ++r) dwm += partials[r];
  }
};

}  // namespace objfield
