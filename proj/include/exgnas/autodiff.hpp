#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "exgnas/tensor.hpp"

namespace exgnas {

/// A trainable tensor owned outside the tape, with Adam moment buffers.
struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  explicit Parameter(Matrix v)
      : value(std::move(v)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// recording order is already a topological order for the backward sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to an external parameter; backward() adds into p.grad.
  Var parameter(Parameter& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  /// Records a result computed from `inputs`. `backward` reads grad(result)
  /// and accumulates into the grads of inputs that require them.
  Var record(Matrix value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  Matrix& grad(Var v) { return nodes_[v.id].grad; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Backward sweep from a 1x1 output seeded with 1.
  void backward(Var out) {
    const auto& val = value(out);
    if (val.rows() != 1 || val.cols() != 1) throw DimensionError("backward", val.rows(), val.cols(), 1, 1);
    backward(out, Matrix(1, 1, 1.0));
  }

  void backward(Var out, const Matrix& seed) {
    if (!seed.same_shape(value(out)))
      throw DimensionError("backward seed", seed.rows(), seed.cols(), value(out).rows(), value(out).cols());
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
    if (!nodes_[out.id].requires_grad) return;
    nodes_[out.id].grad = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward) n.backward(*this);
    }
    for (auto& n : nodes_) {
      if (!n.param) continue;
      auto& dst = n.param->grad.data();
      const auto& src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), nullptr, requires_grad});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

namespace ops {

namespace detail {

inline void check_same(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw DimensionError(op, b.rows(), b.cols(), a.rows(), a.cols());
}

inline void add_into(Matrix& dst, const Matrix& src) {
  auto& d = dst.data();
  const auto& s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Elementwise map whose derivative is expressed through input x and output y.
template <typename F, typename DF>
Var unary(Var x, F f, DF df) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Var in[] = {x};
  std::size_t self = t.size();
  return t.record(std::move(out), in, [x, self, df](Tape& tp) {
    if (!tp.requires_grad(x)) return;
    const Matrix& xv = tp.value(x);
    const Matrix& yv = tp.value(Var{&tp, self});
    const Matrix& gy = tp.grad(Var{&tp, self});
    Matrix& gx = tp.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) throw DimensionError("matmul", bv.rows(), bv.cols(), av.cols(), bv.cols());
  Matrix out(av.rows(), bv.cols());
  gemm(av, false, bv, false, out, false);
  Var in[] = {a, b};
  std::size_t self = t.size();
  return t.record(std::move(out), in, [a, b, self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.requires_grad(a)) gemm(g, false, tp.value(b), true, tp.grad(a), true);
    if (tp.requires_grad(b)) gemm(tp.value(a), true, g, false, tp.grad(b), true);
  });
}

/// S * x for a constant sparse matrix. `s` must outlive the tape.
inline Var spmm(const CsrMatrix& s, Var x) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  if (s.cols != xv.rows()) throw DimensionError("spmm", xv.rows(), xv.cols(), s.cols, xv.cols());
  Matrix out(s.rows, xv.cols());
  spmm_into(s, xv, out, false);
  Var in[] = {x};
  std::size_t self = t.size();
  const CsrMatrix* sp = &s;
  return t.record(std::move(out), in, [x, self, sp](Tape& tp) {
    if (tp.requires_grad(x)) spmm_transposed_into(*sp, tp.grad(Var{&tp, self}), tp.grad(x));
  });
}

/// out[u] = sum_e w[e] * x[col[e]] over the stored pattern of `s`; w is nnz x 1.
/// The values stored in `s` are ignored.
inline Var spmm_values(const CsrMatrix& s, Var w, Var x) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(w);
  if (s.cols != xv.rows()) throw DimensionError("spmm_values", xv.rows(), xv.cols(), s.cols, xv.cols());
  if (wv.rows() != s.nnz() || wv.cols() != 1) throw DimensionError("spmm_values", wv.rows(), wv.cols(), s.nnz(), 1);
  const std::size_t k = xv.cols();
  Matrix out(s.rows, k);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e)
      for (std::size_t j = 0; j < k; ++j) out(r, j) += wv[e] * xv(s.col_idx[e], j);
  Var in[] = {w, x};
  std::size_t self = t.size();
  const CsrMatrix* sp = &s;
  return t.record(std::move(out), in, [w, x, self, sp](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& xv = tp.value(x);
    const Matrix& wv = tp.value(w);
    const std::size_t k = xv.cols();
    const bool gw = tp.requires_grad(w), gx = tp.requires_grad(x);
    for (std::size_t r = 0; r < sp->rows; ++r)
      for (std::size_t e = sp->row_ptr[r]; e < sp->row_ptr[r + 1]; ++e) {
        const std::size_t c = sp->col_idx[e];
        if (gw) {
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += g(r, j) * xv(c, j);
          tp.grad(w)[e] += acc;
        }
        if (gx)
          for (std::size_t j = 0; j < k; ++j) tp.grad(x)(c, j) += wv[e] * g(r, j);
      }
  });
}

/// Per stored entry (u, v): src[u] + dst[v]. Both inputs are n x 1; output is nnz x 1.
inline Var edge_scores(const CsrMatrix& s, Var src, Var dst) {
  Tape& t = *src.tape;
  const Matrix& sv = t.value(src);
  const Matrix& dv = t.value(dst);
  if (sv.rows() != s.rows || sv.cols() != 1) throw DimensionError("edge_scores", sv.rows(), sv.cols(), s.rows, 1);
  if (dv.rows() != s.cols || dv.cols() != 1) throw DimensionError("edge_scores", dv.rows(), dv.cols(), s.cols, 1);
  Matrix out(s.nnz(), 1);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t e = s.row_ptr[r]; e < s.row_ptr[r + 1]; ++e) out[e] = sv[r] + dv[s.col_idx[e]];
  Var in[] = {src, dst};
  std::size_t self = t.size();
  const CsrMatrix* sp = &s;
  return t.record(std::move(out), in, [src, dst, self, sp](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    for (std::size_t r = 0; r < sp->rows; ++r)
      for (std::size_t e = sp->row_ptr[r]; e < sp->row_ptr[r + 1]; ++e) {
        if (tp.requires_grad(src)) tp.grad(src)[r] += g[e];
        if (tp.requires_grad(dst)) tp.grad(dst)[sp->col_idx[e]] += g[e];
      }
  });
}

/// Softmax of nnz x 1 edge scores within each row of the sparsity pattern.
inline Var segment_softmax(const CsrMatrix& s, Var scores) {
  Tape& t = *scores.tape;
  const Matrix& sv = t.value(scores);
  if (sv.rows() != s.nnz() || sv.cols() != 1) throw DimensionError("segment_softmax", sv.rows(), sv.cols(), s.nnz(), 1);
  Matrix out(s.nnz(), 1);
  for (std::size_t r = 0; r < s.rows; ++r) {
    const std::size_t b = s.row_ptr[r], e = s.row_ptr[r + 1];
    if (b == e) continue;
    double mx = sv[b];
    for (std::size_t k = b; k < e; ++k) mx = std::max(mx, sv[k]);
    double z = 0.0;
    for (std::size_t k = b; k < e; ++k) z += (out[k] = std::exp(sv[k] - mx));
    for (std::size_t k = b; k < e; ++k) out[k] /= z;
  }
  Var in[] = {scores};
  std::size_t self = t.size();
  const CsrMatrix* sp = &s;
  return t.record(std::move(out), in, [scores, self, sp](Tape& tp) {
    const Matrix& y = tp.value(Var{&tp, self});
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& gx = tp.grad(scores);
    for (std::size_t r = 0; r < sp->rows; ++r) {
      const std::size_t b = sp->row_ptr[r], e = sp->row_ptr[r + 1];
      double dot = 0.0;
      for (std::size_t k = b; k < e; ++k) dot += g[k] * y[k];
      for (std::size_t k = b; k < e; ++k) gx[k] += y[k] * (g[k] - dot);
    }
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  detail::check_same("add", t.value(a), t.value(b));
  Matrix out = t.value(a);
  detail::add_into(out, t.value(b));
  Var in[] = {a, b};
  std::size_t self = t.size();
  return t.record(std::move(out), in, [a, b, self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.requires_grad(a)) detail::add_into(tp.grad(a), g);
    if (tp.requires_grad(b)) detail::add_into(tp.grad(b), g);
  });
}

/// x + 1 x k bias broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) throw DimensionError("add_bias", bv.rows(), bv.cols(), 1, xv.cols());
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  Var in[] = {x, bias};
  std::size_t self = t.size();
  return t.record(std::move(out), in, [x, bias, self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.requires_grad(x)) detail::add_into(tp.grad(x), g);
    if (tp.requires_grad(bias)) {
      Matrix& gb = tp.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

inline Var scale(Var x, double s) {
  return detail::unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Var identity(Var x) {
  return detail::unary(x, [](double v) { return v; }, [](double, double) { return 1.0; });
}

inline Var relu(Var x) {
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var x) {
  return detail::unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var x) {
  return detail::unary(x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu slope must lie in (0,1)");
  return detail::unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; },
                       [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline Var sum(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  Var in[] = {x};
  std::size_t self = t.size();
  return t.record(Matrix(1, 1, s), in, [x, self](Tape& tp) {
    const double g = tp.grad(Var{&tp, self})[0];
    for (double& v : tp.grad(x).data()) v += g;
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols needs at least one operand");
  Tape& t = *parts[0].tape;
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (auto p : parts) {
    const Matrix& v = t.value(p);
    if (v.rows() != rows) throw DimensionError("concat_cols", v.rows(), v.cols(), rows, v.cols());
    cols += v.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (auto p : parts) {
    const Matrix& v = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + off);
    off += v.cols();
  }
  std::vector<Var> in(parts.begin(), parts.end());
  std::size_t self = t.size();
  return t.record(std::move(out), in, [in, self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    std::size_t off = 0;
    for (auto p : in) {
      const std::size_t w = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        Matrix& gp = tp.grad(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  if (begin + count > xv.cols()) throw DimensionError("slice_cols", xv.rows(), begin + count, xv.rows(), xv.cols());
  Matrix out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  Var in[] = {x};
  std::size_t self = t.size();
  return t.record(std::move(out), in, [x, begin, count, self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& gx = tp.grad(x);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) gx(r, begin + c) += g(r, c);
  });
}

/// Elementwise maximum across same-shaped operands. The gradient of each
/// entry goes to the operand holding the maximum; ties go to the lowest operand index.
inline Var rowwise_max(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("rowwise_max needs at least one operand");
  Tape& t = *parts[0].tape;
  const Matrix& first = t.value(parts[0]);
  for (auto p : parts) detail::check_same("rowwise_max", first, t.value(p));
  Matrix out = first;
  std::vector<std::size_t> argmax(first.size(), 0);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Matrix& v = t.value(parts[k]);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] > out[i]) {
        out[i] = v[i];
        argmax[i] = k;
      }
  }
  std::vector<Var> in(parts.begin(), parts.end());
  std::size_t self = t.size();
  return t.record(std::move(out), in, [in, argmax = std::move(argmax), self](Tape& tp) {
    const Matrix& g = tp.grad(Var{&tp, self});
    for (std::size_t i = 0; i < g.size(); ++i) {
      Var dst = in[argmax[i]];
      if (tp.requires_grad(dst)) tp.grad(dst)[i] += g[i];
    }
  });
}

/// Mean over `mask` rows of -log softmax(logits)[label]. Returns a 1x1 value.
inline Var softmax_cross_entropy(Var logits, const std::vector<int>& labels, std::span<const std::size_t> mask) {
  if (mask.empty()) throw std::invalid_argument("softmax_cross_entropy: empty mask");
  Tape& t = *logits.tape;
  const Matrix& z = t.value(logits);
  if (labels.size() != z.rows()) throw DimensionError("softmax_cross_entropy", labels.size(), 1, z.rows(), 1);
  const std::size_t k = z.cols();
  Matrix probs(mask.size(), k);
  double loss = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    auto row = z.row(mask[i]);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (probs(i, c) = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < k; ++c) probs(i, c) /= s;
    loss += mx + std::log(s) - row[static_cast<std::size_t>(labels[mask[i]])];
  }
  const double inv = 1.0 / static_cast<double>(mask.size());
  Var in[] = {logits};
  std::size_t self = t.size();
  std::vector<std::size_t> rows(mask.begin(), mask.end());
  std::vector<std::size_t> targets(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) targets[i] = static_cast<std::size_t>(labels[mask[i]]);
  return t.record(Matrix(1, 1, loss * inv), in,
                  [logits, self, inv, rows = std::move(rows), targets = std::move(targets),
                   probs = std::move(probs)](Tape& tp) {
                    const double g = tp.grad(Var{&tp, self})[0] * inv;
                    Matrix& gz = tp.grad(logits);
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                      for (std::size_t c = 0; c < probs.cols(); ++c) gz(rows[i], c) += g * probs(i, c);
                      gz(rows[i], targets[i]) -= g;
                    }
                  });
}

}  // namespace ops
}  // namespace exgnas
