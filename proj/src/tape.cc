#include "kgrec/tape.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace kgrec {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

double stable_log_sigmoid(double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf_ref(const Matrix& value, bool requires_grad) {
  Node n;
  n.ref = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || nodes_.at(p.id).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.owned;
}

double Tape::item(Var v) const {
  const Matrix& m = value(v);
  require(m.size() == 1, "Tape::item on non-scalar node");
  return m[0];
}

Matrix& Tape::grad_of(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) {
    const Matrix& val = n.ref ? *n.ref : n.owned;
    n.grad = Matrix(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  require(value(loss).size() == 1, "Tape::backward needs a scalar loss");
  if (!requires_grad(loss)) return;
  grad_of(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.ref ? *n.ref : n.owned, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Plain kernels

std::vector<double> segment_softmax(std::span<const double> scores, std::span<const std::size_t> offsets) {
  std::vector<double> out(scores.size(), 0.0);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = b; i < e; ++i) mx = std::max(mx, scores[i]);
    double z = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      out[i] = std::exp(scores[i] - mx);
      z += out[i];
    }
    for (std::size_t i = b; i < e; ++i) out[i] /= z;
  }
  return out;
}

Matrix segment_weighted_sum(const Matrix& values, std::span<const double> weights,
                            std::span<const std::size_t> offsets, SegmentReduce reduce) {
  require(weights.size() == values.rows(), "segment_weighted_sum: weights/values length mismatch");
  require(!offsets.empty() && offsets.back() == values.rows(), "segment_weighted_sum: offsets do not cover rows");
  const std::size_t m = offsets.size() - 1, d = values.cols();
  Matrix out(m, d);
  for (std::size_t s = 0; s < m; ++s) {
    const std::size_t b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    const double c = reduce == SegmentReduce::kMean ? 1.0 / static_cast<double>(e - b) : 1.0;
    auto o = out.row(s);
    for (std::size_t i = b; i < e; ++i) {
      const double w = c * weights[i];
      auto v = values.row(i);
      for (std::size_t k = 0; k < d; ++k) o[k] += w * v[k];
    }
  }
  return out;
}

double bilinear_attention(std::span<const double> e_h, std::span<const double> e_r, std::span<const double> e_t,
                          const Matrix& wq, const Matrix& wk) {
  const std::size_t d = e_h.size();
  require(e_r.size() == d && e_t.size() == d && wq.rows() == d && wk.rows() == d && wq.cols() == wk.cols(),
          "bilinear_attention: dimension mismatch");
  const std::size_t out = wq.cols();
  double acc = 0.0;
  for (std::size_t j = 0; j < out; ++j) {
    double q = 0.0, k = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      q += e_h[i] * wq(i, j);
      k += e_t[i] * wk(i, j);
    }
    acc += q * k * e_r[j];
  }
  return acc / std::sqrt(static_cast<double>(d));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

namespace ops {

namespace {

// a^T g
Matrix matmul_tn(const Matrix& a, const Matrix& g) {
  Matrix out(a.cols(), g.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto grow = g.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto orow = out.row(k);
      for (std::size_t j = 0; j < g.cols(); ++j) orow[j] += aik * grow[j];
    }
  }
  return out;
}

// g b^T
Matrix matmul_nt(const Matrix& g, const Matrix& b) {
  Matrix out(g.rows(), b.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto grow = g.row(i);
    auto orow = out.row(i);
    for (std::size_t k = 0; k < b.rows(); ++k) orow[k] = dot(grow, b.row(k));
  }
  return out;
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix c = kgrec::matmul(t.value(a), t.value(b));
  return t.record(std::move(c), {a, b}, [a, b](Tape& tp, const Matrix&, const Matrix& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_of(a), matmul_nt(g, tp.value(b)));
    if (tp.requires_grad(b)) add_into(tp.grad_of(b), matmul_tn(tp.value(a), g));
  });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require(x.same_shape(y), "add: shape mismatch");
  Matrix z = x;
  add_into(z, y);
  return t.record(std::move(z), {a, b}, [a, b](Tape& tp, const Matrix&, const Matrix& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_of(a), g);
    if (tp.requires_grad(b)) add_into(tp.grad_of(b), g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require(x.same_shape(y), "sub: shape mismatch");
  Matrix z = x;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] -= y[i];
  return t.record(std::move(z), {a, b}, [a, b](Tape& tp, const Matrix&, const Matrix& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_of(a), g);
    if (tp.requires_grad(b)) {
      Matrix& gb = tp.grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require(x.same_shape(y), "mul: shape mismatch");
  Matrix z(x.rows(), x.cols());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
  return t.record(std::move(z), {a, b}, [a, b](Tape& tp, const Matrix&, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    if (tp.requires_grad(a)) {
      Matrix& ga = tp.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (tp.requires_grad(b)) {
      Matrix& gb = tp.grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Tape& t, Var a, double c) {
  Matrix z = t.value(a);
  for (double& v : z.values()) v *= c;
  return t.record(std::move(z), {a}, [a, c](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_scalar(Tape& t, Var a, double c) {
  Matrix z = t.value(a);
  for (double& v : z.values()) v += c;
  return t.record(std::move(z), {a}, [a](Tape& tp, const Matrix&, const Matrix& g) { add_into(tp.grad_of(a), g); });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const Matrix& x = t.value(a);
  const Matrix& b = t.value(bias);
  require(b.rows() == 1 && b.cols() == x.cols(), "add_row_bias: bias must be 1 x cols");
  Matrix z = x;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return t.record(std::move(z), {a, bias}, [a, bias](Tape& tp, const Matrix&, const Matrix& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_of(a), g);
    if (tp.requires_grad(bias)) {
      Matrix& gb = tp.grad_of(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  });
}

Var sigmoid(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix& y, const Matrix& g) {
    Matrix& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_log_sigmoid(x[i]);
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix&, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid(-x[i]);
  });
}

Var gather_rows(Tape& t, Var a, std::vector<Index> rows) {
  const Matrix& x = t.value(a);
  Matrix y(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]));
    std::copy_n(x.row(rows[i]).begin(), x.cols(), y.row(i).begin());
  }
  return t.record(std::move(y), {a}, [a, rows = std::move(rows)](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto src = g.row(i);
      auto dst = ga.row(rows[i]);
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    }
  });
}

Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Matrix& x = t.value(a);
  require(begin + count <= x.rows(), "slice_rows: range exceeds rows");
  Matrix y(count, x.cols());
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()), count * x.cols(),
              y.values().begin());
  return t.record(std::move(y), {a}, [a, begin](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix& ga = tp.grad_of(a);
    const std::size_t off = begin * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
  });
}

Var row_sum(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    y[r] = s;
  }
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix&, const Matrix& g) {
    Matrix& ga = tp.grad_of(a);
    for (std::size_t r = 0; r < ga.rows(); ++r) {
      for (double& v : ga.row(r)) v += g[r];
    }
  });
}

Var row_dot(Tape& t, Var a, Var b) {
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require(x.same_shape(y), "row_dot: shape mismatch");
  Matrix z(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) z[r] = dot(x.row(r), y.row(r));
  return t.record(std::move(z), {a, b}, [a, b](Tape& tp, const Matrix&, const Matrix& g) {
    const Matrix& x = tp.value(a);
    const Matrix& y = tp.value(b);
    if (tp.requires_grad(a)) {
      Matrix& ga = tp.grad_of(a);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < x.cols(); ++k) ga(r, k) += g[r] * y(r, k);
      }
    }
    if (tp.requires_grad(b)) {
      Matrix& gb = tp.grad_of(b);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t k = 0; k < x.cols(); ++k) gb(r, k) += g[r] * x(r, k);
      }
    }
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).values()) s += v;
  return t.record(Matrix(1, 1, s), {a}, [a](Tape& tp, const Matrix&, const Matrix& g) {
    for (double& v : tp.grad_of(a).values()) v += g[0];
  });
}

Var l2_normalize_rows(Tape& t, Var a, double eps) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    norms[r] = std::max(std::sqrt(dot(x.row(r), x.row(r))), eps);
    for (std::size_t k = 0; k < x.cols(); ++k) y(r, k) = x(r, k) / norms[r];
  }
  return t.record(std::move(y), {a},
                  [a, eps, norms = std::move(norms)](Tape& tp, const Matrix& y, const Matrix& g) {
                    Matrix& ga = tp.grad_of(a);
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      if (norms[r] <= eps) {
                        for (std::size_t k = 0; k < y.cols(); ++k) ga(r, k) += g(r, k) / eps;
                        continue;
                      }
                      const double yg = dot(y.row(r), g.row(r));
                      for (std::size_t k = 0; k < y.cols(); ++k) ga(r, k) += (g(r, k) - y(r, k) * yg) / norms[r];
                    }
                  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    require(t.value(p).rows() == rows, "concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix y(rows, cols);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Matrix& x = t.value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < x.cols(); ++k) y(r, c0 + k) = x(r, k);
    }
    c0 += x.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(y), ps, [ps](Tape& tp, const Matrix&, const Matrix& g) {
    std::size_t c0 = 0;
    for (Var p : ps) {
      const std::size_t w = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        Matrix& gp = tp.grad_of(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t k = 0; k < w; ++k) gp(r, k) += g(r, c0 + k);
        }
      }
      c0 += w;
    }
  });
}

Var row_logsumexp(Tape& t, Var a) {
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    y[r] = mx + std::log(z);
  }
  return t.record(std::move(y), {a}, [a](Tape& tp, const Matrix& y, const Matrix& g) {
    const Matrix& x = tp.value(a);
    Matrix& ga = tp.grad_of(a);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t k = 0; k < x.cols(); ++k) ga(r, k) += g[r] * std::exp(x(r, k) - y[r]);
    }
  });
}

Var segment_softmax(Tape& t, Var scores, std::vector<std::size_t> offsets) {
  const Matrix& x = t.value(scores);
  require(x.cols() == 1, "segment_softmax: scores must be a column");
  require(!offsets.empty() && offsets.back() == x.rows(), "segment_softmax: offsets do not cover scores");
  Matrix y = Matrix::column(kgrec::segment_softmax(x.values(), offsets));
  return t.record(std::move(y), {scores},
                  [scores, offsets = std::move(offsets)](Tape& tp, const Matrix& y, const Matrix& g) {
                    Matrix& gs = tp.grad_of(scores);
                    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                      double yg = 0.0;
                      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) yg += y[i] * g[i];
                      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) gs[i] += y[i] * (g[i] - yg);
                    }
                  });
}

Var segment_weighted_sum(Tape& t, Var values, Var weights, std::vector<std::size_t> offsets,
                         SegmentReduce reduce) {
  const Matrix& v = t.value(values);
  const Matrix& w = t.value(weights);
  require(w.cols() == 1, "segment_weighted_sum: weights must be a column");
  Matrix y = kgrec::segment_weighted_sum(v, w.values(), offsets, reduce);
  return t.record(
      std::move(y), {values, weights},
      [values, weights, reduce, offsets = std::move(offsets)](Tape& tp, const Matrix&, const Matrix& g) {
        const Matrix& v = tp.value(values);
        const Matrix& w = tp.value(weights);
        Matrix* gv = tp.requires_grad(values) ? &tp.grad_of(values) : nullptr;
        Matrix* gw = tp.requires_grad(weights) ? &tp.grad_of(weights) : nullptr;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
          const std::size_t b = offsets[s], e = offsets[s + 1];
          if (b == e) continue;
          const double c = reduce == SegmentReduce::kMean ? 1.0 / static_cast<double>(e - b) : 1.0;
          auto gs = g.row(s);
          for (std::size_t i = b; i < e; ++i) {
            if (gv) {
              auto dst = gv->row(i);
              const double cw = c * w[i];
              for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += cw * gs[k];
            }
            if (gw) (*gw)[i] += c * dot(v.row(i), gs);
          }
        }
      });
}

}  // namespace ops
}  // namespace kgrec
