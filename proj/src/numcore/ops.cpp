#include "gcot/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gcot/error.hpp"
#include "gcot/numcore/kernels.hpp"

namespace gcot::num {

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw NumericError(std::string(op) + ": operands belong to different tapes");
  }
  return a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

void require_row(const Tensor& a, const Tensor& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": row " + shape_string(row) + " for " +
                         shape_string(a));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  auto in = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

Tensor column_sums(const Tensor& a) {
  Tensor out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += row[c];
  }
  return out;
}

std::vector<double> row_norms(const Tensor& a, const char* op) {
  std::vector<double> n(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += v * v;
    if (s == 0.0) {
      throw DegenerateInputError(std::string(op) + ": zero-norm row " + std::to_string(r));
    }
    n[r] = std::sqrt(s);
  }
  return n;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.value()) + " · " + shape_string(b.value()));
  }
  Tensor out;
  kernels::gemm(a.value(), b.value(), out);
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(ia)) {
      Tensor da;
      kernels::gemm_nt(g, t.value(ib), da);
      t.accumulate(ia, std::move(da));
    }
    if (t.requires_grad(ib)) {
      Tensor db;
      kernels::gemm_tn(t.value(ia), g, db);
      t.accumulate(ib, std::move(db));
    }
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> s, Var b, std::shared_ptr<const SparseMatrix> st) {
  Tensor out;
  kernels::spmm(*s, b.value(), out);
  const NodeId ib = b.id();
  return b.tape().record(OpKind::spmm, {ib}, std::move(out), [s, st, ib](Tape& t, NodeId self) {
    Tensor db;
    if (st) {
      kernels::spmm(*st, t.grad_of(self), db);
    } else {
      kernels::spmm(s->transposed(), t.grad_of(self), db);
    }
    t.accumulate(ib, std::move(db));
  });
}

Var elementwise(Elementwise kind, Var a, std::optional<Var> b) {
  switch (kind) {
    case Elementwise::relu: return relu(a);
    case Elementwise::leaky_relu: return leaky_relu(a);
    case Elementwise::mul:
    case Elementwise::add:
      if (!b) throw DimensionError("elementwise: binary kind without second operand");
      return kind == Elementwise::mul ? mul(a, *b) : add(a, *b);
  }
  throw NumericError("elementwise: unknown kind");
}

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = gcot::num::add(a.value(), b.value());
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::add, {ia, ib}, std::move(out), [ia, ib](Tape& t, NodeId self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  Tape& tape = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = a.value().data()[i] - b.value().data()[i];
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::sub, {ia, ib}, std::move(out), [ia, ib](Tape& t, NodeId self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, map(t.grad_of(self), [](double g) { return -g; }));
  });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = hadamard(a.value(), b.value());
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::mul, {ia, ib}, std::move(out), [ia, ib](Tape& t, NodeId self) {
    if (t.requires_grad(ia)) t.accumulate(ia, hadamard(t.grad_of(self), t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, hadamard(t.grad_of(self), t.value(ia)));
  });
}

Var relu(Var a) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::relu, {ia}, gcot::num::relu(a.value()), [ia](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value(ia);
    Tensor d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : 0.0;
    t.accumulate(ia, std::move(d));
  });
}

Var leaky_relu(Var a, double slope) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::leaky_relu, {ia}, gcot::num::leaky_relu(a.value(), slope),
                         [ia, slope](Tape& t, NodeId self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& x = t.value(ia);
                           Tensor d(g.rows(), g.cols());
                           for (std::size_t i = 0; i < d.size(); ++i) {
                             d.data()[i] = x.data()[i] > 0.0 ? g.data()[i] : slope * g.data()[i];
                           }
                           t.accumulate(ia, std::move(d));
                         });
}

Var scale(Var a, double factor) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::scale, {ia}, map(a.value(), [factor](double v) { return v * factor; }),
                         [ia, factor](Tape& t, NodeId self) {
                           t.accumulate(ia, map(t.grad_of(self), [factor](double g) { return g * factor; }));
                         });
}

Var add_row(Var a, Var row) {
  Tape& tape = common_tape(a, row, "add_row");
  require_row(a.value(), row.value(), "add_row");
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += row.value()(0, c);
  }
  const NodeId ia = a.id(), ir = row.id();
  return tape.record(OpKind::add_row, {ia, ir}, std::move(out), [ia, ir](Tape& t, NodeId self) {
    t.accumulate(ia, t.grad_of(self));
    if (t.requires_grad(ir)) t.accumulate(ir, column_sums(t.grad_of(self)));
  });
}

Var mul_row(Var a, Var row) {
  Tape& tape = common_tape(a, row, "mul_row");
  require_row(a.value(), row.value(), "mul_row");
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] *= row.value()(0, c);
  }
  const NodeId ia = a.id(), ir = row.id();
  return tape.record(OpKind::mul_row, {ia, ir}, std::move(out), [ia, ir](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value(ia);
    const Tensor& w = t.value(ir);
    if (t.requires_grad(ia)) {
      Tensor d = g;
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) *= w(0, c);
      t.accumulate(ia, std::move(d));
    }
    if (t.requires_grad(ir)) {
      Tensor d(1, w.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) d(0, c) += g(r, c) * x(r, c);
      t.accumulate(ir, std::move(d));
    }
  });
}

Var row_softmax(Var logits) {
  const NodeId ia = logits.id();
  return logits.tape().record(
      OpKind::row_softmax, {ia}, gcot::num::row_softmax(logits.value()), [](Tape& t, NodeId self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value(self);
        Tensor d(g.rows(), g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const double gy = dot(g.row(r), y.row(r));
          for (std::size_t c = 0; c < g.cols(); ++c) d(r, c) = y(r, c) * (g(r, c) - gy);
        }
        t.accumulate(t.inputs(self)[0], std::move(d));
      });
}

Var weighted_sum(std::span<const Var> mats, Var weights) {
  if (mats.empty()) throw DimensionError("weighted_sum: no matrices");
  const Tensor& w = weights.value();
  if (w.rows() != 1 || w.cols() != mats.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(mats.size()) + " matrices with weights " +
                         shape_string(w));
  }
  Tape& tape = common_tape(mats[0], weights, "weighted_sum");
  Tensor out(mats[0].rows(), mats[0].cols());
  std::vector<NodeId> inputs;
  for (std::size_t l = 0; l < mats.size(); ++l) {
    common_tape(mats[l], weights, "weighted_sum");
    require_same_shape(out, mats[l].value(), "weighted_sum");
    auto m = mats[l].value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += w(0, l) * m[i];
    inputs.push_back(mats[l].id());
  }
  inputs.push_back(weights.id());
  return tape.record(OpKind::weighted_sum, inputs, std::move(out), [](Tape& t, NodeId self) {
    auto in = t.inputs(self);
    const NodeId iw = in.back();
    const Tensor& g = t.grad_of(self);
    const Tensor& w = t.value(iw);
    Tensor dw(1, w.cols());
    for (std::size_t l = 0; l + 1 < in.size(); ++l) {
      const Tensor& m = t.value(in[l]);
      if (t.requires_grad(in[l])) {
        t.accumulate(in[l], map(g, [wl = w(0, l)](double v) { return wl * v; }));
      }
      dw(0, l) = dot(g.data(), m.data());
    }
    t.accumulate(iw, std::move(dw));
  });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Tensor& x = a.value();
  Tensor out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " of " + shape_string(x));
    }
    std::copy_n(x.row(rows[i]).begin(), x.cols(), out.row(i).begin());
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::gather_rows, {ia}, std::move(out),
                         [ia, rows = std::move(rows)](Tape& t, NodeId self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& x = t.value(ia);
                           Tensor d(x.rows(), x.cols());
                           for (std::size_t i = 0; i < rows.size(); ++i) {
                             auto dr = d.row(rows[i]);
                             auto gr = g.row(i);
                             for (std::size_t c = 0; c < dr.size(); ++c) dr[c] += gr[c];
                           }
                           t.accumulate(ia, std::move(d));
                         });
}

Var segment_sum(Var a, std::vector<std::size_t> offsets) {
  const Tensor& x = a.value();
  if (offsets.size() < 2 || offsets.back() > x.rows() ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    throw DimensionError("segment_sum: invalid offsets for " + shape_string(x));
  }
  const std::size_t segs = offsets.size() - 1;
  Tensor out(segs, x.cols());
  for (std::size_t s = 0; s < segs; ++s) {
    auto o = out.row(s);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      auto xr = x.row(r);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += xr[c];
    }
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::segment_sum, {ia}, std::move(out),
                         [ia, offsets = std::move(offsets)](Tape& t, NodeId self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& x = t.value(ia);
                           Tensor d(x.rows(), x.cols());
                           for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
                             for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
                               std::copy_n(g.row(s).begin(), g.cols(), d.row(r).begin());
                           t.accumulate(ia, std::move(d));
                         });
}

Var group_mean(Var a, std::vector<std::vector<std::size_t>> groups) {
  const Tensor& x = a.value();
  Tensor out(groups.size(), x.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw DimensionError("group_mean: group " + std::to_string(g) + " is empty");
    auto o = out.row(g);
    for (std::size_t r : groups[g]) {
      if (r >= x.rows()) throw DimensionError("group_mean: row out of range");
      auto xr = x.row(r);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += xr[c];
    }
    const double n = static_cast<double>(groups[g].size());
    for (double& v : o) v /= n;
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::group_mean, {ia}, std::move(out),
                         [ia, groups = std::move(groups)](Tape& t, NodeId self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& x = t.value(ia);
                           Tensor d(x.rows(), x.cols());
                           for (std::size_t k = 0; k < groups.size(); ++k) {
                             const double n = static_cast<double>(groups[k].size());
                             for (std::size_t r : groups[k]) {
                               auto dr = d.row(r);
                               for (std::size_t c = 0; c < dr.size(); ++c) dr[c] += g(k, c) / n;
                             }
                           }
                           t.accumulate(ia, std::move(d));
                         });
}

Var cosine_matrix(Var a, Var b) {
  Tape& tape = common_tape(a, b, "cosine_matrix");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.cols()) {
    throw DimensionError("cosine_matrix: " + shape_string(x) + " vs " + shape_string(y));
  }
  const auto nx = row_norms(x, "cosine_matrix");
  const auto ny = row_norms(y, "cosine_matrix");
  Tensor out(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) out(i, j) = dot(x.row(i), y.row(j)) / (nx[i] * ny[j]);
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::cosine_matrix, {ia, ib}, std::move(out),
                     [ia, ib, nx, ny](Tape& t, NodeId self) {
                       const Tensor& g = t.grad_of(self);
                       const Tensor& c = t.value(self);
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(ib);
                       Tensor dx(x.rows(), x.cols());
                       Tensor dy(y.rows(), y.cols());
                       for (std::size_t i = 0; i < x.rows(); ++i) {
                         for (std::size_t j = 0; j < y.rows(); ++j) {
                           const double gij = g(i, j);
                           if (gij == 0.0) continue;
                           const double inv = 1.0 / (nx[i] * ny[j]);
                           const double cx = c(i, j) / (nx[i] * nx[i]);
                           const double cy = c(i, j) / (ny[j] * ny[j]);
                           for (std::size_t k = 0; k < x.cols(); ++k) {
                             dx(i, k) += gij * (y(j, k) * inv - cx * x(i, k));
                             dy(j, k) += gij * (x(i, k) * inv - cy * y(j, k));
                           }
                         }
                       }
                       t.accumulate(ia, std::move(dx));
                       t.accumulate(ib, std::move(dy));
                     });
}

Var rowwise_cosine(Var a, Var b) {
  Tape& tape = common_tape(a, b, "rowwise_cosine");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "rowwise_cosine");
  const auto nx = row_norms(x, "rowwise_cosine");
  const auto ny = row_norms(y, "rowwise_cosine");
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) out(i, 0) = dot(x.row(i), y.row(i)) / (nx[i] * ny[i]);
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::rowwise_cosine, {ia, ib}, std::move(out),
                     [ia, ib, nx, ny](Tape& t, NodeId self) {
                       const Tensor& g = t.grad_of(self);
                       const Tensor& c = t.value(self);
                       const Tensor& x = t.value(ia);
                       const Tensor& y = t.value(ib);
                       Tensor dx(x.rows(), x.cols());
                       Tensor dy(y.rows(), y.cols());
                       for (std::size_t i = 0; i < x.rows(); ++i) {
                         const double inv = 1.0 / (nx[i] * ny[i]);
                         const double cx = c(i, 0) / (nx[i] * nx[i]);
                         const double cy = c(i, 0) / (ny[i] * ny[i]);
                         for (std::size_t k = 0; k < x.cols(); ++k) {
                           dx(i, k) = g(i, 0) * (y(i, k) * inv - cx * x(i, k));
                           dy(i, k) = g(i, 0) * (x(i, k) * inv - cy * y(i, k));
                         }
                       }
                       t.accumulate(ia, std::move(dx));
                       t.accumulate(ib, std::move(dy));
                     });
}

Var pick(Var a, std::vector<std::size_t> cols) {
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + shape_string(x));
  }
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= x.cols()) throw DimensionError("pick: column out of range");
    out(i, 0) = x(i, cols[i]);
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::pick, {ia}, std::move(out),
                         [ia, cols = std::move(cols)](Tape& t, NodeId self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& x = t.value(ia);
                           Tensor d(x.rows(), x.cols());
                           for (std::size_t i = 0; i < cols.size(); ++i) d(i, cols[i]) = g(i, 0);
                           t.accumulate(ia, std::move(d));
                         });
}

Var row_logsumexp(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    out(r, 0) = m + std::log(s);
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::row_logsumexp, {ia}, std::move(out), [ia](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor d(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) d(r, c) = g(r, 0) * std::exp(x(r, c) - y(r, 0));
    t.accumulate(ia, std::move(d));
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const NodeId ia = a.id();
  return a.tape().record(OpKind::sum, {ia}, Tensor(1, 1, s), [ia](Tape& t, NodeId self) {
    const Tensor& x = t.value(ia);
    t.accumulate(ia, Tensor(x.rows(), x.cols(), t.grad_of(self)(0, 0)));
  });
}

Var hconcat(Var a, Var b) {
  Tape& tape = common_tape(a, b, "hconcat");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows()) {
    throw DimensionError("hconcat: " + shape_string(x) + " vs " + shape_string(y));
  }
  Tensor out(x.rows(), x.cols() + y.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.row(r).begin(), x.cols(), out.row(r).begin());
    std::copy_n(y.row(r).begin(), y.cols(), out.row(r).begin() + static_cast<std::ptrdiff_t>(x.cols()));
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::hconcat, {ia, ib}, std::move(out), [ia, ib](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    const std::size_t ca = t.value(ia).cols();
    Tensor da(g.rows(), ca);
    Tensor db(g.rows(), g.cols() - ca);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ca; ++c) da(r, c) = g(r, c);
      for (std::size_t c = ca; c < g.cols(); ++c) db(r, c - ca) = g(r, c);
    }
    t.accumulate(ia, std::move(da));
    t.accumulate(ib, std::move(db));
  });
}

Var transpose(Var a) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::transpose, {ia}, a.value().transposed(), [ia](Tape& t, NodeId self) {
    t.accumulate(ia, t.grad_of(self).transposed());
  });
}

Var prompted_projection(Var z, Var w2, Var b2, std::shared_ptr<const SparseMatrix> x, Var theta) {
  Tape& tape = common_tape(z, w2, "prompted_projection");
  common_tape(z, b2, "prompted_projection");
  common_tape(z, theta, "prompted_projection");
  const Tensor& zv = z.value();
  const Tensor& w2v = w2.value();
  if (w2v.rows() != zv.cols() || w2v.cols() != x->cols() || zv.rows() != x->rows()) {
    throw DimensionError("prompted_projection: z " + shape_string(zv) + ", w2 " + shape_string(w2v) +
                         ", x (" + std::to_string(x->rows()) + "×" + std::to_string(x->cols()) + ")");
  }
  Tensor out;
  kernels::prompted_projection(zv, w2v.transposed(), b2.value(), *x, theta.value(), out);
  const NodeId iz = z.id(), iw = w2.id(), ib = b2.id(), it = theta.id();
  return tape.record(
      OpKind::prompted_projection, {iz, iw, ib, it}, std::move(out),
      [iz, iw, ib, it, x](Tape& t, NodeId self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& zv = t.value(iz);
        const Tensor& w2v = t.value(iw);
        const Tensor& b2v = t.value(ib);
        const Tensor& th = t.value(it);
        const std::size_t s = zv.cols();
        if (t.requires_grad(iz) || t.requires_grad(iw) || t.requires_grad(ib)) {
          std::vector<double> gp;
          kernels::prompted_projection_prompt_grad(g, *x, th, gp);
          Tensor dz(zv.rows(), s);
          Tensor dw(w2v.rows(), w2v.cols());
          Tensor db(1, b2v.cols());
          std::size_t e = 0;
          for (std::size_t i = 0; i < x->rows(); ++i) {
            auto cs = x->row_cols(i);
            for (std::size_t q = 0; q < cs.size(); ++q, ++e) {
              const std::size_t k = cs[q];
              const double gik = gp[e];
              if (gik == 0.0) continue;
              db(0, k) += gik;
              for (std::size_t u = 0; u < s; ++u) {
                dz(i, u) += gik * w2v(u, k);
                dw(u, k) += zv(i, u) * gik;
              }
            }
          }
          t.accumulate(iz, std::move(dz));
          t.accumulate(iw, std::move(dw));
          t.accumulate(ib, std::move(db));
        }
        if (t.requires_grad(it)) {
          Tensor dth(th.rows(), th.cols());
          for (std::size_t i = 0; i < x->rows(); ++i) {
            auto cs = x->row_cols(i);
            auto vs = x->row_values(i);
            for (std::size_t q = 0; q < cs.size(); ++q) {
              const std::size_t k = cs[q];
              double p = 0.0;
              for (std::size_t u = 0; u < s; ++u) p += zv(i, u) * w2v(u, k);
              const double a = (p + b2v(0, k)) * vs[q];
              for (std::size_t j = 0; j < th.cols(); ++j) dth(k, j) += a * g(i, j);
            }
          }
          t.accumulate(it, std::move(dth));
        }
      });
}

}  // namespace gcot::num
