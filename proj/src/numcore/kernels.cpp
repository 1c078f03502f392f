#include "gcot/numcore/kernels.hpp"

#include <atomic>
#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gcot/error.hpp"

namespace gcot::num::kernels {

namespace {

#ifdef _OPENMP
std::atomic<int> g_threads{omp_get_max_threads()};
#else
std::atomic<int> g_threads{1};
#endif

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

void require(bool ok, const char* what, const Tensor& a, const Tensor& b) {
  if (!ok) throw DimensionError(std::string(what) + ": " + shape_string(a) + " vs " + shape_string(b));
}

// Row i of c = a_i · b; the inner loop runs over contiguous rows of b.
inline void gemm_row(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  const double* arow = a.data().data() + i * inner;
  double* crow = c.data().data() + i * n;
  const double* bdata = b.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = arow[k];
    if (aik == 0.0) continue;
    const double* brow = bdata + k * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
  }
}

// Four rows at once so each row of b is read once per block. Every c(i, j)
// still accumulates over k in ascending order, and a zero a(i, k) adds an
// exact zero, so the result matches gemm_row bit for bit on finite inputs.
inline void gemm_rows4(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  const double* a0 = a.data().data() + i * inner;
  const double* a1 = a0 + inner;
  const double* a2 = a1 + inner;
  const double* a3 = a2 + inner;
  double* c0 = c.data().data() + i * n;
  double* c1 = c0 + n;
  double* c2 = c1 + n;
  double* c3 = c2 + n;
  const double* bdata = b.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
    if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
    const double* brow = bdata + k * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double bj = brow[j];
      c0[j] += v0 * bj;
      c1[j] += v1 * bj;
      c2[j] += v2 * bj;
      c3[j] += v3 * bj;
    }
  }
}

}  // namespace

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int num_threads() { return g_threads.load(); }

void gemm(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.cols() == b.rows(), "gemm", a, b);
  c = Tensor(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  [[maybe_unused]] const int threads = num_threads();
  [[maybe_unused]] const bool par = threads > 1 && a.size() * b.cols() > kParallelWork;
  const std::ptrdiff_t blocks = rows / 4;
#pragma omp parallel for schedule(static) num_threads(threads) if (par)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) gemm_rows4(a, b, c, static_cast<std::size_t>(blk) * 4);
  for (std::ptrdiff_t i = blocks * 4; i < rows; ++i) gemm_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.rows() == b.rows(), "gemm_tn", a, b);
  gemm(a.transposed(), b, c);
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.cols() == b.cols(), "gemm_nt", a, b);
  gemm(a, b.transposed(), c);
}

void spmm(const SparseMatrix& s, const Tensor& b, Tensor& c) {
  if (s.cols() != b.rows()) {
    throw DimensionError("spmm: sparse (" + std::to_string(s.rows()) + "×" +
                         std::to_string(s.cols()) + ") · " + shape_string(b));
  }
  c = Tensor(s.rows(), b.cols());
  const std::size_t n = b.cols();
  const auto rows = static_cast<std::ptrdiff_t>(s.rows());
  [[maybe_unused]] const int threads = num_threads();
  [[maybe_unused]] const bool par = threads > 1 && s.nnz() * n > kParallelWork;
#pragma omp parallel for schedule(static) num_threads(threads) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    auto cs = s.row_cols(static_cast<std::size_t>(i));
    auto vs = s.row_values(static_cast<std::size_t>(i));
    double* crow = c.data().data() + static_cast<std::size_t>(i) * n;
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const double* brow = b.data().data() + cs[k] * n;
      const double v = vs[k];
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

void prompted_projection(const Tensor& z, const Tensor& w2t, const Tensor& b2,
                         const SparseMatrix& x, const Tensor& theta, Tensor& out) {
  require(z.rows() == x.rows(), "prompted_projection rows", z, theta);
  require(w2t.cols() == z.cols() && w2t.rows() == x.cols(), "prompted_projection w2", z, w2t);
  require(b2.rows() == 1 && b2.cols() == x.cols(), "prompted_projection b2", b2, w2t);
  require(theta.rows() == x.cols(), "prompted_projection theta", w2t, theta);
  out = Tensor(x.rows(), theta.cols());
  const std::size_t s = z.cols();
  const std::size_t h = theta.cols();
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  [[maybe_unused]] const int threads = num_threads();
  [[maybe_unused]] const bool par = threads > 1 && x.nnz() * (h + s) > kParallelWork;
#pragma omp parallel for schedule(static) num_threads(threads) if (par)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto cs = x.row_cols(i);
    auto vs = x.row_values(i);
    const double* zrow = z.data().data() + i * s;
    double* orow = out.data().data() + i * h;
    for (std::size_t e = 0; e < cs.size(); ++e) {
      const std::size_t k = cs[e];
      const double* wrow = w2t.data().data() + k * s;
      double p = 0.0;
      for (std::size_t t = 0; t < s; ++t) {
        if (zrow[t] == 0.0) continue;
        p += zrow[t] * wrow[t];
      }
      p += b2.data()[k];
      const double a = p * vs[e];
      if (a == 0.0) continue;
      const double* trow = theta.data().data() + k * h;
      for (std::size_t j = 0; j < h; ++j) orow[j] += a * trow[j];
    }
  }
}

void prompted_projection_prompt_grad(const Tensor& dout, const SparseMatrix& x,
                                     const Tensor& theta, std::vector<double>& grad) {
  require(dout.rows() == x.rows() && dout.cols() == theta.cols(), "prompted_projection grad", dout,
          theta);
  grad.assign(x.nnz(), 0.0);
  const std::size_t h = theta.cols();
  // Offsets of each row's first nonzero inside the flat gradient array.
  std::vector<std::size_t> offset(x.rows() + 1, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) offset[i + 1] = offset[i] + x.row_cols(i).size();
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  [[maybe_unused]] const int threads = num_threads();
  [[maybe_unused]] const bool par = threads > 1 && x.nnz() * h > kParallelWork;
#pragma omp parallel for schedule(static) num_threads(threads) if (par)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto cs = x.row_cols(i);
    auto vs = x.row_values(i);
    const double* drow = dout.data().data() + i * h;
    for (std::size_t e = 0; e < cs.size(); ++e) {
      const double* trow = theta.data().data() + cs[e] * h;
      double dot = 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        if (drow[j] == 0.0) continue;
        dot += drow[j] * trow[j];
      }
      grad[offset[i] + e] = dot * vs[e];
    }
  }
}

namespace reference {

void gemm(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.cols() == b.rows(), "gemm", a, b);
  c = Tensor(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.rows() == b.rows(), "gemm_tn", a, b);
  c = Tensor(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.cols(); ++k)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, k) * b(i, j);
      c(k, j) = acc;
    }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  require(a.cols() == b.cols(), "gemm_nt", a, b);
  c = Tensor(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      c(i, j) = acc;
    }
}

void spmm(const SparseMatrix& s, const Tensor& b, Tensor& c) {
  if (s.cols() != b.rows()) throw DimensionError("spmm: inner dimension mismatch");
  c = Tensor(s.rows(), b.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto cs = s.row_cols(i);
    auto vs = s.row_values(i);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cs.size(); ++k) acc += vs[k] * b(cs[k], j);
      c(i, j) = acc;
    }
  }
}

}  // namespace reference

}  // namespace gcot::num::kernels
