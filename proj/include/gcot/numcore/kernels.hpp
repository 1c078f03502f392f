#pragma once

#include <span>
#include <vector>

#include "gcot/numcore/sparse.hpp"
#include "gcot/numcore/tensor.hpp"

// Hot loops behind the tracked operations. The default namespace holds the
// OpenMP row-parallel kernels; kernels::reference holds straightforward
// serial loops kept for testing and benchmarking. Both accumulate every
// output element over the inner index in ascending order, so they agree
// bit for bit.
namespace gcot::num::kernels {

/// Threads used by the parallel kernels; 1 disables OpenMP regions.
void set_num_threads(int n);
int num_threads();

/// RAII override of the kernel thread count (restores on scope exit).
class ThreadScope {
 public:
  explicit ThreadScope(int n) : saved_(num_threads()) { set_num_threads(n); }
  ~ThreadScope() { set_num_threads(saved_); }
  ThreadScope(const ThreadScope&) = delete;
  ThreadScope& operator=(const ThreadScope&) = delete;

 private:
  int saved_;
};

// c = a · b. Zero entries of a are skipped, which makes sparse feature
// matrices cheap without a separate code path.
void gemm(const Tensor& a, const Tensor& b, Tensor& c);
// c = aᵀ · b
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);
// c = a · bᵀ
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
// c = s · b
void spmm(const SparseMatrix& s, const Tensor& b, Tensor& c);

// Fused ((z·w2 + b2) ⊙ x) · theta evaluated only on the nonzeros of x.
// w2t is w2 transposed (d×s) so the per-entry dot product is contiguous.
void prompted_projection(const Tensor& z, const Tensor& w2t, const Tensor& b2,
                         const SparseMatrix& x, const Tensor& theta, Tensor& out);

// Gradient of the loss w.r.t. the prompt entries p_ik at the nonzeros of x,
// laid out in x's CSR order: g = x_ik · (dout_i · theta_k).
void prompted_projection_prompt_grad(const Tensor& dout, const SparseMatrix& x,
                                     const Tensor& theta, std::vector<double>& grad);

namespace reference {

void gemm(const Tensor& a, const Tensor& b, Tensor& c);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
void spmm(const SparseMatrix& s, const Tensor& b, Tensor& c);

}  // namespace reference

}  // namespace gcot::num::kernels
