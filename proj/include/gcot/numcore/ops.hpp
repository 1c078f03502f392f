#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gcot/numcore/sparse.hpp"
#include "gcot/numcore/tape.hpp"

// Differentiable operations. Every function records one node on the tape
// of its inputs; all inputs must live on the same tape.
namespace gcot::num {

Var matmul(Var a, Var b);
/// s · b for a fixed sparse left operand. Passing sᵀ as well saves
/// transposing it on every backward pass.
Var spmm(std::shared_ptr<const SparseMatrix> s, Var b,
         std::shared_ptr<const SparseMatrix> s_transposed = nullptr);

enum class Elementwise { mul, add, relu, leaky_relu };
/// Binary kinds need b with a's shape; unary kinds ignore b.
/// leaky_relu uses slope 0.01.
Var elementwise(Elementwise kind, Var a, std::optional<Var> b = std::nullopt);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.01);
Var scale(Var a, double factor);

/// a + row for a 1×cols row vector, added to every row.
Var add_row(Var a, Var row);
/// a ⊙ row for a 1×cols row vector, applied to every row.
Var mul_row(Var a, Var row);

Var row_softmax(Var logits);

/// Σ_l weights(0,l) · mats[l]; weights is 1×L.
Var weighted_sum(std::span<const Var> mats, Var weights);

Var gather_rows(Var a, std::vector<std::size_t> rows);
/// Row s of the result sums rows [offsets[s], offsets[s+1]) of a.
Var segment_sum(Var a, std::vector<std::size_t> offsets);
/// Row g of the result is the mean of the listed rows of a.
Var group_mean(Var a, std::vector<std::vector<std::size_t>> groups);

/// (a.rows × b.rows) matrix of row cosines.
Var cosine_matrix(Var a, Var b);
/// Column of cosines between matching rows of a and b.
Var rowwise_cosine(Var a, Var b);

/// Column holding a(i, cols[i]).
Var pick(Var a, std::vector<std::size_t> cols);
/// Column holding log Σ_j exp(a(i, j)).
Var row_logsumexp(Var a);
Var sum(Var a);
Var hconcat(Var a, Var b);
Var transpose(Var a);

/// ((z · w2 + b2) ⊙ x) · theta, with x a fixed sparse matrix. Only the
/// nonzeros of x are evaluated, in value and in gradient.
Var prompted_projection(Var z, Var w2, Var b2, std::shared_ptr<const SparseMatrix> x, Var theta);

}  // namespace gcot::num
