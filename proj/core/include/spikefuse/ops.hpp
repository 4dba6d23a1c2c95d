#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Compressed sparse rows; used for hypergraph adjacency and other fixed mixing matrices.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
  std::size_t row_nnz(std::size_t r) const { return row_ptr[r + 1] - row_ptr[r]; }
};

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// Multiply by a constant factor of identical size (dropout masks, fixed weights).
Tensor mul_const(const Tensor& a, std::span<const double> factor);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Last-axis algebra. `x` is treated as a stack of row vectors.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& weight);  // [..., I] x [I, O] -> [..., O]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor mul_broadcast_last(const Tensor& x, const Tensor& mask);  // [..., C] * [..., 1]
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
Tensor transpose_last2(const Tensor& x);  // [..., A, B] -> [..., B, A]

// Token-major feature maps [B, T, N, C].
Tensor mix_tokens(const Tensor& x, const Tensor& adjacency);  // y[b,t,i] = sum_j A[i,j] x[b,t,j]
// y[b,r,...] = sum_t m[r,t] x[b,t,...] for a constant row-major matrix m of shape rows x T.
Tensor mix_time(const Tensor& x, std::span<const double> m, std::size_t rows);
Tensor shift_time(const Tensor& x, std::ptrdiff_t offset);  // y[b,t] = x[b,t+offset], zero outside
Tensor token_gram(const Tensor& k, const Tensor& v);        // [B,T,N,C1],[B,T,N,C2] -> [B,T,C1,C2]
Tensor apply_gram(const Tensor& q, const Tensor& gram);     // [B,T,N,C1],[B,T,C1,C2] -> [B,T,N,C2]
Tensor pad_tokens(const Tensor& x, std::size_t tokens);     // zero tokens appended on axis 2
Tensor mean_tokens(const Tensor& x);                        // [B,T,N,C] -> [B,C]

// x: [B, ...], p: [...]; p is added to every batch entry.
Tensor add_leading(const Tensor& x, const Tensor& p);
// Divides each row of a non-negative [N, N] matrix by its sum.
Tensor row_normalize(const Tensor& m);
// Elementwise clamp to [lo, hi]; gradient passes only where the input lies strictly inside.
Tensor clamp(const Tensor& x, double lo, double hi);

// x: [B, M, C]; one M x M matrix per batch entry.
Tensor sparse_mix(const Tensor& x, const std::vector<CsrMatrix>& mats);

// Diagonal linear recurrence along axis 1: h[t] = sigmoid(decay_logit) * h[t-1] + u[t].
// u: [B, T, ..., S], decay_logit: [S].
Tensor linear_recurrence(const Tensor& u, const Tensor& decay_logit);

// Mean softmax cross-entropy over the batch. logits: [B, K].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace spikefuse
