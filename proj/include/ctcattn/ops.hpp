#ifndef CTCATTN_OPS_HPP_
#define CTCATTN_OPS_HPP_

#include <span>
#include <vector>

#include "ctcattn/tape.hpp"

// Differentiable ops on Tape nodes. Every op throws DimensionError on shape
// mismatch, naming both shapes.
namespace ctcattn {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
// Throws DomainError on any entry <= 0.
Var log(Var a);

// m[r x c] + v[c] broadcast over rows.
Var add_row(Var m, Var v);

// a[m x k] * b[k x p] -> [m x p]; b may be a k-vector, giving an m-vector.
Var matmul(Var a, Var b);
// x W^T (+ b). x is [in] or [rows x in], W is [out x in], b is [out].
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var b);

// Softmax over a vector, or over `axis` of a matrix. Max-subtracted.
Var softmax(Var x);
Var softmax(Var x, std::size_t axis);
// Row-wise log-softmax of a matrix (or of a vector).
Var log_softmax(Var x);

Var sum(Var x);
Var dot(Var a, Var b);
// Sum over rows of a matrix: [r x c] -> [c].
Var colsum(Var m);

Var concat(std::span<const Var> parts);              // vectors -> vector
Var hconcat(std::span<const Var> parts);             // [r x ci] -> [r x sum]
Var stack(std::span<const Var> rows);                // vectors -> matrix
Var select(Var x, std::size_t index);                // along axis 0
Var slice(Var x, std::size_t begin, std::size_t len);  // of a vector
Var reshape(Var x, Shape shape);
// out[t] = m[t + offset] for in-range rows, zero rows elsewhere.
Var shift_rows(Var m, long offset);

// Fused LSTM nonlinearity. gates = [i; f; g; o] pre-activations (4c),
// c_prev (c). Returns [h; c] (2c) with c = sig(f) c_prev + sig(i) tanh(g),
// h = sig(o) tanh(c).
Var lstm_pointwise(Var gates, Var c_prev);

// Same-padded multi-channel 1-D correlation of a length-C signal.
// x is first shifted: xs[j] = x[j + shift] (0 outside). Returns [C x nf]
// with out[j][i] = sum_m filters[i][m] * xs[j + m - (w-1)/2].
Var location_conv(Var x, Var filters, long shift);

}  // namespace ctcattn

#endif  // CTCATTN_OPS_HPP_
