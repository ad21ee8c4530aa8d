#include "ctcattn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctcattn/kernels.hpp"

namespace ctcattn {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a) + " and " + shape_str(b));
}

void require_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_str(a.shape()));
  }
}

// Elementwise unary op whose derivative is expressed through input x and
// output y.
template <typename Fwd, typename Deriv>
Var unary(Var a, const char* name, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const auto ia = a.id();
  return a.tape()->record(
      std::move(y), {a}, [ia, name, deriv](Tape& t, std::uint32_t self) {
        Tensor* ga = t.grad_acc(ia);
        if (!ga) return;
        const double fault = testing::gradient_fault_scale(name);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        const Tensor& gy = t.grad(self);
        for (std::size_t i = 0; i < x.size(); ++i) {
          (*ga)[i] += fault * gy[i] * deriv(x[i], y[i]);
        }
      });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax of strided vector in place: n entries at base + i * stride.
void softmax_strided(std::span<const double> in, std::span<double> out,
                     std::size_t base, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, in[base + i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(in[base + i * stride] - mx);
    out[base + i * stride] = e;
    s += e;
  }
  for (std::size_t i = 0; i < n; ++i) out[base + i * stride] /= s;
}

// dx = y * (dy - <dy, y>) over the strided group.
void softmax_backward_strided(std::span<const double> y,
                              std::span<const double> gy, std::span<double> gx,
                              std::size_t base, std::size_t n,
                              std::size_t stride) {
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d += gy[base + i * stride] * y[base + i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = base + i * stride;
    gx[k] += y[k] * (gy[k] - d);
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(y), {a, b},
                          [ia, ib](Tape& t, std::uint32_t self) {
                            const Tensor& g = t.grad(self);
                            for (auto id : {ia, ib}) {
                              if (Tensor* gx = t.grad_acc(id)) {
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  (*gx)[i] += g[i];
                                }
                              }
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(y), {a, b},
                          [ia, ib](Tape& t, std::uint32_t self) {
                            const Tensor& g = t.grad(self);
                            if (Tensor* ga = t.grad_acc(ia)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*ga)[i] += g[i];
                              }
                            }
                            if (Tensor* gb = t.grad_acc(ib)) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                (*gb)[i] -= g[i];
                              }
                            }
                          });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(y), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (Tensor* ga = t.grad_acc(ia)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        }
        if (Tensor* gb = t.grad_acc(ib)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
        }
      });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.data()) v *= s;
  const auto ia = a.id();
  return a.tape()->record(std::move(y), {a},
                          [ia, s](Tape& t, std::uint32_t self) {
                            Tensor* ga = t.grad_acc(ia);
                            const Tensor& g = t.grad(self);
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              (*ga)[i] += s * g[i];
                            }
                          });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(v));
    }
  }
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var add_row(Var m, Var v) {
  require_rank("add_row", m, 2);
  require_rank("add_row", v, 1);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  if (v.value().dim(0) != cols) shape_fail("add_row", m.shape(), v.shape());
  Tensor y = m.value();
  const Tensor& vv = v.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) += vv[c];
  }
  const auto im = m.id(), iv = v.id();
  return m.tape()->record(
      std::move(y), {m, v}, [im, iv, rows, cols](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        if (Tensor* gm = t.grad_acc(im)) {
          for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
        }
        if (Tensor* gv = t.grad_acc(iv)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) (*gv)[c] += g.at(r, c);
          }
        }
      });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool vec = bv.rank() == 1;
  if (!vec && bv.rank() != 2) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = av.dim(0), k = av.dim(1);
  const std::size_t p = vec ? 1 : bv.dim(1);
  if (bv.dim(0) != k) shape_fail("matmul", a.shape(), b.shape());
  Tensor y(vec ? Shape{m} : Shape{m, p});
  kernels::gemm({m, p, k, false, false}, av.data(), bv.data(), y.data());
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(y), {a, b}, [ia, ib, m, k, p](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        if (Tensor* ga = t.grad_acc(ia)) {
          // dA = G B^T
          kernels::gemm({m, k, p, false, true}, g.data(), t.value(ib).data(),
                        ga->data());
        }
        if (Tensor* gb = t.grad_acc(ib)) {
          // dB = A^T G
          kernels::gemm({k, p, m, true, false}, t.value(ia).data(), g.data(),
                        gb->data());
        }
      });
}

namespace {

Var linear_impl(Var x, Var w, const Var* b) {
  require_rank("linear", w, 2);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const bool vec = xv.rank() == 1;
  if (!vec && xv.rank() != 2) shape_fail("linear", x.shape(), w.shape());
  const std::size_t rows = vec ? 1 : xv.dim(0);
  const std::size_t in = vec ? xv.dim(0) : xv.dim(1);
  const std::size_t out = wv.dim(0);
  if (wv.dim(1) != in) shape_fail("linear", x.shape(), w.shape());
  if (b && (b->value().rank() != 1 || b->value().dim(0) != out)) {
    shape_fail("linear", w.shape(), b->shape());
  }
  Tensor y(vec ? Shape{out} : Shape{rows, out});
  if (b) {
    const Tensor& bv = b->value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(bv.data().begin(), bv.data().end(),
                y.data().begin() + static_cast<long>(r * out));
    }
  }
  kernels::gemm({rows, out, in, false, true}, xv.data(), wv.data(), y.data());
  const auto ix = x.id(), iw = w.id();
  const std::uint32_t ib = b ? b->id() : ix;
  const bool has_b = b != nullptr;
  auto bw = [ix, iw, ib, has_b, rows, in, out](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (Tensor* gx = t.grad_acc(ix)) {
      // dX = G W
      kernels::gemm({rows, in, out, false, false}, g.data(), t.value(iw).data(),
                    gx->data());
    }
    if (Tensor* gw = t.grad_acc(iw)) {
      // dW = G^T X
      kernels::gemm({out, in, rows, true, false}, g.data(), t.value(ix).data(),
                    gw->data());
    }
    if (has_b) {
      if (Tensor* gb = t.grad_acc(ib)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < out; ++o) (*gb)[o] += g[r * out + o];
        }
      }
    }
  };
  if (b) return x.tape()->record(std::move(y), {x, w, *b}, std::move(bw));
  return x.tape()->record(std::move(y), {x, w}, std::move(bw));
}

}  // namespace

Var linear(Var x, Var w) { return linear_impl(x, w, nullptr); }
Var linear(Var x, Var w, Var b) { return linear_impl(x, w, &b); }

Var softmax(Var x) {
  require_rank("softmax", x, 1);
  const std::size_t k = x.value().dim(0);
  return reshape(softmax(reshape(x, {1, k}), 1), {k});
}

Var softmax(Var x, std::size_t axis) {
  require_rank("softmax", x, 2);
  if (axis > 1) throw DimensionError("softmax: axis must be 0 or 1");
  const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
  Tensor y(x.shape());
  // Groups: along axis 1 each row is a group; along axis 0 each column.
  const std::size_t groups = axis == 1 ? rows : cols;
  const std::size_t n = axis == 1 ? cols : rows;
  const std::size_t stride = axis == 1 ? 1 : cols;
  auto base_of = [axis, cols](std::size_t gi) {
    return axis == 1 ? gi * cols : gi;
  };
  for (std::size_t gi = 0; gi < groups; ++gi) {
    softmax_strided(x.value().data(), y.data(), base_of(gi), n, stride);
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(y), {x},
      [ix, groups, n, stride, base_of](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_acc(ix);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          softmax_backward_strided(t.value(self).data(), t.grad(self).data(),
                                   gx->data(), base_of(gi), n, stride);
        }
      });
}

Var log_softmax(Var x) {
  if (x.value().rank() == 1) {
    const std::size_t k = x.value().dim(0);
    return reshape(log_softmax(reshape(x, {1, k})), {k});
  }
  require_rank("log_softmax", x, 2);
  const std::size_t rows = x.value().dim(0), cols = x.value().dim(1);
  const Tensor& xv = x.value();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xv.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(xv.at(r, c) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) = xv.at(r, c) - lse;
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(y), {x}, [ix, rows, cols](Tape& t, std::uint32_t self) {
        Tensor* gx = t.grad_acc(ix);
        const Tensor& y = t.value(self);
        const Tensor& g = t.grad(self);
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t c = 0; c < cols; ++c) gs += g.at(r, c);
          for (std::size_t c = 0; c < cols; ++c) {
            gx->at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gs;
          }
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape()->record(Tensor::scalar(s), {x},
                          [ix](Tape& t, std::uint32_t self) {
                            const double g = t.grad(self)[0];
                            for (double& v : t.grad_acc(ix)->data()) v += g;
                          });
}

Var dot(Var a, Var b) {
  require_same("dot", a, b);
  double s = 0.0;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      Tensor::scalar(s), {a, b}, [ia, ib](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (Tensor* ga = t.grad_acc(ia)) {
          for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += g * bv[i];
        }
        if (Tensor* gb = t.grad_acc(ib)) {
          for (std::size_t i = 0; i < av.size(); ++i) (*gb)[i] += g * av[i];
        }
      });
}

Var colsum(Var m) {
  require_rank("colsum", m, 2);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  Tensor y({cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[c] += m.value().at(r, c);
  }
  const auto im = m.id();
  return m.tape()->record(std::move(y), {m},
                          [im, rows, cols](Tape& t, std::uint32_t self) {
                            Tensor* gm = t.grad_acc(im);
                            const Tensor& g = t.grad(self);
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                gm->at(r, c) += g[c];
                              }
                            }
                          });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero parts");
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> lens;
  for (const Var& p : parts) {
    require_rank("concat", p, 1);
    const auto d = p.value().data();
    out.insert(out.end(), d.begin(), d.end());
    ids.push_back(p.id());
    lens.push_back(d.size());
  }
  Tape* tape = parts.front().tape();
  return tape->record(Tensor::vector(std::move(out)), parts,
                      [ids, lens](Tape& t, std::uint32_t self) {
                        const Tensor& g = t.grad(self);
                        std::size_t off = 0;
                        for (std::size_t p = 0; p < ids.size(); ++p) {
                          if (Tensor* gp = t.grad_acc(ids[p])) {
                            for (std::size_t i = 0; i < lens[p]; ++i) {
                              (*gp)[i] += g[off + i];
                            }
                          }
                          off += lens[p];
                        }
                      });
}

Var hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("hconcat of zero parts");
  const std::size_t rows = parts.front().value().dim(0);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank("hconcat", p, 2);
    if (p.value().dim(0) != rows) {
      shape_fail("hconcat", parts.front().shape(), p.shape());
    }
    ids.push_back(p.id());
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor y({rows, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[p]; ++c) y.at(r, off + c) = v.at(r, c);
    }
    off += widths[p];
  }
  return parts.front().tape()->record(
      std::move(y), parts,
      [ids, widths, rows](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          if (Tensor* gp = t.grad_acc(ids[p])) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < widths[p]; ++c) {
                gp->at(r, c) += g.at(r, off + c);
              }
            }
          }
          off += widths[p];
        }
      });
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack of zero rows");
  const std::size_t cols = rows.front().value().size();
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  std::vector<std::uint32_t> ids;
  for (const Var& r : rows) {
    require_rank("stack", r, 1);
    if (r.value().size() != cols) {
      shape_fail("stack", rows.front().shape(), r.shape());
    }
    const auto d = r.value().data();
    out.insert(out.end(), d.begin(), d.end());
    ids.push_back(r.id());
  }
  return rows.front().tape()->record(
      Tensor::matrix(rows.size(), cols, std::move(out)), rows,
      [ids, cols](Tape& t, std::uint32_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t r = 0; r < ids.size(); ++r) {
          if (Tensor* gr = t.grad_acc(ids[r])) {
            for (std::size_t c = 0; c < cols; ++c) (*gr)[c] += g[r * cols + c];
          }
        }
      });
}

Var select(Var x, std::size_t index) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || index >= xv.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) +
                         " out of range for shape " + shape_str(xv.shape()));
  }
  Shape sub(xv.shape().begin() + 1, xv.shape().end());
  const std::size_t len = shape_numel(sub);
  const std::size_t off = index * len;
  std::vector<double> out(xv.data().begin() + static_cast<long>(off),
                          xv.data().begin() + static_cast<long>(off + len));
  const auto ix = x.id();
  return x.tape()->record(Tensor(std::move(sub), std::move(out)), {x},
                          [ix, off, len](Tape& t, std::uint32_t self) {
                            Tensor* gx = t.grad_acc(ix);
                            const Tensor& g = t.grad(self);
                            for (std::size_t i = 0; i < len; ++i) {
                              (*gx)[off + i] += g[i];
                            }
                          });
}

Var slice(Var x, std::size_t begin, std::size_t len) {
  require_rank("slice", x, 1);
  if (begin + len > x.value().dim(0)) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + len) + ") of shape " +
                         shape_str(x.shape()));
  }
  const auto d = x.value().data();
  std::vector<double> out(d.begin() + static_cast<long>(begin),
                          d.begin() + static_cast<long>(begin + len));
  const auto ix = x.id();
  return x.tape()->record(Tensor::vector(std::move(out)), {x},
                          [ix, begin, len](Tape& t, std::uint32_t self) {
                            Tensor* gx = t.grad_acc(ix);
                            const Tensor& g = t.grad(self);
                            for (std::size_t i = 0; i < len; ++i) {
                              (*gx)[begin + i] += g[i];
                            }
                          });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape()->record(std::move(y), {x},
                          [ix](Tape& t, std::uint32_t self) {
                            Tensor* gx = t.grad_acc(ix);
                            const Tensor& g = t.grad(self);
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              (*gx)[i] += g[i];
                            }
                          });
}

Var shift_rows(Var m, long offset) {
  require_rank("shift_rows", m, 2);
  const long rows = static_cast<long>(m.value().dim(0));
  const std::size_t cols = m.value().dim(1);
  Tensor y(m.shape());
  for (long r = 0; r < rows; ++r) {
    const long src = r + offset;
    if (src < 0 || src >= rows) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      y.at(static_cast<std::size_t>(r), c) =
          m.value().at(static_cast<std::size_t>(src), c);
    }
  }
  const auto im = m.id();
  return m.tape()->record(
      std::move(y), {m}, [im, rows, cols, offset](Tape& t, std::uint32_t self) {
        Tensor* gm = t.grad_acc(im);
        const Tensor& g = t.grad(self);
        for (long r = 0; r < rows; ++r) {
          const long src = r + offset;
          if (src < 0 || src >= rows) continue;
          for (std::size_t c = 0; c < cols; ++c) {
            gm->at(static_cast<std::size_t>(src), c) +=
                g.at(static_cast<std::size_t>(r), c);
          }
        }
      });
}

Var lstm_pointwise(Var gates, Var c_prev) {
  require_rank("lstm_pointwise", gates, 1);
  require_rank("lstm_pointwise", c_prev, 1);
  const std::size_t c = c_prev.value().dim(0);
  if (gates.value().dim(0) != 4 * c) {
    shape_fail("lstm_pointwise", gates.shape(), c_prev.shape());
  }
  const Tensor& gv = gates.value();
  const Tensor& cp = c_prev.value();
  Tensor y({2 * c});
  for (std::size_t j = 0; j < c; ++j) {
    const double i = stable_sigmoid(gv[j]);
    const double f = stable_sigmoid(gv[c + j]);
    const double g = std::tanh(gv[2 * c + j]);
    const double o = stable_sigmoid(gv[3 * c + j]);
    const double cell = f * cp[j] + i * g;
    y[c + j] = cell;
    y[j] = o * std::tanh(cell);
  }
  const auto ig = gates.id(), ic = c_prev.id();
  return gates.tape()->record(
      std::move(y), {gates, c_prev}, [ig, ic, c](Tape& t, std::uint32_t self) {
        const Tensor& gv = t.value(ig);
        const Tensor& cp = t.value(ic);
        const Tensor& y = t.value(self);
        const Tensor& gy = t.grad(self);
        Tensor* gg = t.grad_acc(ig);
        Tensor* gc = t.grad_acc(ic);
        for (std::size_t j = 0; j < c; ++j) {
          const double i = stable_sigmoid(gv[j]);
          const double f = stable_sigmoid(gv[c + j]);
          const double g = std::tanh(gv[2 * c + j]);
          const double o = stable_sigmoid(gv[3 * c + j]);
          const double tc = std::tanh(y[c + j]);
          const double dh = gy[j];
          const double dcell = gy[c + j] + dh * o * (1.0 - tc * tc);
          if (gg) {
            (*gg)[j] += dcell * g * i * (1.0 - i);
            (*gg)[c + j] += dcell * cp[j] * f * (1.0 - f);
            (*gg)[2 * c + j] += dcell * i * (1.0 - g * g);
            (*gg)[3 * c + j] += dh * tc * o * (1.0 - o);
          }
          if (gc) (*gc)[j] += dcell * f;
        }
      });
}

Var location_conv(Var x, Var filters, long shift) {
  require_rank("location_conv", x, 1);
  require_rank("location_conv", filters, 2);
  const long len = static_cast<long>(x.value().dim(0));
  const std::size_t nf = filters.value().dim(0);
  const long w = static_cast<long>(filters.value().dim(1));
  if (w > len) shape_fail("location_conv", x.shape(), filters.shape());
  const long half = (w - 1) / 2;
  const Tensor& xv = x.value();
  const Tensor& fv = filters.value();
  auto src_index = [len, shift, half](long j, long m) -> long {
    const long s = j + m - half + shift;
    return (s < 0 || s >= len) ? -1 : s;
  };
  Tensor y({static_cast<std::size_t>(len), nf});
  for (long j = 0; j < len; ++j) {
    // Shifted signal reads zero beyond its own window as well.
    for (std::size_t i = 0; i < nf; ++i) {
      double acc = 0.0;
      for (long m = 0; m < w; ++m) {
        const long pos = j + m - half;
        if (pos < 0 || pos >= len) continue;
        const long s = src_index(j, m);
        if (s < 0) continue;
        acc += fv.at(i, static_cast<std::size_t>(m)) *
               xv[static_cast<std::size_t>(s)];
      }
      y.at(static_cast<std::size_t>(j), i) = acc;
    }
  }
  const auto ixx = x.id(), iff = filters.id();
  return x.tape()->record(
      std::move(y), {x, filters},
      [ixx, iff, len, nf, w, half, src_index](Tape& t, std::uint32_t self) {
        const Tensor& xv = t.value(ixx);
        const Tensor& fv = t.value(iff);
        const Tensor& g = t.grad(self);
        Tensor* gx = t.grad_acc(ixx);
        Tensor* gf = t.grad_acc(iff);
        for (long j = 0; j < len; ++j) {
          for (std::size_t i = 0; i < nf; ++i) {
            const double gy = g.at(static_cast<std::size_t>(j), i);
            for (long m = 0; m < w; ++m) {
              const long pos = j + m - half;
              if (pos < 0 || pos >= len) continue;
              const long s = src_index(j, m);
              if (s < 0) continue;
              const auto su = static_cast<std::size_t>(s);
              const auto mu = static_cast<std::size_t>(m);
              if (gx) (*gx)[su] += gy * fv.at(i, mu);
              if (gf) gf->at(i, mu) += gy * xv[su];
            }
          }
        }
      });
}

}  // namespace ctcattn
