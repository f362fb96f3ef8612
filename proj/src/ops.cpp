#include "mmformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmf::ad {

using kernels::Trans;

namespace {

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("op on detached variable");
  return *a.tape();
}

void accumulate(Tape& t, Var dst, const Tensor& g, double s = 1.0) {
  if (!t.requires_grad(dst.id())) return;
  kernels::axpy(s, g.data(), t.grad_buffer(dst.id()).data());
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return tape_of(a).record(mmf::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return tape_of(a).record(mmf::sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    accumulate(t, a, g);
    accumulate(t, b, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.grad_buffer(a.id());
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.grad_buffer(b.id());
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  return tape_of(a).record(mmf::scale(a.value(), s), {a}, [a, s](Tape& t, NodeId self) {
    accumulate(t, a, t.grad_of(self), s);
  });
}

Var relu(Var a) {
  return tape_of(a).record(mmf::relu(a.value()), {a}, [a](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (av[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var matmul(Var a, Var b, Trans ta, Trans tb) {
  if (a.value().rank() != 2 || b.value().rank() != 2) {
    throw std::invalid_argument("matmul: expects matrices");
  }
  const std::size_t m = ta == Trans::no ? a.dim(0) : a.dim(1);
  const std::size_t k = ta == Trans::no ? a.dim(1) : a.dim(0);
  const std::size_t kb = tb == Trans::no ? b.dim(0) : b.dim(1);
  const std::size_t n = tb == Trans::no ? b.dim(1) : b.dim(0);
  if (k != kb) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm(ta, tb, m, n, k, 1.0, a.value().data(), b.value().data(), 0.0, out.data());
  return tape_of(a).record(std::move(out), {a, b}, [a, b, ta, tb, m, n, k](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);  // m x n
    if (t.requires_grad(a.id())) {
      Tensor& ga = t.grad_buffer(a.id());
      if (ta == Trans::no) {
        // dA (m x k) = G op(B)^T
        kernels::gemm(Trans::no, tb == Trans::no ? Trans::yes : Trans::no, m, k, n, 1.0,
                      g.data(), b.value().data(), 1.0, ga.data());
      } else {
        // A stored k x m: dA = op(B) G^T
        kernels::gemm(tb, Trans::yes, k, m, n, 1.0, b.value().data(), g.data(), 1.0, ga.data());
      }
    }
    if (t.requires_grad(b.id())) {
      Tensor& gb = t.grad_buffer(b.id());
      if (tb == Trans::no) {
        // dB (k x n) = op(A)^T G
        kernels::gemm(ta == Trans::no ? Trans::yes : Trans::no, Trans::no, k, n, m, 1.0,
                      a.value().data(), g.data(), 1.0, gb.data());
      } else {
        // B stored n x k: dB = G^T op(A)
        kernels::gemm(Trans::yes, ta, n, k, m, 1.0, g.data(), a.value().data(), 1.0, gb.data());
      }
    }
  });
}

Var batched_matmul(Var a, Var b) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1)) {
    throw std::invalid_argument("batched_matmul: shape mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  const std::size_t groups = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(2);
  Tensor out({groups, p, r});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    kernels::gemm(Trans::no, Trans::no, p, r, q, 1.0, a.value().data().subspan(gi * p * q, p * q),
                  b.value().data().subspan(gi * q * r, q * r), 0.0,
                  out.data().subspan(gi * p * r, p * r));
  }
  return tape_of(a).record(std::move(out), {a, b}, [a, b, groups, p, q, r](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const auto gs = g.data().subspan(gi * p * r, p * r);
      if (t.requires_grad(a.id())) {
        kernels::gemm(Trans::no, Trans::yes, p, q, r, 1.0, gs,
                      b.value().data().subspan(gi * q * r, q * r), 1.0,
                      t.grad_buffer(a.id()).data().subspan(gi * p * q, p * q));
      }
      if (t.requires_grad(b.id())) {
        kernels::gemm(Trans::yes, Trans::no, q, r, p, 1.0,
                      a.value().data().subspan(gi * p * q, p * q), gs, 1.0,
                      t.grad_buffer(b.id()).data().subspan(gi * q * r, q * r));
      }
    }
  });
}

Var add_bias(Var x, Var bias) {
  if (x.value().rank() != 2 || bias.size() != x.dim(1)) {
    throw std::invalid_argument("add_bias: " + shape_str(x.shape()) + " + " +
                                shape_str(bias.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias.value()[c];
  }
  return tape_of(x).record(std::move(out), {x, bias}, [x, bias, rows, cols](Tape& t, NodeId self) {
    const Tensor& g = t.grad_of(self);
    accumulate(t, x, g);
    if (t.requires_grad(bias.id())) {
      Tensor& gb = t.grad_buffer(bias.id());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, NodeId self) {
    accumulate(t, a, t.grad_of(self));
  });
}

Var permute(Var a, std::vector<std::size_t> perm) {
  Tensor out = permute_modes(a.value(), perm);
  return tape_of(a).record(std::move(out), {a}, [a, perm](Tape& t, NodeId self) {
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inverse[perm[k]] = k;
    accumulate(t, a, permute_modes(t.grad_of(self), inverse));
  });
}

Var concat(std::span<const Var> parts, std::size_t mode) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tensor out = mmf::concat(values, mode);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record(std::move(out), parts, [inputs, mode](Tape& t, NodeId self) {
        const Tensor& g = t.grad_of(self);
        std::size_t start = 0;
        for (const Var& p : inputs) {
          const std::size_t len = p.dim(mode);
          if (t.requires_grad(p.id())) accumulate(t, p, mmf::slice(g, mode, start, len));
          start += len;
        }
      });
}

Var slice(Var a, std::size_t mode, std::size_t start, std::size_t length) {
  Tensor out = mmf::slice(a.value(), mode, start, length);
  return tape_of(a).record(std::move(out), {a}, [a, mode, start, length](Tape& t, NodeId self) {
    if (!t.requires_grad(a.id())) return;
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    const Shape& s = a.shape();
    std::size_t outer = 1;
    for (std::size_t k = 0; k < mode; ++k) outer *= s[k];
    std::size_t inner = 1;
    for (std::size_t k = mode + 1; k < s.size(); ++k) inner *= s[k];
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t dst = (o * s[mode] + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) ga[dst + i] += g[o * length * inner + i];
    }
  });
}

Var reduce(Var a, std::size_t mode, ReduceOp op) {
  Tensor out = mmf::reduce(a.value(), mode, op);
  return tape_of(a).record(std::move(out), {a}, [a, mode, op](Tape& t, NodeId self) {
    if (!t.requires_grad(a.id())) return;
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    const Tensor& av = a.value();
    const std::size_t extent = av.dim(mode);
    std::size_t outer = 1;
    for (std::size_t k = 0; k < mode; ++k) outer *= av.dim(k);
    std::size_t inner = 1;
    for (std::size_t k = mode + 1; k < av.rank(); ++k) inner *= av.dim(k);
    const double w = op == ReduceOp::mean ? 1.0 / static_cast<double>(extent) : 1.0;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double gi = g[o * inner + i];
        if (op == ReduceOp::max) {
          std::size_t best = 0;
          for (std::size_t e = 1; e < extent; ++e) {
            if (av[(o * extent + e) * inner + i] > av[(o * extent + best) * inner + i]) best = e;
          }
          ga[(o * extent + best) * inner + i] += gi;
        } else {
          for (std::size_t e = 0; e < extent; ++e) ga[(o * extent + e) * inner + i] += w * gi;
        }
      }
    }
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape_of(a).record(Tensor::scalar(s), {a}, [a](Tape& t, NodeId self) {
    if (!t.requires_grad(a.id())) return;
    const double g = t.grad_of(self)[0];
    for (double& v : t.grad_buffer(a.id()).data()) v += g;
  });
}

Var mean_all(Var a) {
  if (a.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Var softmax_rows(Var x) {
  Tensor out = mmf::softmax_rows(x.value());
  return tape_of(x).record(std::move(out), {x}, [x](Tape& t, NodeId self) {
    if (!t.requires_grad(x.id())) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad_of(self);
    Tensor dx(y.shape());
    kernels::softmax_rows_backward(y.data(), g.data(), dx.data(), y.dim(0), y.dim(1));
    accumulate(t, x, dx);
  });
}

Var dropout(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape()) throw std::invalid_argument("dropout: mask shape mismatch");
  Tensor out = mmf::dropout(x.value(), mask);
  return tape_of(x).record(std::move(out), {x}, [x, mask](Tape& t, NodeId self) {
    accumulate(t, x, mmf::dropout(t.grad_of(self), mask));
  });
}

Var normalize_columns(Var x, double eps) {
  if (x.value().rank() != 2) throw std::invalid_argument("normalize_columns: expects a matrix");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> norms(cols, 0.0);
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) norms[c] += xv[r * cols + c] * xv[r * cols + c];
  }
  for (double& n : norms) n = std::sqrt(n) + eps;
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= norms[c];
  }
  return tape_of(x).record(std::move(out), {x}, [x, norms, rows, cols, eps](Tape& t, NodeId self) {
    if (!t.requires_grad(x.id())) return;
    const Tensor& g = t.grad_of(self);
    Tensor& gx = t.grad_buffer(x.id());
    const Tensor& xv = x.value();
    for (std::size_t c = 0; c < cols; ++c) {
      // y = x / (|x| + eps);  dy/dx = I/n - x x^T / (n * |x| * n) with n = |x| + eps.
      const double n = norms[c];
      const double len = n - eps;
      double gx_dot = 0.0;
      for (std::size_t r = 0; r < rows; ++r) gx_dot += g[r * cols + c] * xv[r * cols + c];
      for (std::size_t r = 0; r < rows; ++r) {
        double d = g[r * cols + c] / n;
        if (len > 0.0) d -= xv[r * cols + c] * gx_dot / (n * n * len);
        gx[r * cols + c] += d;
      }
    }
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  if (label >= z.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " >= " +
                            std::to_string(z.size()) + " classes");
  }
  const double mx = *std::max_element(z.data().begin(), z.data().end());
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  return tape_of(logits).record(
      Tensor::scalar(lse - z[label]), {logits}, [logits, label, lse](Tape& t, NodeId self) {
        if (!t.requires_grad(logits.id())) return;
        const double g = t.grad_of(self)[0];
        const Tensor& zv = logits.value();
        Tensor& gz = t.grad_buffer(logits.id());
        for (std::size_t i = 0; i < zv.size(); ++i) {
          gz[i] += g * (std::exp(zv[i] - lse) - (i == label ? 1.0 : 0.0));
        }
      });
}

}  // namespace mmf::ad
