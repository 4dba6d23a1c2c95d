#include "spikefuse/ops.hpp"

#include <algorithm>
#include <cmath>

namespace spikefuse {

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank)
    throw InvalidInput(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
}

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& par = parent(self, p);
      if (!par.requires_grad) continue;
      auto& g = par.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= s;
  return make_result("scale", a.shape(), std::move(out), {a}, [s](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v += s;
  return make_result("add_scalar", a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor mul_const(const Tensor& a, std::span<const double> factor) {
  if (factor.size() != a.size()) throw InvalidInput("mul_const: factor size mismatch");
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor[i];
  std::vector<double> f(factor.begin(), factor.end());
  return make_result("mul_const", a.shape(), std::move(out), {a}, [f = std::move(f)](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += f[i] * self.grad[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  return make_result("sigmoid", a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return make_result("tanh", a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_volume(shape) != a.size())
    throw InvalidInput("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double n = static_cast<double>(a.size());
  return make_result("mean", {1}, {s / n}, {a}, [n](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t c = last_dim(x);
  if (bias.size() != c) throw InvalidInput("add_bias: bias length does not match last axis of " + shape_str(x.shape()));
  std::vector<double> out(x.values().begin(), x.values().end());
  auto b = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
  return make_result("add_bias", x.shape(), std::move(out), {x, bias}, [c](Node& self) {
    auto& px = parent(self, 0);
    auto& pb = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight) {
  require_rank(weight, 2, "linear(weight)");
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (last_dim(x) != in)
    throw InvalidInput("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  const std::size_t rows = x.size() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> out(rows * out_dim, 0.0);
  auto xv = x.values(), wv = weight.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double* y = out.data() + r * out_dim;
    const double* xr = xv.data() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      if (a == 0.0) continue;
      const double* w = wv.data() + i * out_dim;
      for (std::size_t o = 0; o < out_dim; ++o) y[o] += a * w[o];
    }
  }
  return make_result("linear", std::move(shape), std::move(out), {x, weight}, [rows, in, out_dim](Node& self) {
    auto& px = parent(self, 0);
    auto& pw = parent(self, 1);
    const double* gy = self.grad.data();
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      const double* w = pw.value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = gy + r * out_dim;
        double* gxr = gx.data() + r * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double* wr = w + i * out_dim;
          double acc = 0.0;
          for (std::size_t o = 0; o < out_dim; ++o) acc += gr[o] * wr[o];
          gxr[i] += acc;
        }
      }
    }
    if (pw.requires_grad) {
      auto& gw = pw.grad_buffer();
      const double* xv = px.value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = gy + r * out_dim;
        const double* xr = xv + r * in;
        for (std::size_t i = 0; i < in; ++i) {
          const double a = xr[i];
          if (a == 0.0) continue;
          double* gwr = gw.data() + i * out_dim;
          for (std::size_t o = 0; o < out_dim; ++o) gwr[o] += a * gr[o];
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add_bias(linear(x, weight), bias); }

Tensor mul_broadcast_last(const Tensor& x, const Tensor& mask) {
  const std::size_t c = last_dim(x);
  Shape expect = x.shape();
  expect.back() = 1;
  if (mask.shape() != expect)
    throw InvalidInput("mul_broadcast_last: mask " + shape_str(mask.shape()) + " does not broadcast over " +
                       shape_str(x.shape()));
  std::vector<double> out(x.size());
  auto xv = x.values(), mv = mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mv[i / c];
  return make_result("mul_broadcast_last", x.shape(), std::move(out), {x, mask}, [c](Node& self) {
    auto& px = parent(self, 0);
    auto& pm = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pm.value[i / c];
    }
    if (pm.requires_grad) {
      auto& g = pm.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i / c] += self.grad[i] * px.value[i];
    }
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidInput("concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    widths.push_back(l.back());
    total += l.back();
    l.pop_back();
    if (l != lead) throw InvalidInput("concat_last: leading shapes differ");
  }
  const std::size_t rows = parts[0].size() / widths[0];
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result("concat_last", std::move(shape), std::move(out), parts, [widths, rows, total](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& p = parent(self, k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t c = last_dim(x);
  if (begin >= end || end > c) throw InvalidInput("slice_last: invalid range");
  const std::size_t w = end - begin, rows = x.size() / c;
  std::vector<double> out(rows * w);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * c + begin, w, out.data() + r * w);
  Shape shape = x.shape();
  shape.back() = w;
  return make_result("slice_last", std::move(shape), std::move(out), {x}, [c, w, rows, begin](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * c + begin + j] += self.grad[r * w + j];
  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw InvalidInput("transpose_last2: rank must be at least 2");
  const std::size_t a = x.shape()[x.rank() - 2], b = x.shape().back();
  const std::size_t blocks = x.size() / (a * b);
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t k = 0; k < blocks; ++k)
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j) out[k * a * b + j * a + i] = xv[k * a * b + i * b + j];
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return make_result("transpose_last2", std::move(shape), std::move(out), {x}, [a, b, blocks](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t k = 0; k < blocks; ++k)
      for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j) g[k * a * b + i * b + j] += self.grad[k * a * b + j * a + i];
  });
}

Tensor mix_tokens(const Tensor& x, const Tensor& adjacency) {
  require_rank(x, 4, "mix_tokens");
  require_rank(adjacency, 2, "mix_tokens(adjacency)");
  const std::size_t n = x.dim(2), c = x.dim(3);
  if (adjacency.dim(0) != n || adjacency.dim(1) != n)
    throw InvalidInput("mix_tokens: adjacency " + shape_str(adjacency.shape()) + " does not match " +
                       std::to_string(n) + " tokens");
  const std::size_t blocks = x.dim(0) * x.dim(1);
  std::vector<double> out(x.size(), 0.0);
  auto xv = x.values(), av = adjacency.values();
  for (std::size_t k = 0; k < blocks; ++k) {
    const double* xb = xv.data() + k * n * c;
    double* yb = out.data() + k * n * c;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = av[i * n + j];
        if (w == 0.0) continue;
        for (std::size_t ch = 0; ch < c; ++ch) yb[i * c + ch] += w * xb[j * c + ch];
      }
  }
  return make_result("mix_tokens", x.shape(), std::move(out), {x, adjacency}, [blocks, n, c](Node& self) {
    auto& px = parent(self, 0);
    auto& pa = parent(self, 1);
    for (std::size_t k = 0; k < blocks; ++k) {
      const double* gy = self.grad.data() + k * n * c;
      if (px.requires_grad) {
        double* gx = px.grad_buffer().data() + k * n * c;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double w = pa.value[i * n + j];
            if (w == 0.0) continue;
            for (std::size_t ch = 0; ch < c; ++ch) gx[j * c + ch] += w * gy[i * c + ch];
          }
      }
      if (pa.requires_grad) {
        auto& ga = pa.grad_buffer();
        const double* xb = px.value.data() + k * n * c;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) acc += gy[i * c + ch] * xb[j * c + ch];
            ga[i * n + j] += acc;
          }
      }
    }
  });
}

Tensor mix_time(const Tensor& x, std::span<const double> m, std::size_t rows) {
  if (x.rank() < 2) throw InvalidInput("mix_time: rank must be at least 2");
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  if (m.size() != rows * steps) throw InvalidInput("mix_time: matrix does not match time axis");
  const std::size_t inner = x.size() / (batch * steps);
  std::vector<double> out(batch * rows * inner, 0.0);
  auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < rows; ++r) {
      double* y = out.data() + (b * rows + r) * inner;
      for (std::size_t t = 0; t < steps; ++t) {
        const double w = m[r * steps + t];
        if (w == 0.0) continue;
        const double* xr = xv.data() + (b * steps + t) * inner;
        for (std::size_t i = 0; i < inner; ++i) y[i] += w * xr[i];
      }
    }
  Shape shape = x.shape();
  shape[1] = rows;
  std::vector<double> mat(m.begin(), m.end());
  return make_result("mix_time", std::move(shape), std::move(out), {x},
                     [mat = std::move(mat), batch, rows, steps, inner](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* gy = self.grad.data() + (b * rows + r) * inner;
                           for (std::size_t t = 0; t < steps; ++t) {
                             const double w = mat[r * steps + t];
                             if (w == 0.0) continue;
                             double* gx = g.data() + (b * steps + t) * inner;
                             for (std::size_t i = 0; i < inner; ++i) gx[i] += w * gy[i];
                           }
                         }
                     });
}

Tensor shift_time(const Tensor& x, std::ptrdiff_t offset) {
  if (x.rank() < 2) throw InvalidInput("shift_time: rank must be at least 2");
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  const std::size_t inner = x.size() / (batch * steps);
  std::vector<double> out(x.size(), 0.0);
  auto xv = x.values();
  const auto src_of = [&](std::size_t t) -> std::ptrdiff_t { return static_cast<std::ptrdiff_t>(t) + offset; };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      const auto s = src_of(t);
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
      std::copy_n(xv.data() + (b * steps + static_cast<std::size_t>(s)) * inner, inner,
                  out.data() + (b * steps + t) * inner);
    }
  return make_result("shift_time", x.shape(), std::move(out), {x}, [batch, steps, inner, offset](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < steps; ++t) {
        const auto s = static_cast<std::ptrdiff_t>(t) + offset;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
        double* gx = g.data() + (b * steps + static_cast<std::size_t>(s)) * inner;
        const double* gy = self.grad.data() + (b * steps + t) * inner;
        for (std::size_t i = 0; i < inner; ++i) gx[i] += gy[i];
      }
  });
}

Tensor token_gram(const Tensor& k, const Tensor& v) {
  require_rank(k, 4, "token_gram");
  require_rank(v, 4, "token_gram");
  if (k.dim(0) != v.dim(0) || k.dim(1) != v.dim(1) || k.dim(2) != v.dim(2))
    throw InvalidInput("token_gram: leading shapes differ");
  const std::size_t blocks = k.dim(0) * k.dim(1), n = k.dim(2), c1 = k.dim(3), c2 = v.dim(3);
  std::vector<double> out(blocks * c1 * c2, 0.0);
  auto kv = k.values(), vv = v.values();
  for (std::size_t b = 0; b < blocks; ++b) {
    double* g = out.data() + b * c1 * c2;
    for (std::size_t t = 0; t < n; ++t) {
      const double* kr = kv.data() + (b * n + t) * c1;
      const double* vr = vv.data() + (b * n + t) * c2;
      for (std::size_t i = 0; i < c1; ++i) {
        if (kr[i] == 0.0) continue;
        for (std::size_t j = 0; j < c2; ++j) g[i * c2 + j] += kr[i] * vr[j];
      }
    }
  }
  Shape shape{k.dim(0), k.dim(1), c1, c2};
  return make_result("token_gram", std::move(shape), std::move(out), {k, v}, [blocks, n, c1, c2](Node& self) {
    auto& pk = parent(self, 0);
    auto& pv = parent(self, 1);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* gg = self.grad.data() + b * c1 * c2;
      for (std::size_t t = 0; t < n; ++t) {
        const double* kr = pk.value.data() + (b * n + t) * c1;
        const double* vr = pv.value.data() + (b * n + t) * c2;
        if (pk.requires_grad) {
          double* gk = pk.grad_buffer().data() + (b * n + t) * c1;
          for (std::size_t i = 0; i < c1; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c2; ++j) acc += gg[i * c2 + j] * vr[j];
            gk[i] += acc;
          }
        }
        if (pv.requires_grad) {
          double* gv = pv.grad_buffer().data() + (b * n + t) * c2;
          for (std::size_t i = 0; i < c1; ++i) {
            if (kr[i] == 0.0) continue;
            for (std::size_t j = 0; j < c2; ++j) gv[j] += kr[i] * gg[i * c2 + j];
          }
        }
      }
    }
  });
}

Tensor apply_gram(const Tensor& q, const Tensor& gram) {
  require_rank(q, 4, "apply_gram");
  require_rank(gram, 4, "apply_gram");
  const std::size_t blocks = q.dim(0) * q.dim(1), n = q.dim(2), c1 = q.dim(3), c2 = gram.dim(3);
  if (gram.dim(0) != q.dim(0) || gram.dim(1) != q.dim(1) || gram.dim(2) != c1)
    throw InvalidInput("apply_gram: gram " + shape_str(gram.shape()) + " does not match " + shape_str(q.shape()));
  std::vector<double> out(blocks * n * c2, 0.0);
  auto qv = q.values(), gv = gram.values();
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* g = gv.data() + b * c1 * c2;
    for (std::size_t t = 0; t < n; ++t) {
      const double* qr = qv.data() + (b * n + t) * c1;
      double* y = out.data() + (b * n + t) * c2;
      for (std::size_t i = 0; i < c1; ++i) {
        if (qr[i] == 0.0) continue;
        for (std::size_t j = 0; j < c2; ++j) y[j] += qr[i] * g[i * c2 + j];
      }
    }
  }
  Shape shape{q.dim(0), q.dim(1), n, c2};
  return make_result("apply_gram", std::move(shape), std::move(out), {q, gram}, [blocks, n, c1, c2](Node& self) {
    auto& pq = parent(self, 0);
    auto& pg = parent(self, 1);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* g = pg.value.data() + b * c1 * c2;
      for (std::size_t t = 0; t < n; ++t) {
        const double* gy = self.grad.data() + (b * n + t) * c2;
        const double* qr = pq.value.data() + (b * n + t) * c1;
        if (pq.requires_grad) {
          double* gq = pq.grad_buffer().data() + (b * n + t) * c1;
          for (std::size_t i = 0; i < c1; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < c2; ++j) acc += gy[j] * g[i * c2 + j];
            gq[i] += acc;
          }
        }
        if (pg.requires_grad) {
          double* gg = pg.grad_buffer().data() + b * c1 * c2;
          for (std::size_t i = 0; i < c1; ++i) {
            if (qr[i] == 0.0) continue;
            for (std::size_t j = 0; j < c2; ++j) gg[i * c2 + j] += qr[i] * gy[j];
          }
        }
      }
    }
  });
}

Tensor pad_tokens(const Tensor& x, std::size_t tokens) {
  require_rank(x, 4, "pad_tokens");
  const std::size_t blocks = x.dim(0) * x.dim(1), n = x.dim(2), c = x.dim(3);
  if (tokens < n) throw InvalidInput("pad_tokens: target token count smaller than input");
  if (tokens == n) return x;
  std::vector<double> out(blocks * tokens * c, 0.0);
  auto xv = x.values();
  for (std::size_t b = 0; b < blocks; ++b) std::copy_n(xv.data() + b * n * c, n * c, out.data() + b * tokens * c);
  Shape shape{x.dim(0), x.dim(1), tokens, c};
  return make_result("pad_tokens", std::move(shape), std::move(out), {x}, [blocks, n, c, tokens](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t i = 0; i < n * c; ++i) g[b * n * c + i] += self.grad[b * tokens * c + i];
  });
}

Tensor mean_tokens(const Tensor& x) {
  require_rank(x, 4, "mean_tokens");
  const std::size_t batch = x.dim(0), per = x.dim(1) * x.dim(2), c = x.dim(3);
  std::vector<double> out(batch * c, 0.0);
  auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < per; ++k)
      for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += xv[(b * per + k) * c + ch];
  const double inv = 1.0 / static_cast<double>(per);
  for (auto& v : out) v *= inv;
  return make_result("mean_tokens", {batch, c}, std::move(out), {x}, [batch, per, c, inv](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t k = 0; k < per; ++k)
        for (std::size_t ch = 0; ch < c; ++ch) g[(b * per + k) * c + ch] += inv * self.grad[b * c + ch];
  });
}

Tensor add_leading(const Tensor& x, const Tensor& p) {
  if (x.rank() != p.rank() + 1 || !std::equal(p.shape().begin(), p.shape().end(), x.shape().begin() + 1))
    throw InvalidInput("add_leading: " + shape_str(p.shape()) + " does not broadcast over " + shape_str(x.shape()));
  const std::size_t n = p.size();
  std::vector<double> out(x.values().begin(), x.values().end());
  auto pv = p.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pv[i % n];
  return make_result("add_leading", x.shape(), std::move(out), {x, p}, [n](Node& self) {
    auto& px = parent(self, 0);
    auto& pp = parent(self, 1);
    if (px.requires_grad) {
      auto& g = px.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pp.requires_grad) {
      auto& g = pp.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor row_normalize(const Tensor& m) {
  require_rank(m, 2, "row_normalize");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  auto mv = m.values();
  std::vector<double> sums(rows, 0.0), out(m.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) sums[r] += mv[r * cols + c];
    if (!(sums[r] > 0.0)) throw InvalidInput("row_normalize: row " + std::to_string(r) + " has non-positive sum");
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = mv[r * cols + c] / sums[r];
  }
  return make_result("row_normalize", m.shape(), std::move(out), {m}, [sums, rows, cols](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += self.grad[r * cols + c] * self.value[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += (self.grad[r * cols + c] - dot) / sums[r];
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  return make_result("clamp", x.shape(), std::move(out), {x}, [lo, hi](Node& self) {
    auto& p = parent(self, 0);
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > lo && p.value[i] < hi) g[i] += self.grad[i];
  });
}

Tensor sparse_mix(const Tensor& x, const std::vector<CsrMatrix>& mats) {
  require_rank(x, 3, "sparse_mix");
  const std::size_t batch = x.dim(0), m = x.dim(1), c = x.dim(2);
  if (mats.size() != batch) throw InvalidInput("sparse_mix: one matrix per batch entry required");
  for (const auto& h : mats)
    if (h.rows != m || h.cols != m) throw InvalidInput("sparse_mix: matrix does not match node count");
  std::vector<double> out(x.size(), 0.0);
  auto xv = x.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& h = mats[b];
    for (std::size_t i = 0; i < m; ++i) {
      double* y = out.data() + (b * m + i) * c;
      for (std::size_t e = h.row_ptr[i]; e < h.row_ptr[i + 1]; ++e) {
        const double w = h.val[e];
        const double* xr = xv.data() + (b * m + h.col[e]) * c;
        for (std::size_t ch = 0; ch < c; ++ch) y[ch] += w * xr[ch];
      }
    }
  }
  return make_result("sparse_mix", x.shape(), std::move(out), {x}, [mats, batch, m, c](Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& h = mats[b];
      for (std::size_t i = 0; i < m; ++i) {
        const double* gy = self.grad.data() + (b * m + i) * c;
        for (std::size_t e = h.row_ptr[i]; e < h.row_ptr[i + 1]; ++e) {
          double* gx = g.data() + (b * m + h.col[e]) * c;
          for (std::size_t ch = 0; ch < c; ++ch) gx[ch] += h.val[e] * gy[ch];
        }
      }
    }
  });
}

Tensor linear_recurrence(const Tensor& u, const Tensor& decay_logit) {
  if (u.rank() < 3) throw InvalidInput("linear_recurrence: input must be [B, T, ..., S]");
  const std::size_t s = u.shape().back();
  if (decay_logit.size() != s) throw InvalidInput("linear_recurrence: decay length does not match state size");
  const std::size_t batch = u.dim(0), steps = u.dim(1), inner = u.size() / (batch * steps);
  std::vector<double> a(s);
  for (std::size_t j = 0; j < s; ++j) a[j] = 1.0 / (1.0 + std::exp(-decay_logit.values()[j]));
  std::vector<double> h(u.size());
  auto uv = u.values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t base = (b * steps + t) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double prev = t == 0 ? 0.0 : h[base - inner + i];
        h[base + i] = a[i % s] * prev + uv[base + i];
        if (!std::isfinite(h[base + i])) throw NumericError("linear_recurrence: non-finite state");
      }
    }
  return make_result("linear_recurrence", u.shape(), std::move(h), {u, decay_logit},
                     [a, batch, steps, inner, s](Node& self) {
                       auto& pu = parent(self, 0);
                       auto& pd = parent(self, 1);
                       std::vector<double> carry(inner);
                       std::vector<double> ga(s, 0.0);
                       for (std::size_t b = 0; b < batch; ++b) {
                         std::fill(carry.begin(), carry.end(), 0.0);
                         for (std::size_t t = steps; t-- > 0;) {
                           const std::size_t base = (b * steps + t) * inner;
                           for (std::size_t i = 0; i < inner; ++i) {
                             // total gradient reaching h[t]
                             const double gh = self.grad[base + i] + a[i % s] * carry[i];
                             carry[i] = gh;
                             if (t > 0) ga[i % s] += gh * self.value[base - inner + i];
                           }
                           if (pu.requires_grad) {
                             auto& gu = pu.grad_buffer();
                             for (std::size_t i = 0; i < inner; ++i) gu[base + i] += carry[i];
                           }
                         }
                       }
                       if (pd.requires_grad) {
                         auto& gd = pd.grad_buffer();
                         for (std::size_t j = 0; j < s; ++j) gd[j] += ga[j] * a[j] * (1.0 - a[j]);
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != batch) throw InvalidInput("softmax_cross_entropy: label count does not match batch");
  auto lv = logits.values();
  std::vector<double> probs(batch * k);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k)
      throw InvalidInput("softmax_cross_entropy: label " + std::to_string(labels[b]) + " out of range");
    const double* row = lv.data() + b * k;
    for (std::size_t j = 0; j < k; ++j)
      if (!std::isfinite(row[j])) throw NumericError("softmax_cross_entropy: non-finite logits");
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[b]] - mx - std::log(z));
  }
  loss /= static_cast<double>(batch);
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result("softmax_cross_entropy", {1}, {loss}, {logits},
                     [probs = std::move(probs), lab = std::move(lab), batch, k](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       const double scale = self.grad[0] / static_cast<double>(batch);
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double target = static_cast<int>(j) == lab[b] ? 1.0 : 0.0;
                           g[b * k + j] += scale * (probs[b * k + j] - target);
                         }
                     });
}

}  // namespace spikefuse
