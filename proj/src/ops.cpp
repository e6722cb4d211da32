#include "ctxdit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctxdit/op_support.hpp"

namespace ctxdit {

using detail::make_result;
using detail::Node;
using detail::parent_grad;

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " do not broadcast");
    out[i] = std::max(da, db);
  }
  return out;
}

// Maps a flat index of the broadcast result to a flat index of one operand.
class IndexMap {
 public:
  IndexMap(const Shape& out, const Shape& in) : n_in_(shape_numel(in)) {
    if (in == out) {
      kind_ = Kind::kIdentity;
    } else if (n_in_ == 1) {
      kind_ = Kind::kScalar;
    } else if (is_suffix(out, in)) {
      kind_ = Kind::kSuffix;
    } else {
      kind_ = Kind::kTable;
      std::size_t r = out.size();
      std::vector<std::size_t> stride(r, 0);
      std::size_t s = 1;
      for (std::size_t i = in.size(); i-- > 0;) {
        std::size_t oi = i + (r - in.size());
        stride[oi] = in[i] == 1 ? 0 : s;
        s *= in[i];
      }
      table_.resize(shape_numel(out));
      std::vector<std::size_t> idx(r, 0);
      for (std::size_t flat = 0; flat < table_.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < r; ++k) off += idx[k] * stride[k];
        table_[flat] = off;
        for (std::size_t k = r; k-- > 0;) {
          if (++idx[k] < out[k]) break;
          idx[k] = 0;
        }
      }
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::kIdentity: return i;
      case Kind::kScalar: return 0;
      case Kind::kSuffix: return i % n_in_;
      default: return table_[i];
    }
  }

 private:
  enum class Kind { kIdentity, kScalar, kSuffix, kTable };

  static bool is_suffix(const Shape& out, const Shape& in) {
    if (in.size() > out.size()) return false;
    // Leading dims of `in` may be 1; the rest must equal the trailing dims of `out`.
    std::size_t lead = 0;
    while (lead < in.size() && in[lead] == 1) ++lead;
    for (std::size_t i = lead; i < in.size(); ++i) {
      if (in[i] != out[out.size() - in.size() + i]) return false;
    }
    return true;
  }

  Kind kind_ = Kind::kIdentity;
  std::size_t n_in_;
  std::vector<std::size_t> table_;
};

template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  Shape out = broadcast_shape(a.shape(), b.shape(), op);
  auto ma = std::make_shared<IndexMap>(out, a.shape());
  auto mb = std::make_shared<IndexMap>(out, b.shape());
  std::size_t n = shape_numel(out);
  std::vector<Scalar> y(n);
  auto xa = a.data();
  auto xb = b.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = f(xa[(*ma)(i)], xb[(*mb)(i)]);
  return make_result(op, out, std::move(y), {a, b}, [ma, mb, da, db](Node& self) {
    const auto& pa = self.parents[0]->data;
    const auto& pb = self.parents[1]->data;
    Scalar* ga = parent_grad(self, 0);
    Scalar* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      std::size_t ia = (*ma)(i), ib = (*mb)(i);
      Scalar g = self.grad[i];
      if (ga) ga[ia] += g * da(pa[ia], pb[ib]);
      if (gb) gb[ib] += g * db(pa[ia], pb[ib]);
    }
  });
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D d) {
  auto x = a.data();
  std::vector<Scalar> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(op, a.shape(), std::move(y), {a}, [d](Node& self) {
    const auto& x = self.parents[0]->data;
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * d(x[i], self.data[i]);
  });
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(a.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; }, [](Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar) { return Scalar(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; }, [](Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar) { return Scalar(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; }, [](Scalar, Scalar y) { return y; },
      [](Scalar x, Scalar) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (auto v : b.data())
    if (v == Scalar(0)) throw NumericError("div: division by exact zero");
  return binary(
      "div", a, b, [](Scalar x, Scalar y) { return x / y; }, [](Scalar, Scalar y) { return 1 / y; },
      [](Scalar x, Scalar y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, Scalar b) {
  return unary(
      "add_scalar", a, [b](Scalar x) { return x + b; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor scale(const Tensor& a, Scalar s) {
  return unary(
      "scale", a, [s](Scalar x) { return x * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor div(const Tensor& a, Scalar b) {
  if (b == Scalar(0)) throw NumericError("div: division by exact zero");
  return unary(
      "div_scalar", a, [b](Scalar x) { return x / b; }, [b](Scalar, Scalar) { return 1 / b; });
}

Tensor neg(const Tensor& a) { return scale(a, -1); }

Tensor sqrt(const Tensor& a) {
  for (auto v : a.data())
    if (v < 0) throw NumericError("sqrt: negative input");
  return unary(
      "sqrt", a, [](Scalar x) { return std::sqrt(x); },
      [](Scalar, Scalar y) {
        if (y == 0) throw NumericError("sqrt: gradient undefined at 0");
        return Scalar(0.5) / y;
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& a) {
  for (auto v : a.data())
    if (!(v > 0)) throw NumericError("log: non-positive input");
  return unary(
      "log", a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return 1 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return 1 - y * y; });
}

Tensor gelu(const Tensor& a) {
  constexpr Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
  constexpr Scalar c = Scalar(0.044715);
  return unary(
      "gelu", a,
      [](Scalar x) { return Scalar(0.5) * x * (1 + std::tanh(k * (x + c * x * x * x))); },
      [](Scalar x, Scalar) {
        Scalar u = k * (x + c * x * x * x);
        Scalar th = std::tanh(u);
        Scalar du = k * (1 + 3 * c * x * x);
        return Scalar(0.5) * (1 + th) + Scalar(0.5) * x * (1 - th * th) * du;
      });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](Scalar x) { return x / (1 + std::exp(-x)); },
      [](Scalar x, Scalar) {
        Scalar s = 1 / (1 + std::exp(-x));
        return s * (1 + x * (1 - s));
      });
}

Tensor sum(const Tensor& a) {
  Scalar s = 0;
  for (auto v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    auto n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  auto xa = a.data();
  auto xb = b.data();
  Scalar s = 0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    Scalar d = xa[i] - xb[i];
    s += d * d;
  }
  auto n = static_cast<Scalar>(xa.size());
  return make_result("mse", {1}, {s / n}, {a, b}, [n](Node& self) {
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    Scalar* ga = parent_grad(self, 0);
    Scalar* gb = parent_grad(self, 1);
    Scalar c = 2 * self.grad[0] / n;
    for (std::size_t i = 0; i < xa.size(); ++i) {
      Scalar d = c * (xa[i] - xb[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands need rank >= 2");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t m = sa[sa.size() - 2], k = sa.back();
  std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb)
    throw ShapeError("matmul: inner dims differ, " + shape_str(sa) + " x " + shape_str(sb));
  Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
  Shape batch = broadcast_shape(ba, bb, "matmul");
  std::size_t nb = shape_numel(batch);
  IndexMap map_a(batch, ba.empty() ? Shape{1} : ba);
  IndexMap map_b(batch, bb.empty() ? Shape{1} : bb);
  std::vector<std::size_t> off_a(nb), off_b(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    off_a[i] = (ba.empty() ? 0 : map_a(i)) * m * k;
    off_b[i] = (bb.empty() ? 0 : map_b(i)) * k * n;
  }
  Shape out = batch;
  out.push_back(m);
  out.push_back(n);
  std::vector<Scalar> c(nb * m * n, 0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    const Scalar* pa = A.data() + off_a[bi];
    const Scalar* pb = B.data() + off_b[bi];
    Scalar* pc = c.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      Scalar* crow = pc + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        Scalar av = pa[i * k + p];
        if (av == 0) continue;
        const Scalar* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return make_result("matmul", out, std::move(c), {a, b},
                     [m, k, n, nb, off_a = std::move(off_a), off_b = std::move(off_b)](Node& self) {
                       const Scalar* A = self.parents[0]->data.data();
                       const Scalar* B = self.parents[1]->data.data();
                       Scalar* gA = parent_grad(self, 0);
                       Scalar* gB = parent_grad(self, 1);
                       for (std::size_t bi = 0; bi < nb; ++bi) {
                         const Scalar* dc = self.grad.data() + bi * m * n;
                         const Scalar* pa = A + off_a[bi];
                         const Scalar* pb = B + off_b[bi];
                         if (gA) {
                           Scalar* ga = gA + off_a[bi];
                           for (std::size_t i = 0; i < m; ++i) {
                             const Scalar* drow = dc + i * n;
                             for (std::size_t p = 0; p < k; ++p) {
                               const Scalar* brow = pb + p * n;
                               Scalar s = 0;
                               for (std::size_t j = 0; j < n; ++j) s += drow[j] * brow[j];
                               ga[i * k + p] += s;
                             }
                           }
                         }
                         if (gB) {
                           Scalar* gb = gB + off_b[bi];
                           for (std::size_t i = 0; i < m; ++i) {
                             const Scalar* drow = dc + i * n;
                             for (std::size_t p = 0; p < k; ++p) {
                               Scalar av = pa[i * k + p];
                               if (av == 0) continue;
                               Scalar* grow = gb + p * n;
                               for (std::size_t j = 0; j < n; ++j) grow[j] += av * drow[j];
                             }
                           }
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank must be >= 2");
  Shape s = a.shape();
  std::size_t r = s[s.size() - 2], c = s.back();
  std::swap(s[s.size() - 2], s.back());
  std::size_t nb = a.numel() / (r * c);
  auto x = a.data();
  std::vector<Scalar> y(x.size());
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) y[b * r * c + j * r + i] = x[b * r * c + i * c + j];
  return make_result("transpose", s, std::move(y), {a}, [r, c, nb](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<Scalar> y(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(y), {a}, [](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax: empty shape");
  std::size_t n = x.dim(-1);
  std::size_t rows = x.numel() / n;
  auto in = x.data();
  std::vector<Scalar> y(in.size());
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = in.data() + r * n;
    Scalar* yr = y.data() + r * n;
    Scalar mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(xr[j]) || xr[j] == -kNegInf) throw NumericError("softmax: NaN or +inf input");
      mx = std::max(mx, xr[j]);
    }
    if (mx == kNegInf) throw MaskError("softmax: row " + std::to_string(r) + " is fully masked");
    Scalar z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = xr[j] == kNegInf ? Scalar(0) : std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_result("softmax", x.shape(), std::move(y), {x}, [n, rows](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const Scalar* yr = self.data.data() + r * n;
      const Scalar* dy = self.grad.data() + r * n;
      Scalar dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += yr[j] * (dy[j] - dot);
    }
  });
}

namespace {

// Shared core: returns normalized rows plus per-row inverse std.
void normalize_rows(std::span<const Scalar> x, std::size_t n, Scalar eps, std::vector<Scalar>& xhat,
                    std::vector<Scalar>& inv) {
  std::size_t rows = x.size() / n;
  xhat.resize(x.size());
  inv.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Scalar* xr = x.data() + r * n;
    Scalar mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<Scalar>(n);
    Scalar var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Scalar>(n);
    Scalar is = 1 / std::sqrt(var + eps);
    inv[r] = is;
    for (std::size_t j = 0; j < n; ++j) xhat[r * n + j] = (xr[j] - mu) * is;
  }
}

// dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
void normalize_rows_backward(const Scalar* xhat, const Scalar* dxhat, const std::vector<Scalar>& inv,
                             std::size_t n, Scalar* dx) {
  for (std::size_t r = 0; r < inv.size(); ++r) {
    const Scalar* h = xhat + r * n;
    const Scalar* d = dxhat + r * n;
    Scalar md = 0, mdh = 0;
    for (std::size_t j = 0; j < n; ++j) {
      md += d[j];
      mdh += d[j] * h[j];
    }
    md /= static_cast<Scalar>(n);
    mdh /= static_cast<Scalar>(n);
    for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += inv[r] * (d[j] - md - h[j] * mdh);
  }
}

}  // namespace

Tensor layernorm(const Tensor& x, Scalar eps) {
  std::size_t n = x.dim(-1);
  std::vector<Scalar> xhat;
  auto inv = std::make_shared<std::vector<Scalar>>();
  normalize_rows(x.data(), n, eps, xhat, *inv);
  return make_result("layernorm", x.shape(), std::move(xhat), {x}, [n, inv](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    normalize_rows_backward(self.data.data(), self.grad.data(), *inv, n, g);
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
  std::size_t n = x.dim(-1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    throw ShapeError("layernorm: gain/bias must have shape [" + std::to_string(n) + "]");
  auto xhat = std::make_shared<std::vector<Scalar>>();
  auto inv = std::make_shared<std::vector<Scalar>>();
  normalize_rows(x.data(), n, eps, *xhat, *inv);
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<Scalar> y(xhat->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*xhat)[i] * gv[i % n] + bv[i % n];
  return make_result("layernorm_affine", x.shape(), std::move(y), {x, gain, bias},
                     [n, xhat, inv](Node& self) {
                       Scalar* gx = parent_grad(self, 0);
                       Scalar* gg = parent_grad(self, 1);
                       Scalar* gb = parent_grad(self, 2);
                       const auto& gain = self.parents[1]->data;
                       const auto& dy = self.grad;
                       if (gg || gb) {
                         for (std::size_t i = 0; i < dy.size(); ++i) {
                           if (gg) gg[i % n] += dy[i] * (*xhat)[i];
                           if (gb) gb[i % n] += dy[i];
                         }
                       }
                       if (gx) {
                         std::vector<Scalar> dxhat(dy.size());
                         for (std::size_t i = 0; i < dy.size(); ++i) dxhat[i] = dy[i] * gain[i % n];
                         normalize_rows_backward(xhat->data(), dxhat.data(), *inv, n, gx);
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin >= end || end > a.dim(0))
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + shape_str(a.shape()));
  std::size_t row = a.numel() / a.dim(0);
  Shape s = a.shape();
  s[0] = end - begin;
  auto x = a.data();
  std::vector<Scalar> y(x.begin() + static_cast<std::ptrdiff_t>(begin * row),
                        x.begin() + static_cast<std::ptrdiff_t>(end * row));
  return make_result("slice_rows", s, std::move(y), {a}, [begin, row](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    g += begin * row;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape s = parts[0].shape();
  std::size_t rows = 0;
  std::vector<Scalar> y;
  for (const auto& p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    if (p.rank() != s.size() || !std::equal(tail.begin(), tail.end(), s.begin() + 1))
      throw ShapeError("concat_rows: trailing dims differ, " + shape_str(p.shape()) + " vs " + shape_str(s));
    rows += p.dim(0);
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  s[0] = rows;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.numel());
  return make_result("concat_rows", s, std::move(y), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (Scalar* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin >= end || end > cols) throw ShapeError("slice_cols: bad column range");
  std::size_t w = end - begin;
  auto x = a.data();
  std::vector<Scalar> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * cols + begin), w, y.begin() + static_cast<std::ptrdiff_t>(r * w));
  return make_result("slice_cols", {rows, w}, std::move(y), {a}, [rows, cols, begin, w](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * cols + begin + j] += self.grad[r * w + j];
  });
}

Tensor repeat_rows(const Tensor& a, std::size_t n) {
  require_rank(a, 2, "repeat_rows");
  if (a.dim(0) != 1 || n == 0) throw ShapeError("repeat_rows: expects a [1, k] input and n > 0");
  std::size_t k = a.dim(1);
  std::vector<Scalar> y;
  y.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) y.insert(y.end(), a.data().begin(), a.data().end());
  return make_result("repeat_rows", {n, k}, std::move(y), {a}, [n, k](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) g[j] += self.grad[i * k + j];
  });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_rank(x, 2, "split_heads");
  std::size_t n = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0) throw ShapeError("split_heads: width not divisible by heads");
  std::size_t hd = d / heads;
  auto in = x.data();
  std::vector<Scalar> y(in.size());
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t h = 0; h < heads; ++h)
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(t * d + h * hd), hd,
                  y.begin() + static_cast<std::ptrdiff_t>((h * n + t) * hd));
  return make_result("split_heads", {heads, n, hd}, std::move(y), {x}, [n, heads, hd, d](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < hd; ++j) g[t * d + h * hd + j] += self.grad[(h * n + t) * hd + j];
  });
}

Tensor merge_heads(const Tensor& x) {
  require_rank(x, 3, "merge_heads");
  std::size_t heads = x.dim(0), n = x.dim(1), hd = x.dim(2), d = heads * hd;
  auto in = x.data();
  std::vector<Scalar> y(in.size());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < n; ++t)
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((h * n + t) * hd), hd,
                  y.begin() + static_cast<std::ptrdiff_t>(t * d + h * hd));
  return make_result("merge_heads", {n, d}, std::move(y), {x}, [n, heads, hd, d](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < hd; ++j) g[(h * n + t) * hd + j] += self.grad[t * d + h * hd + j];
  });
}

Tensor mask_fill(const Tensor& x, const std::vector<std::uint8_t>& allowed, std::size_t nq, std::size_t nk) {
  if (x.rank() < 2 || x.dim(-2) != nq || x.dim(-1) != nk || allowed.size() != nq * nk)
    throw ShapeError("mask_fill: mask [" + std::to_string(nq) + "," + std::to_string(nk) +
                     "] does not match scores " + shape_str(x.shape()));
  auto in = x.data();
  std::vector<Scalar> y(in.begin(), in.end());
  std::size_t plane = nq * nk;
  constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (!allowed[i % plane]) y[i] = kNegInf;
  auto keep = std::make_shared<std::vector<std::uint8_t>>(allowed);
  return make_result(
      "mask_fill", x.shape(), std::move(y), {x},
      [keep, plane](Node& self) {
        Scalar* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if ((*keep)[i % plane]) g[i] += self.grad[i];
      },
      /*check_finite=*/false);
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
  require_rank(table, 2, "embedding");
  std::size_t v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("embedding: no ids");
  std::vector<Scalar> y(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) throw VocabError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v));
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, y.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return make_result("embedding", {ids.size(), d}, std::move(y), {table}, [ids, d](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "im2col");
  std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (kernel == 0 || stride == 0 || H + 2 * pad < kernel || W + 2 * pad < kernel)
    throw ShapeError("im2col: kernel does not fit input " + shape_str(x.shape()));
  std::size_t oh = (H + 2 * pad - kernel) / stride + 1;
  std::size_t ow = (W + 2 * pad - kernel) / stride + 1;
  std::size_t cols = kernel * kernel * C;
  // src[i] = flat input index or npos for padding.
  auto src = std::make_shared<std::vector<std::size_t>>(oh * ow * cols, static_cast<std::size_t>(-1));
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ky = 0; ky < kernel; ++ky)
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          for (std::size_t c = 0; c < C; ++c)
            (*src)[(oy * ow + ox) * cols + (ky * kernel + kx) * C + c] =
                (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C + c;
        }
  auto in = x.data();
  std::vector<Scalar> y(src->size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i)
    if ((*src)[i] != static_cast<std::size_t>(-1)) y[i] = in[(*src)[i]];
  return make_result("im2col", {oh * ow, cols}, std::move(y), {x}, [src](Node& self) {
    Scalar* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if ((*src)[i] != static_cast<std::size_t>(-1)) g[(*src)[i]] += self.grad[i];
  });
}

}  // namespace ctxdit
