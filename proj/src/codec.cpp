#include "ctxdit/codec.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "ctxdit/op_support.hpp"
#include "ctxdit/ops.hpp"

namespace ctxdit::codec {

const std::vector<double>& dct_matrix(std::size_t p) {
  static std::mutex mu;
  static std::map<std::size_t, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(p);
  if (it != cache.end()) return it->second;
  std::vector<double> d(p * p);
  for (std::size_t u = 0; u < p; ++u) {
    double a = u == 0 ? std::sqrt(1.0 / static_cast<double>(p)) : std::sqrt(2.0 / static_cast<double>(p));
    for (std::size_t x = 0; x < p; ++x)
      d[u * p + x] = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(x) + 1) * static_cast<double>(u) /
                                  (2.0 * static_cast<double>(p)));
  }
  return cache.emplace(p, std::move(d)).first->second;
}

std::size_t tokens_per_frame(std::size_t H, std::size_t W, std::size_t p) {
  if (p == 0 || H % p || W % p)
    throw ShapeError("codec: " + std::to_string(H) + "x" + std::to_string(W) + " not divisible by patch " +
                     std::to_string(p));
  return (H / p) * (W / p);
}

namespace {

struct Geometry {
  std::size_t F, H, W, C, p;
};

Geometry geometry(const Shape& s, std::size_t p) {
  if (s.size() != 3 && s.size() != 4) throw ShapeError("codec: expected [H,W,C] or [F,H,W,C], got " + shape_str(s));
  Geometry g{s.size() == 4 ? s[0] : 1, s[s.size() - 3], s[s.size() - 2], s[s.size() - 1], p};
  tokens_per_frame(g.H, g.W, p);
  return g;
}

// Pixel -> coefficient (forward) or coefficient -> pixel (inverse) over every patch.
void transform(const Geometry& g, const Scalar* in, Scalar* out, bool inverse) {
  const auto& D = dct_matrix(g.p);
  const std::size_t p = g.p, gh = g.H / p, gw = g.W / p, L = g.C * p * p;
  std::vector<double> blk(p * p), tmp(p * p);
  for (std::size_t f = 0; f < g.F; ++f)
    for (std::size_t by = 0; by < gh; ++by)
      for (std::size_t bx = 0; bx < gw; ++bx) {
        std::size_t tok = (f * gh + by) * gw + bx;
        for (std::size_t c = 0; c < g.C; ++c) {
          auto pix = [&](std::size_t y, std::size_t x) {
            return ((f * g.H + by * p + y) * g.W + bx * p + x) * g.C + c;
          };
          auto coef = [&](std::size_t u, std::size_t v) { return tok * L + c * p * p + u * p + v; };
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) blk[i * p + j] = inverse ? in[coef(i, j)] : in[pix(i, j)];
          // forward: D X D^T; inverse: D^T X D.
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              double s = 0;
              for (std::size_t k = 0; k < p; ++k) s += (inverse ? D[k * p + i] : D[i * p + k]) * blk[k * p + j];
              tmp[i * p + j] = s;
            }
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              double s = 0;
              for (std::size_t k = 0; k < p; ++k) s += tmp[i * p + k] * (inverse ? D[k * p + j] : D[j * p + k]);
              if (inverse)
                out[pix(i, j)] = static_cast<Scalar>(s);
              else
                out[coef(i, j)] = static_cast<Scalar>(s);
            }
        }
      }
}

}  // namespace

Tensor encode_latent(const Tensor& x, std::size_t p) {
  auto g = geometry(x.shape(), p);
  std::size_t L = g.C * p * p, n = g.F * tokens_per_frame(g.H, g.W, p);
  std::vector<Scalar> out(n * L);
  transform(g, x.data().data(), out.data(), false);
  // The transform is orthonormal, so its adjoint is its inverse.
  return detail::make_result("encode_latent", {n, L}, std::move(out), {x}, [g](detail::Node& self) {
    if (Scalar* gx = detail::parent_grad(self, 0)) {
      std::vector<Scalar> back(self.grad.size());
      transform(g, self.grad.data(), back.data(), true);
      for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
    }
  });
}

Tensor decode_latent(const Tensor& z, const Shape& shape, std::size_t p) {
  auto g = geometry(shape, p);
  std::size_t L = g.C * p * p, n = g.F * tokens_per_frame(g.H, g.W, p);
  if (z.shape() != Shape{n, L})
    throw ShapeError("decode_latent: latent " + shape_str(z.shape()) + " does not fit pixels " + shape_str(shape));
  std::vector<Scalar> out(shape_numel(shape));
  transform(g, z.data().data(), out.data(), true);
  return detail::make_result("decode_latent", shape, std::move(out), {z}, [g](detail::Node& self) {
    if (Scalar* gz = detail::parent_grad(self, 0)) {
      std::vector<Scalar> back(self.grad.size());
      transform(g, self.grad.data(), back.data(), false);
      for (std::size_t i = 0; i < back.size(); ++i) gz[i] += back[i];
    }
  });
}

Tensor to_model_range(const Tensor& pixels) { return add(scale(pixels, 2), Scalar(-1)); }

Tensor from_model_range(const Tensor& x) { return scale(add(x, Scalar(1)), Scalar(0.5)); }

}  // namespace ctxdit::codec
