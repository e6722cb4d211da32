#include "ctxdit/rope.hpp"

#include <cmath>

#include "ctxdit/op_support.hpp"

namespace ctxdit::rope {

namespace {
std::size_t even_floor(std::size_t v) { return v - (v % 2); }
}  // namespace

RopeConfig RopeConfig::for_head_dim(std::size_t head_dim, int beta) {
  RopeConfig cfg;
  cfg.head_dim = head_dim;
  cfg.temporal_dims = even_floor(head_dim / 2);
  cfg.y_dims = even_floor((head_dim - cfg.temporal_dims) / 2);
  cfg.x_dims = head_dim - cfg.temporal_dims - cfg.y_dims;
  cfg.beta = beta;
  return cfg;
}

void RopeConfig::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) throw ConfigError("rope: head_dim must be even and positive");
  if (temporal_dims % 2 || y_dims % 2 || x_dims % 2) throw ConfigError("rope: every axis split must be even");
  if (temporal_dims + y_dims + x_dims != head_dim)
    throw ConfigError("rope: dim split " + std::to_string(temporal_dims) + "+" + std::to_string(y_dims) + "+" +
                      std::to_string(x_dims) + " does not sum to head_dim " + std::to_string(head_dim));
  if (beta < 0) throw ConfigError("rope: beta must be non-negative");
  if (!(theta_base > 0)) throw ConfigError("rope: theta_base must be positive");
}

int effective_temporal_index(const TokenPosition& pos, const RopeConfig& cfg) {
  return pos.frame_index + cfg.beta * pos.group;
}

std::vector<double> rotation_angles(double index, std::size_t n_dims, double theta_base) {
  if (n_dims % 2 != 0) throw ConfigError("rotation_angles: n_dims must be even");
  std::vector<double> out(n_dims / 2);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = index * std::pow(theta_base, -2.0 * static_cast<double>(k) / static_cast<double>(n_dims));
  return out;
}

RotaryTable::RotaryTable(const std::vector<TokenPosition>& positions, const RopeConfig& cfg)
    : tokens_(positions.size()), pairs_(cfg.head_dim / 2) {
  cfg.validate();
  cos_.resize(tokens_ * pairs_);
  sin_.resize(tokens_ * pairs_);
  for (std::size_t t = 0; t < tokens_; ++t) {
    const auto& p = positions[t];
    if (p.group != 0 && p.group != 1) throw ConfigError("rope: group flag must be 0 or 1");
    std::size_t k = 0;
    auto fill = [&](double index, std::size_t n_dims) {
      for (double a : rotation_angles(index, n_dims, cfg.theta_base)) {
        cos_[t * pairs_ + k] = static_cast<Scalar>(std::cos(a));
        sin_[t * pairs_ + k] = static_cast<Scalar>(std::sin(a));
        ++k;
      }
    };
    fill(effective_temporal_index(p, cfg), cfg.temporal_dims);
    fill(p.y, cfg.y_dims);
    fill(p.x, cfg.x_dims);
  }
}

namespace {

// Rotation by the table angles (sign = +1) or their negation (sign = -1).
void rotate(const Scalar* in, Scalar* out, const RotaryTable& tab, std::size_t heads, bool heads_first,
            Scalar sign, bool accumulate) {
  std::size_t n = tab.tokens(), pairs = tab.pairs(), hd = 2 * pairs;
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t base = heads_first ? (h * n + t) * hd : (t * heads + h) * hd;
      const Scalar* c = tab.cos().data() + t * pairs;
      const Scalar* s = tab.sin().data() + t * pairs;
      for (std::size_t j = 0; j < pairs; ++j) {
        Scalar a = in[base + 2 * j], b = in[base + 2 * j + 1];
        Scalar sn = sign * s[j];
        Scalar ra = a * c[j] - b * sn;
        Scalar rb = a * sn + b * c[j];
        if (accumulate) {
          out[base + 2 * j] += ra;
          out[base + 2 * j + 1] += rb;
        } else {
          out[base + 2 * j] = ra;
          out[base + 2 * j + 1] = rb;
        }
      }
    }
  }
}

}  // namespace

Tensor apply_rotary(const Tensor& qk, const RotaryTable& table, bool heads_first) {
  if (qk.rank() != 3) throw ShapeError("apply_rotary: expected rank-3 input, got " + shape_str(qk.shape()));
  std::size_t tokens = heads_first ? qk.dim(1) : qk.dim(0);
  std::size_t heads = heads_first ? qk.dim(0) : qk.dim(1);
  if (qk.dim(2) != 2 * table.pairs())
    throw ConfigError("apply_rotary: head_dim " + std::to_string(qk.dim(2)) + " does not match rope config");
  if (tokens != table.tokens()) throw ShapeError("apply_rotary: positions length does not match token count");
  std::vector<Scalar> y(qk.numel());
  rotate(qk.data().data(), y.data(), table, heads, heads_first, 1, false);
  return detail::make_result("rotary", qk.shape(), std::move(y), {qk},
                             [table, heads, heads_first](detail::Node& self) {
                               Scalar* g = detail::parent_grad(self, 0);
                               if (g) rotate(self.grad.data(), g, table, heads, heads_first, -1, true);
                             });
}

Tensor apply_rotary(const Tensor& qk, const std::vector<TokenPosition>& positions, const RopeConfig& cfg) {
  cfg.validate();
  if (qk.rank() == 3 && qk.dim(2) != cfg.head_dim)
    throw ConfigError("apply_rotary: tensor head_dim " + std::to_string(qk.dim(2)) + " != config head_dim " +
                      std::to_string(cfg.head_dim));
  return apply_rotary(qk, RotaryTable(positions, cfg), false);
}

}  // namespace ctxdit::rope
