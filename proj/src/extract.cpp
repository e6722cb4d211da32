#include "ctxdit/extract.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>

namespace ctxdit::eval {

using sprites::Accessory;
using sprites::ShapeKind;
using sprites::SpriteSpec;

namespace {

constexpr double kMinSaturation = 0.25;
constexpr double kMinBrightness = 0.03;
constexpr double kPureChromaTol = 0.03;

struct Pixel {
  double r, g, b;
  double max() const { return std::max({r, g, b}); }
  double saturation() const {
    double m = max();
    return m <= kMinBrightness ? 0.0 : (m - std::min({r, g, b})) / m;
  }
};

// Chromaticity (r, g) / (r + g + b); brightness cancels out.
std::array<double, 2> chroma(const sprites::Rgb& c) {
  double s = c[0] + c[1] + c[2];
  return {c[0] / s, c[1] / s};
}

// Palette index whose chromaticity lies within tolerance, or -1.
int pure_color(const Pixel& p) {
  if (p.max() <= kMinBrightness) return -1;
  auto q = chroma({p.r, p.g, p.b});
  for (std::size_t i = 0; i < sprites::kNumColors; ++i) {
    auto c = chroma(sprites::palette()[i]);
    if (std::hypot(q[0] - c[0], q[1] - c[1]) < kPureChromaTol) return static_cast<int>(i);
  }
  return -1;
}

// Area (in radius^2 units) and centroid of a subject silhouette.
struct Moments {
  double area, cu, cv;
};

const Moments& silhouette_moments(ShapeKind shape, Accessory acc) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, Moments> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(static_cast<int>(shape), static_cast<int>(acc));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const int n = 1200;
  const double step = 3.2 / n;
  double a = 0, su = 0, sv = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double u = -1.6 + (j + 0.5) * step, v = -1.6 + (i + 0.5) * step;
      if (sprites::inside_subject(shape, acc, u, v)) {
        a += 1;
        su += u;
        sv += v;
      }
    }
  Moments m{a * step * step, su / a, sv / a};
  return cache.emplace(key, m).first->second;
}

}  // namespace

SpriteSpec extract_attributes(const Tensor& frame, const Tensor& subject_mask) {
  if (frame.rank() != 3 || frame.dim(2) != 3) throw ShapeError("extract_attributes: expected [H, W, 3]");
  const std::size_t H = frame.dim(0), W = frame.dim(1), N = H * W;
  std::vector<Pixel> px(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto clamp = [](Scalar v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); };
    px[i] = {clamp(frame.data()[3 * i]), clamp(frame.data()[3 * i + 1]), clamp(frame.data()[3 * i + 2])};
  }

  std::vector<char> subject(N, 0);
  if (subject_mask.defined()) {
    if (subject_mask.shape() != Shape{H, W}) throw ShapeError("extract_attributes: mask must be [H, W]");
    for (std::size_t i = 0; i < N; ++i) subject[i] = subject_mask.data()[i] >= 0.5;
  } else {
    // Blends of complementary colors are gray, so a thin unsaturated seam can
    // split the subject. Components are taken on the dilated saturated mask and
    // the subject is its morphological closing.
    std::vector<char> sat(N), dil(N, 0);
    for (std::size_t i = 0; i < N; ++i) sat[i] = px[i].saturation() >= kMinSaturation;
    auto for_neighbors = [&](std::size_t i, auto&& fn) {
      long y = static_cast<long>(i / W), x = static_cast<long>(i % W);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          long ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(H) || nx >= static_cast<long>(W)) {
            fn(N);
            continue;
          }
          fn(static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx));
        }
    };
    for (std::size_t i = 0; i < N; ++i)
      if (sat[i]) for_neighbors(i, [&](std::size_t j) { if (j < N) dil[j] = 1; });

    std::vector<int> label(N, -1);
    std::size_t best_size = 0;
    int best = -1, next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < N; ++s) {
      if (label[s] >= 0 || !dil[s]) continue;
      std::size_t size = 0;
      label[s] = next;
      stack.push_back(s);
      while (!stack.empty()) {
        std::size_t i = stack.back();
        stack.pop_back();
        size += sat[i] ? 1 : 0;
        for_neighbors(i, [&](std::size_t j) {
          if (j < N && label[j] < 0 && dil[j]) {
            label[j] = next;
            stack.push_back(j);
          }
        });
      }
      if (size > best_size) {
        best_size = size;
        best = next;
      }
      ++next;
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (best < 0 || label[i] != best) continue;
      bool keep = true;
      for_neighbors(i, [&](std::size_t j) { keep = keep && j < N && dil[j]; });
      subject[i] = keep || sat[i];
    }
  }

  std::size_t area = 0;
  double my = 0, mx = 0;
  std::array<std::size_t, sprites::kNumColors> votes{};
  std::vector<int> pure(N, -1);
  for (std::size_t i = 0; i < N; ++i) {
    if (!subject[i]) continue;
    ++area;
    my += static_cast<double>(i / W) + 0.5;
    mx += static_cast<double>(i % W) + 0.5;
    pure[i] = pure_color(px[i]);
    if (pure[i] >= 0) ++votes[static_cast<std::size_t>(pure[i])];
  }
  if (area < 4) throw ExtractionError("no subject found");
  my /= static_cast<double>(area);
  mx /= static_cast<double>(area);

  SpriteSpec out;
  out.body_color = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  if (votes[static_cast<std::size_t>(out.body_color)] == 0) throw ExtractionError("subject has no clean color");

  const std::size_t min_acc = std::max<std::size_t>(2, static_cast<std::size_t>(0.03 * static_cast<double>(area)));
  int acc = -1;
  for (std::size_t c = 0; c < sprites::kNumColors; ++c) {
    if (static_cast<int>(c) == out.body_color || votes[c] < min_acc) continue;
    if (acc < 0 || votes[c] > votes[static_cast<std::size_t>(acc)]) acc = static_cast<int>(c);
  }
  if (acc >= 0) {
    double acc_y = 0, body_top = static_cast<double>(H);
    for (std::size_t i = 0; i < N; ++i) {
      double y = static_cast<double>(i / W) + 0.5;
      if (pure[i] == acc) acc_y += y;
      if (pure[i] == out.body_color) body_top = std::min(body_top, y);
    }
    acc_y /= static_cast<double>(votes[static_cast<std::size_t>(acc)]);
    out.accessory_color = acc;
    if (acc_y < body_top)
      out.accessory = Accessory::Hat;
    else
      out.accessory = acc_y < my ? Accessory::Collar : Accessory::Belt;
  }

  // Shape: fit each candidate's pose from area and centroid, keep the best overlap.
  double best_iou = -1;
  for (std::size_t s = 0; s < sprites::kNumShapes; ++s) {
    auto shape = static_cast<ShapeKind>(s);
    const auto& m = silhouette_moments(shape, out.accessory);
    double R = std::sqrt(static_cast<double>(area) / m.area);
    double cx = mx - m.cu * R, cy = my - m.cv * R;
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < N; ++i) {
      double x = static_cast<double>(i % W) + 0.5, y = static_cast<double>(i / W) + 0.5;
      bool t = sprites::inside_subject(shape, out.accessory, (x - cx) / R, (y - cy) / R);
      inter += t && subject[i];
      uni += t || subject[i];
    }
    double iou = static_cast<double>(inter) / static_cast<double>(uni);
    if (iou > best_iou) {
      best_iou = iou;
      out.shape = shape;
    }
  }
  return out;
}

}  // namespace ctxdit::eval
