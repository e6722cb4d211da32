#include "ctxdit/sprites.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctxdit::sprites {

namespace {

constexpr double kHatHalfWidth = 0.45;
constexpr double kHatHeight = 0.45;
constexpr double kHatOverlap = 0.15;
constexpr double kCollarTop = -0.4, kCollarBottom = -0.05;
constexpr double kBeltTop = 0.15, kBeltBottom = 0.5;
constexpr int kSupersample = 4;

double body_top(ShapeKind s) { return s == ShapeKind::Square ? -0.85 : -1.0; }
double body_bottom(ShapeKind s) {
  switch (s) {
    case ShapeKind::Circle: return 1.0;
    case ShapeKind::Square: return 0.85;
    case ShapeKind::Triangle: return 0.7;
  }
  return 1.0;
}
double body_half_width(ShapeKind s) { return s == ShapeKind::Square ? 0.85 : 1.0; }

template <class T>
std::size_t checked_id(T id, std::size_t n, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= n) throw VocabError(std::string(what) + " id out of range");
  return static_cast<std::size_t>(id);
}

}  // namespace

const std::array<Rgb, kNumColors>& palette() {
  static const std::array<Rgb, kNumColors> p{{{0.6, 0.1, 0.1},
                                              {0.1, 0.6, 0.1},
                                              {0.1, 0.1, 0.6},
                                              {0.6, 0.6, 0.1},
                                              {0.6, 0.1, 0.6},
                                              {0.1, 0.6, 0.6}}};
  return p;
}

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> v{"circle", "square", "triangle"};
  return v;
}
const std::vector<std::string>& color_names() {
  static const std::vector<std::string> v{"red", "green", "blue", "yellow", "magenta", "cyan"};
  return v;
}
const std::vector<std::string>& accessory_names() {
  static const std::vector<std::string> v{"none", "hat", "collar", "belt"};
  return v;
}
const std::vector<std::string>& motion_names() {
  static const std::vector<std::string> v{"slide-right", "slide-left",  "slide-up",   "slide-down",
                                          "diag-down",   "diag-up",     "bounce",     "sway",
                                          "circle-cw",   "circle-ccw",  "grow-shrink", "grow",
                                          "shrink",      "zigzag",      "figure-eight", "hop-right"};
  return v;
}
const std::vector<std::string>& background_names() {
  static const std::vector<std::string> v{"flat",       "h-stripes",  "v-stripes",        "checker",
                                          "gradient-x", "gradient-y", "diagonal-stripes", "dots"};
  return v;
}

double light_level(std::size_t i) {
  checked_id(static_cast<long>(i), kNumLightLevels, "light level");
  return 0.5 + 0.25 * static_cast<double>(i);
}

void SpriteSpec::validate() const {
  checked_id(static_cast<int>(shape), kNumShapes, "shape");
  checked_id(body_color, kNumColors, "body color");
  checked_id(static_cast<int>(accessory), kNumAccessories, "accessory");
  if (accessory == Accessory::None) {
    if (accessory_color != -1) throw ConfigError("accessory color set without an accessory");
  } else {
    checked_id(accessory_color, kNumColors, "accessory color");
    if (accessory_color == body_color) throw ConfigError("accessory color equals body color");
  }
}

std::string SpriteSpec::str() const {
  std::string s = color_names().at(static_cast<std::size_t>(body_color)) + " " +
                  shape_names().at(static_cast<std::size_t>(shape));
  if (accessory != Accessory::None)
    s += " with " + color_names().at(static_cast<std::size_t>(accessory_color)) + " " +
         accessory_names().at(static_cast<std::size_t>(accessory));
  return s;
}

void SceneSpec::validate() const {
  checked_id(static_cast<long>(background), kNumBackgrounds, "background");
  if (!(illumination >= 0.5 && illumination <= 1.5)) throw ConfigError("illumination outside [0.5, 1.5]");
}

double pose_distance(const Pose& a, const Pose& b) {
  double dx = a.cx - b.cx, dy = a.cy - b.cy, dr = a.radius - b.radius;
  return std::sqrt(dx * dx + dy * dy + dr * dr);
}

double base_radius(std::size_t H, std::size_t W) { return 0.2 * static_cast<double>(std::min(H, W)); }

Pose motion_pose(const MotionProgram& m, std::size_t f, std::size_t frames, std::size_t H, std::size_t W) {
  checked_id(static_cast<long>(m.id), kNumMotions, "motion");
  const double u = static_cast<double>(std::min(H, W)) / 32.0 * m.speed;
  const double c = static_cast<double>(f) - (static_cast<double>(frames) - 1) / 2;
  const double ph = 2 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(frames);
  double dx = 0, dy = 0, scale = 1;
  switch (m.id) {
    case 0: dx = u * c; break;
    case 1: dx = -u * c; break;
    case 2: dy = -u * c; break;
    case 3: dy = u * c; break;
    case 4: dx = dy = 0.7 * u * c; break;
    case 5: dx = 0.7 * u * c, dy = -0.7 * u * c; break;
    case 6: dy = u * (1.5 - 3 * std::abs(std::sin(std::numbers::pi * static_cast<double>(f) / 4))); break;
    case 7: dx = 3 * u * std::sin(ph); break;
    case 8: dx = 3 * u * std::cos(ph), dy = 3 * u * std::sin(ph); break;
    case 9: dx = 3 * u * std::cos(ph), dy = -3 * u * std::sin(ph); break;
    case 10: scale = 1 + 0.15 * m.speed * std::sin(ph); break;
    case 11: scale = 1 + 0.04 * m.speed * c; break;
    case 12: scale = 1 - 0.04 * m.speed * c; break;
    case 13: dx = u * c, dy = (f % 2 ? u : -u); break;
    case 14: dx = 3 * u * std::sin(ph), dy = 1.5 * u * std::sin(2 * ph); break;
    case 15: dx = u * c, dy = u * (1 - 2 * std::abs(std::sin(std::numbers::pi * static_cast<double>(f) / 2))); break;
  }
  return {static_cast<double>(W) / 2 + dx, static_cast<double>(H) / 2 + dy, base_radius(H, W) * scale};
}

bool inside_body(ShapeKind shape, double u, double v) {
  switch (shape) {
    case ShapeKind::Circle: return u * u + v * v <= 1.0;
    case ShapeKind::Square: return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    case ShapeKind::Triangle: return v >= -1.0 && v <= 0.7 && std::abs(u) <= (v + 1.0) / 1.7;
  }
  return false;
}

namespace {

bool in_hat(ShapeKind shape, double u, double v) {
  double top = body_top(shape);
  return std::abs(u) <= kHatHalfWidth && v >= top - kHatHeight && v <= top + kHatOverlap;
}

// 0 = background, 1 = body, 2 = accessory.
int classify(const SpriteSpec& spec, double u, double v) {
  bool body = inside_body(spec.shape, u, v);
  switch (spec.accessory) {
    case Accessory::Hat:
      if (in_hat(spec.shape, u, v)) return 2;
      break;
    case Accessory::Collar:
      if (body && v >= kCollarTop && v <= kCollarBottom) return 2;
      break;
    case Accessory::Belt:
      if (body && v >= kBeltTop && v <= kBeltBottom) return 2;
      break;
    case Accessory::None: break;
  }
  return body ? 1 : 0;
}

}  // namespace

bool inside_subject(ShapeKind shape, Accessory accessory, double u, double v) {
  return inside_body(shape, u, v) || (accessory == Accessory::Hat && in_hat(shape, u, v));
}

std::array<double, 4> subject_bbox(const SpriteSpec& spec, const Pose& pose) {
  double hw = body_half_width(spec.shape), top = body_top(spec.shape);
  if (spec.accessory == Accessory::Hat) {
    hw = std::max(hw, kHatHalfWidth);
    top -= kHatHeight;
  }
  const double r = pose.radius;
  return {pose.cx - hw * r, pose.cy + top * r, pose.cx + hw * r, pose.cy + body_bottom(spec.shape) * r};
}

bool fits_in_frame(const SpriteSpec& spec, const Pose& pose, std::size_t H, std::size_t W) {
  auto b = subject_bbox(spec, pose);
  return b[0] >= 1 && b[1] >= 1 && b[2] <= static_cast<double>(W) - 1 && b[3] <= static_cast<double>(H) - 1;
}

double background_value(std::size_t pattern, std::size_t x, std::size_t y, std::size_t H, std::size_t W) {
  switch (pattern) {
    case 0: return 0.25;
    case 1: return (y / 4) % 2 ? 0.35 : 0.15;
    case 2: return (x / 4) % 2 ? 0.35 : 0.15;
    case 3: return ((x / 4) + (y / 4)) % 2 ? 0.4 : 0.2;
    case 4: return 0.15 + 0.25 * static_cast<double>(x) / static_cast<double>(std::max<std::size_t>(W - 1, 1));
    case 5: return 0.15 + 0.25 * static_cast<double>(y) / static_cast<double>(std::max<std::size_t>(H - 1, 1));
    case 6: return ((x + y) / 4) % 2 ? 0.3 : 0.18;
    case 7: return (x % 6 < 2 && y % 6 < 2) ? 0.4 : 0.2;
  }
  throw VocabError("background id out of range");
}

Frame render_frame(const SpriteSpec& spec, const Pose& pose, int background, double illumination, std::size_t H,
                   std::size_t W) {
  spec.validate();
  const Rgb& body = palette()[static_cast<std::size_t>(spec.body_color)];
  Rgb acc{0, 0, 0};
  if (spec.accessory != Accessory::None) acc = palette()[static_cast<std::size_t>(spec.accessory_color)];
  std::vector<Scalar> img(H * W * 3), mask(H * W);
  const double inv = 1.0 / (kSupersample * kSupersample);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double cov_body = 0, cov_acc = 0;
      for (int sy = 0; sy < kSupersample; ++sy)
        for (int sx = 0; sx < kSupersample; ++sx) {
          double px = static_cast<double>(x) + (sx + 0.5) / kSupersample;
          double py = static_cast<double>(y) + (sy + 0.5) / kSupersample;
          int k = classify(spec, (px - pose.cx) / pose.radius, (py - pose.cy) / pose.radius);
          if (k == 1) cov_body += inv;
          if (k == 2) cov_acc += inv;
        }
      double bg = background < 0 ? 0.0 : background_value(static_cast<std::size_t>(background), x, y, H, W);
      double rest = 1 - cov_body - cov_acc;
      for (std::size_t c = 0; c < 3; ++c)
        img[(y * W + x) * 3 + c] =
            static_cast<Scalar>(illumination * (cov_body * body[c] + cov_acc * acc[c] + rest * bg));
      mask[y * W + x] = static_cast<Scalar>(cov_body + cov_acc);
    }
  return {Tensor({H, W, 3}, std::move(img)), Tensor({H, W}, std::move(mask))};
}

Video render_video(const SpriteSpec& spec, const MotionProgram& motion, const SceneSpec& scene, std::size_t frames,
                   std::size_t H, std::size_t W) {
  scene.validate();
  if (frames == 0) throw ConfigError("render_video: frames must be positive");
  Video v;
  std::vector<Scalar> all, masks;
  all.reserve(frames * H * W * 3);
  masks.reserve(frames * H * W);
  for (std::size_t f = 0; f < frames; ++f) {
    auto pose = motion_pose(motion, f, frames, H, W);
    if (!fits_in_frame(spec, pose, H, W))
      throw ConfigError("motion '" + motion_names()[motion.id] + "' at speed " + std::to_string(motion.speed) +
                        " leaves the frame at f=" + std::to_string(f));
    auto fr = render_frame(spec, pose, static_cast<int>(scene.background), scene.illumination, H, W);
    all.insert(all.end(), fr.image.data().begin(), fr.image.data().end());
    masks.insert(masks.end(), fr.mask.data().begin(), fr.mask.data().end());
    v.poses.push_back(pose);
  }
  v.frames = Tensor({frames, H, W, 3}, std::move(all));
  v.masks = Tensor({frames, H, W}, std::move(masks));
  return v;
}

}  // namespace ctxdit::sprites
