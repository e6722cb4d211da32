#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit::sprites {

enum class ShapeKind : int { Circle = 0, Square = 1, Triangle = 2 };
enum class Accessory : int { None = 0, Hat = 1, Collar = 2, Belt = 3 };

inline constexpr std::size_t kNumShapes = 3;
inline constexpr std::size_t kNumColors = 6;
inline constexpr std::size_t kNumAccessories = 4;
inline constexpr std::size_t kNumMotions = 16;
inline constexpr std::size_t kNumBackgrounds = 8;
inline constexpr std::size_t kNumLightLevels = 5;

using Rgb = std::array<double, 3>;

/// Saturated palette with every channel <= 0.6, so illumination up to 1.5
/// never clips.
const std::array<Rgb, kNumColors>& palette();
const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();
const std::vector<std::string>& accessory_names();
const std::vector<std::string>& motion_names();
const std::vector<std::string>& background_names();
/// Illumination of light level i: 0.5, 0.75, 1.0, 1.25, 1.5.
double light_level(std::size_t i);

struct SpriteSpec {
  ShapeKind shape = ShapeKind::Circle;
  int body_color = 0;
  Accessory accessory = Accessory::None;
  /// -1 exactly when accessory is None; otherwise differs from body_color.
  int accessory_color = -1;

  bool operator==(const SpriteSpec&) const = default;
  /// Throws VocabError on out-of-range ids and ConfigError on inconsistent colors.
  void validate() const;
  std::string str() const;
};

struct MotionProgram {
  std::size_t id = 0;
  double speed = 1.0;
};

struct SceneSpec {
  std::size_t background = 0;
  double illumination = 1.0;
  void validate() const;
};

/// Subject placement in pixels: centre and body radius.
struct Pose {
  double cx = 0;
  double cy = 0;
  double radius = 0;
};

double pose_distance(const Pose& a, const Pose& b);

/// Body radius used for video frames: 0.2 * min(H, W).
double base_radius(std::size_t H, std::size_t W);

/// Pose of frame f under a motion program. Speed 0 keeps every frame centred.
Pose motion_pose(const MotionProgram& m, std::size_t f, std::size_t frames, std::size_t H, std::size_t W);

/// Analytic bounding box {x0, y0, x1, y1} of the subject including accessories.
std::array<double, 4> subject_bbox(const SpriteSpec& spec, const Pose& pose);
/// True when the bbox keeps a one-pixel margin inside an H x W frame.
bool fits_in_frame(const SpriteSpec& spec, const Pose& pose, std::size_t H, std::size_t W);

/// Body-only silhouette test in pose-relative coordinates (dx, dy) / radius.
bool inside_body(ShapeKind shape, double u, double v);
/// Body plus accessory silhouette (only the hat extends beyond the body).
bool inside_subject(ShapeKind shape, Accessory accessory, double u, double v);

/// Gray background value at pixel (x, y), in [0.15, 0.4].
double background_value(std::size_t pattern, std::size_t x, std::size_t y, std::size_t H, std::size_t W);

struct Frame {
  Tensor image;  // [H, W, 3]
  Tensor mask;   // [H, W], subject coverage in [0, 1]
};

/// One anti-aliased frame (4x4 supersampling). `background` < 0 renders on black.
Frame render_frame(const SpriteSpec& spec, const Pose& pose, int background, double illumination, std::size_t H,
                   std::size_t W);

struct Video {
  Tensor frames;  // [F, H, W, 3]
  Tensor masks;   // [F, H, W]
  std::vector<Pose> poses;
};

/// Throws ConfigError when the motion leaves the frame.
Video render_video(const SpriteSpec& spec, const MotionProgram& motion, const SceneSpec& scene, std::size_t frames,
                   std::size_t H, std::size_t W);

}  // namespace ctxdit::sprites
