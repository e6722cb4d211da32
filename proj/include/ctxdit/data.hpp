#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxdit/rng.hpp"
#include "ctxdit/sprites.hpp"
#include "ctxdit/tensor.hpp"
#include "json.hpp"

namespace ctxdit::data {

/// Prompt fields and their vocabulary sizes. The first-frame prompt describes
/// appearance; the later-frame prompt links to the same subject and gives
/// motion and scene.
enum class PromptField : int {
  Shape = 0,
  BodyColor,
  Accessory,
  AccessoryColor,  // 0 = none, 1 + color otherwise
  SamePerson,
  Motion,
  Background,
  Light,
};
inline constexpr std::size_t kNumPromptFields = 8;
std::size_t prompt_field_size(PromptField f);
const char* prompt_field_name(PromptField f);

struct Prompt {
  /// Shape, BodyColor, Accessory, AccessoryColor.
  std::vector<std::size_t> first;
  /// SamePerson (always 0), Motion, Background, Light.
  std::vector<std::size_t> later;

  bool operator==(const Prompt&) const = default;
};

inline const std::vector<PromptField>& first_prompt_fields() {
  static const std::vector<PromptField> v{PromptField::Shape, PromptField::BodyColor, PromptField::Accessory,
                                          PromptField::AccessoryColor};
  return v;
}
inline const std::vector<PromptField>& later_prompt_fields() {
  static const std::vector<PromptField> v{PromptField::SamePerson, PromptField::Motion, PromptField::Background,
                                          PromptField::Light};
  return v;
}

Prompt make_prompt(const sprites::SpriteSpec& spec, std::size_t motion, std::size_t background, std::size_t light);
/// Parses "shape=square,body_color=red,accessory=hat,accessory_color=blue,
/// motion=3,background=1,light=2". Values are vocabulary names or ids; omitted
/// fields default to circle, red, none, motion 0, background 0, light 2.
/// Throws VocabError on unknown fields or values.
Prompt parse_prompt(const std::string& text);

/// Inverse of the first-frame part. Throws VocabError on bad ids.
sprites::SpriteSpec spec_from_prompt(const Prompt& p);

struct GenConfig {
  std::size_t size = 32;
  std::size_t frames = 8;
  std::size_t n_samples = 64;
  std::uint64_t seed = 0;
  double speed = 1.0;
  double min_pose_distance = 3.0;
  double min_illum_delta = 0.2;
  std::size_t max_retries = 100;

  bool operator==(const GenConfig&) const = default;
};

nlohmann::json to_json(const GenConfig& c);
/// Missing optional keys keep their defaults; unknown keys are ignored.
GenConfig gen_config_from_json(const nlohmann::json& j);

struct Sample {
  sprites::SpriteSpec spec;
  sprites::MotionProgram motion;
  sprites::SceneSpec scene;
  std::size_t light = 2;
  Prompt prompt;
  sprites::Pose ref_pose;
  double ref_illum = 1.0;
  sprites::Pose frame0_pose;
  std::size_t index = 0;
  std::size_t attempt = 0;
  std::uint64_t seed = 0;

  Tensor ref_image;    // [H, W, 3]
  Tensor ref_mask;     // [H, W]
  Tensor video;        // [F, H, W, 3]
  Tensor video_masks;  // [F, H, W]
};

struct Reference {
  sprites::Frame frame;
  sprites::Pose pose;
  double illumination = 1.0;
};

/// The same subject at a random pose and illumination on a blank background,
/// at least `min_pose_distance` from `frame0_pose` and `min_illum_delta` from
/// `video_illum`. Throws GenError after `max_retries` failed draws.
Reference make_reference(const sprites::SpriteSpec& spec, const sprites::Pose& frame0_pose, double video_illum,
                         std::size_t H, std::size_t W, RngState& rng, const GenConfig& cfg);

/// Generation attempt `attempt` of sample `index`; a pure function of its arguments.
Sample generate_sample(const GenConfig& cfg, std::size_t index, std::size_t attempt = 0);

struct Validation {
  bool ok = true;
  std::string reason;
};

/// Subject fully visible (no mask coverage on the border ring), attribute
/// extraction recovers the spec on the reference and every frame, and the
/// anti-copy constraints hold.
Validation validate_sample(const Sample& s, const GenConfig& cfg);
inline bool is_valid(const Sample& s, const GenConfig& cfg) { return validate_sample(s, cfg).ok; }

struct DroppedSample {
  std::size_t index;
  std::size_t attempt;
  std::string reason;
};

struct Dataset {
  GenConfig config;
  std::vector<Sample> samples;
  std::vector<DroppedSample> dropped;
};

/// Deterministic in (cfg); invalid attempts are dropped, logged and redrawn.
Dataset generate_dataset(const GenConfig& cfg);

/// manifest.json plus one sample_NNNNN.bin per sample (tensor containers).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws FormatError (naming the file) on missing, corrupt or inconsistent data.
Dataset read_dataset(const std::filesystem::path& dir);

/// One frame [H, W, 3] of a [F, H, W, 3] video.
Tensor video_frame(const Tensor& video, std::size_t f);

}  // namespace ctxdit::data
