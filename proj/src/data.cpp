#include "ctxdit/data.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ctxdit/extract.hpp"
#include "ctxdit/ops.hpp"
#include "ctxdit/parallel.hpp"
#include "ctxdit/serialize.hpp"
#include "json.hpp"

namespace ctxdit::data {

using nlohmann::json;
using sprites::Accessory;
using sprites::ShapeKind;

namespace {
constexpr std::uint32_t kSampleMagic = 0x42534443;  // "CDSB"
constexpr std::uint32_t kSampleVersion = 1;
constexpr int kManifestVersion = 1;
}  // namespace

std::size_t prompt_field_size(PromptField f) {
  switch (f) {
    case PromptField::Shape: return sprites::kNumShapes;
    case PromptField::BodyColor: return sprites::kNumColors;
    case PromptField::Accessory: return sprites::kNumAccessories;
    case PromptField::AccessoryColor: return sprites::kNumColors + 1;
    case PromptField::SamePerson: return 1;
    case PromptField::Motion: return sprites::kNumMotions;
    case PromptField::Background: return sprites::kNumBackgrounds;
    case PromptField::Light: return sprites::kNumLightLevels;
  }
  throw VocabError("unknown prompt field");
}

const char* prompt_field_name(PromptField f) {
  static const char* names[] = {"shape",       "body_color", "accessory",  "accessory_color",
                                "same_person", "motion",     "background", "light"};
  return names[static_cast<int>(f)];
}

Prompt make_prompt(const sprites::SpriteSpec& spec, std::size_t motion, std::size_t background, std::size_t light) {
  spec.validate();
  Prompt p;
  p.first = {static_cast<std::size_t>(spec.shape), static_cast<std::size_t>(spec.body_color),
             static_cast<std::size_t>(spec.accessory), static_cast<std::size_t>(spec.accessory_color + 1)};
  p.later = {0, motion, background, light};
  for (std::size_t i = 0; i < p.later.size(); ++i)
    if (p.later[i] >= prompt_field_size(later_prompt_fields()[i]))
      throw VocabError(std::string("prompt field ") + prompt_field_name(later_prompt_fields()[i]) + " out of range");
  return p;
}

namespace {

std::size_t vocab_id(const std::vector<std::string>& names, const std::string& value, const std::string& field) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == value) return i;
  std::size_t pos = 0;
  try {
    auto v = std::stoul(value, &pos);
    if (pos == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw VocabError("unknown " + field + ": '" + value + "'");
}

}  // namespace

Prompt parse_prompt(const std::string& text) {
  static const std::set<std::string> known{"shape",  "body_color", "accessory", "accessory_color",
                                           "motion", "background", "light"};
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw VocabError("prompt item without '=': '" + item + "'");
    auto key = item.substr(0, eq);
    if (!known.count(key)) throw VocabError("unknown prompt field: '" + key + "'");
    kv[key] = item.substr(eq + 1);
  }
  auto get = [&](const std::string& k, const std::string& def) { return kv.count(k) ? kv.at(k) : def; };
  sprites::SpriteSpec spec;
  spec.shape = static_cast<sprites::ShapeKind>(vocab_id(sprites::shape_names(), get("shape", "circle"), "shape"));
  spec.body_color = static_cast<int>(vocab_id(sprites::color_names(), get("body_color", "red"), "color"));
  spec.accessory =
      static_cast<sprites::Accessory>(vocab_id(sprites::accessory_names(), get("accessory", "none"), "accessory"));
  spec.accessory_color = spec.accessory == sprites::Accessory::None
                             ? -1
                             : static_cast<int>(vocab_id(sprites::color_names(), get("accessory_color", ""), "color"));
  spec.validate();
  return make_prompt(spec, vocab_id(sprites::motion_names(), get("motion", "0"), "motion"),
                     vocab_id(sprites::background_names(), get("background", "0"), "background"),
                     vocab_id({}, get("light", "2"), "light"));
}

sprites::SpriteSpec spec_from_prompt(const Prompt& p) {
  if (p.first.size() != 4) throw VocabError("first-frame prompt must have 4 fields");
  for (std::size_t i = 0; i < 4; ++i)
    if (p.first[i] >= prompt_field_size(first_prompt_fields()[i]))
      throw VocabError(std::string("prompt field ") + prompt_field_name(first_prompt_fields()[i]) + " out of range");
  sprites::SpriteSpec s{static_cast<ShapeKind>(p.first[0]), static_cast<int>(p.first[1]),
                        static_cast<Accessory>(p.first[2]), static_cast<int>(p.first[3]) - 1};
  s.validate();
  return s;
}

Reference make_reference(const sprites::SpriteSpec& spec, const sprites::Pose& frame0_pose, double video_illum,
                         std::size_t H, std::size_t W, RngState& rng, const GenConfig& cfg) {
  for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    double r = sprites::base_radius(H, W) * (0.8 + 0.4 * rng.uniform());
    auto box = sprites::subject_bbox(spec, {0, 0, r});
    double x_lo = 1 - box[0], x_hi = static_cast<double>(W) - 1 - box[2];
    double y_lo = 1 - box[1], y_hi = static_cast<double>(H) - 1 - box[3];
    double ux = rng.uniform(), uy = rng.uniform(), ui = rng.uniform();
    if (x_hi < x_lo || y_hi < y_lo) continue;
    sprites::Pose pose{x_lo + (x_hi - x_lo) * ux, y_lo + (y_hi - y_lo) * uy, r};
    double illum = 0.5 + ui;
    if (sprites::pose_distance(pose, frame0_pose) < cfg.min_pose_distance) continue;
    if (std::abs(illum - video_illum) < cfg.min_illum_delta) continue;
    if (!sprites::fits_in_frame(spec, pose, H, W)) continue;
    return {sprites::render_frame(spec, pose, -1, illum, H, W), pose, illum};
  }
  throw GenError("make_reference: no admissible pose/illumination after " + std::to_string(cfg.max_retries) +
                 " draws");
}

Sample generate_sample(const GenConfig& cfg, std::size_t index, std::size_t attempt) {
  RngState rng = RngState(cfg.seed).fork(index).fork(attempt);
  Sample s;
  s.index = index;
  s.attempt = attempt;
  s.seed = rng.seed();
  s.spec.shape = static_cast<ShapeKind>(rng.uniform_int(sprites::kNumShapes));
  s.spec.body_color = static_cast<int>(rng.uniform_int(sprites::kNumColors));
  s.spec.accessory = static_cast<Accessory>(rng.uniform_int(sprites::kNumAccessories));
  auto other = static_cast<int>(rng.uniform_int(sprites::kNumColors - 1));
  s.spec.accessory_color =
      s.spec.accessory == Accessory::None ? -1 : (other >= s.spec.body_color ? other + 1 : other);
  s.motion = {static_cast<std::size_t>(rng.uniform_int(sprites::kNumMotions)), cfg.speed};
  s.light = static_cast<std::size_t>(rng.uniform_int(sprites::kNumLightLevels));
  s.scene = {static_cast<std::size_t>(rng.uniform_int(sprites::kNumBackgrounds)), sprites::light_level(s.light)};
  s.prompt = make_prompt(s.spec, s.motion.id, s.scene.background, s.light);

  auto video = sprites::render_video(s.spec, s.motion, s.scene, cfg.frames, cfg.size, cfg.size);
  s.video = video.frames;
  s.video_masks = video.masks;
  s.frame0_pose = video.poses.front();
  auto ref = make_reference(s.spec, s.frame0_pose, s.scene.illumination, cfg.size, cfg.size, rng, cfg);
  s.ref_image = ref.frame.image;
  s.ref_mask = ref.frame.mask;
  s.ref_pose = ref.pose;
  s.ref_illum = ref.illumination;
  return s;
}

Tensor video_frame(const Tensor& video, std::size_t f) {
  if (video.rank() != 4 || f >= video.dim(0)) throw ShapeError("video_frame: bad frame index or rank");
  std::size_t n = video.dim(1) * video.dim(2) * video.dim(3);
  std::vector<Scalar> d(video.data().begin() + static_cast<std::ptrdiff_t>(f * n),
                        video.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * n));
  return Tensor({video.dim(1), video.dim(2), video.dim(3)}, std::move(d));
}

namespace {

bool touches_border(const Tensor& mask) {
  std::size_t H = mask.dim(-2), W = mask.dim(-1), F = mask.numel() / (H * W);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (y != 0 && x != 0 && y != H - 1 && x != W - 1) continue;
        if (mask.data()[(f * H + y) * W + x] > 0) return true;
      }
  return false;
}

}  // namespace

Validation validate_sample(const Sample& s, const GenConfig& cfg) {
  const std::size_t S = cfg.size, F = cfg.frames;
  if (s.video.shape() != Shape{F, S, S, 3} || s.video_masks.shape() != Shape{F, S, S} ||
      s.ref_image.shape() != Shape{S, S, 3} || s.ref_mask.shape() != Shape{S, S})
    return {false, "tensor shapes do not match the generation config"};
  if (touches_border(s.ref_mask) || touches_border(s.video_masks)) return {false, "subject clipped at the border"};

  try {
    if (!(eval::extract_attributes(s.ref_image) == s.spec)) return {false, "attribute round-trip failed on reference"};
    for (std::size_t f = 0; f < F; ++f)
      if (!(eval::extract_attributes(video_frame(s.video, f)) == s.spec))
        return {false, "attribute round-trip failed on frame " + std::to_string(f)};
  } catch (const ExtractionError& e) {
    return {false, std::string("extraction failed: ") + e.what()};
  }

  auto frame0 = video_frame(s.video, 0);
  if (!(mse(s.ref_image, frame0).item() > 0)) return {false, "reference equals frame 0"};
  if (sprites::pose_distance(s.ref_pose, s.frame0_pose) < cfg.min_pose_distance)
    return {false, "reference pose too close to frame 0"};
  if (std::abs(s.ref_illum - s.scene.illumination) < cfg.min_illum_delta)
    return {false, "reference illumination too close to the video"};
  return {};
}

Dataset generate_dataset(const GenConfig& cfg) {
  Dataset ds;
  ds.config = cfg;
  ds.samples.resize(cfg.n_samples);
  std::vector<std::vector<DroppedSample>> drops(cfg.n_samples);
  parallel_for(cfg.n_samples, [&](std::size_t i) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= cfg.max_retries)
        throw GenError("sample " + std::to_string(i) + ": no valid draw in " + std::to_string(cfg.max_retries) +
                       " attempts");
      std::string reason;
      try {
        auto s = generate_sample(cfg, i, attempt);
        auto v = validate_sample(s, cfg);
        if (v.ok) {
          ds.samples[i] = std::move(s);
          return;
        }
        reason = v.reason;
      } catch (const ConfigError& e) {
        reason = e.what();
      } catch (const GenError& e) {
        reason = e.what();
      }
      drops[i].push_back({i, attempt, reason});
    }
  });
  for (auto& d : drops) ds.dropped.insert(ds.dropped.end(), d.begin(), d.end());
  return ds;
}

namespace {

json pose_json(const sprites::Pose& p) { return json::array({p.cx, p.cy, p.radius}); }

sprites::Pose pose_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

json to_json(const GenConfig& c) {
  return {{"size", c.size},
          {"frames", c.frames},
          {"n_samples", c.n_samples},
          {"seed", c.seed},
          {"speed", c.speed},
          {"min_pose_distance", c.min_pose_distance},
          {"min_illum_delta", c.min_illum_delta},
          {"max_retries", c.max_retries}};
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig c;
  c.size = j.value("size", c.size);
  c.frames = j.value("frames", c.frames);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.seed = j.value("seed", c.seed);
  c.speed = j.value("speed", c.speed);
  c.min_pose_distance = j.value("min_pose_distance", c.min_pose_distance);
  c.min_illum_delta = j.value("min_illum_delta", c.min_illum_delta);
  c.max_retries = j.value("max_retries", c.max_retries);
  return c;
}

namespace {

json vocab_json() {
  json fields = json::array();
  for (std::size_t i = 0; i < kNumPromptFields; ++i) {
    auto f = static_cast<PromptField>(i);
    fields.push_back({{"name", prompt_field_name(f)}, {"size", prompt_field_size(f)}});
  }
  return {{"shapes", sprites::shape_names()},
          {"colors", sprites::color_names()},
          {"accessories", sprites::accessory_names()},
          {"motions", sprites::motion_names()},
          {"backgrounds", sprites::background_names()},
          {"prompt_fields", fields}};
}

std::string sample_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu.bin", i);
  return buf;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    std::ostringstream bin;
    write_u32(bin, kSampleMagic);
    write_u32(bin, kSampleVersion);
    for (const auto* t : {&s.ref_image, &s.ref_mask, &s.video, &s.video_masks}) write_tensor(bin, *t);
    write_file((dir / sample_file(i)).string(), bin.str());
    samples.push_back({{"file", sample_file(i)},
                       {"index", s.index},
                       {"attempt", s.attempt},
                       {"seed", s.seed},
                       {"spec",
                        {{"shape", static_cast<int>(s.spec.shape)},
                         {"body_color", s.spec.body_color},
                         {"accessory", static_cast<int>(s.spec.accessory)},
                         {"accessory_color", s.spec.accessory_color}}},
                       {"motion", {{"id", s.motion.id}, {"speed", s.motion.speed}}},
                       {"scene", {{"background", s.scene.background}, {"illumination", s.scene.illumination}}},
                       {"light", s.light},
                       {"prompt", {{"first", s.prompt.first}, {"later", s.prompt.later}}},
                       {"ref_pose", pose_json(s.ref_pose)},
                       {"ref_illum", s.ref_illum},
                       {"frame0_pose", pose_json(s.frame0_pose)}});
  }
  json dropped = json::array();
  for (const auto& d : ds.dropped) dropped.push_back({{"index", d.index}, {"attempt", d.attempt}, {"reason", d.reason}});
  json manifest{{"format", "ctxdit-dataset"},
                {"version", kManifestVersion},
                {"count", ds.samples.size()},
                {"config", to_json(ds.config)},
                {"vocab", vocab_json()},
                {"samples", samples},
                {"dropped", dropped}};
  // Manifest last, so a complete manifest implies complete sample files.
  write_file((dir / "manifest.json").string(), manifest.dump(1) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = (dir / "manifest.json").string();
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  } catch (const Error& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
  Dataset ds;
  try {
    if (m.at("format") != "ctxdit-dataset") throw FormatError(manifest_path + ": not a dataset manifest");
    if (m.at("version").get<int>() > kManifestVersion)
      throw FormatError(manifest_path + ": unsupported version " + m.at("version").dump());
    ds.config = gen_config_from_json(m.at("config"));
    const auto& entries = m.at("samples");
    std::size_t count = m.at("count").get<std::size_t>();
    if (count != entries.size())
      throw FormatError(manifest_path + ": count " + std::to_string(count) + " but " +
                        std::to_string(entries.size()) + " sample entries");
    std::size_t on_disk = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      auto name = e.path().filename().string();
      if (name.rfind("sample_", 0) == 0 && e.path().extension() == ".bin") ++on_disk;
    }
    if (on_disk != count)
      throw FormatError(manifest_path + ": count " + std::to_string(count) + " but " + std::to_string(on_disk) +
                        " sample files");
    for (const auto& e : entries) {
      Sample s;
      s.index = e.at("index").get<std::size_t>();
      s.attempt = e.at("attempt").get<std::size_t>();
      s.seed = e.at("seed").get<std::uint64_t>();
      const auto& sp = e.at("spec");
      s.spec = {static_cast<ShapeKind>(sp.at("shape").get<int>()), sp.at("body_color").get<int>(),
                static_cast<Accessory>(sp.at("accessory").get<int>()), sp.at("accessory_color").get<int>()};
      s.spec.validate();
      s.motion = {e.at("motion").at("id").get<std::size_t>(), e.at("motion").at("speed").get<double>()};
      s.scene = {e.at("scene").at("background").get<std::size_t>(), e.at("scene").at("illumination").get<double>()};
      s.light = e.at("light").get<std::size_t>();
      s.prompt.first = e.at("prompt").at("first").get<std::vector<std::size_t>>();
      s.prompt.later = e.at("prompt").at("later").get<std::vector<std::size_t>>();
      s.ref_pose = pose_from(e.at("ref_pose"));
      s.ref_illum = e.at("ref_illum").get<double>();
      s.frame0_pose = pose_from(e.at("frame0_pose"));

      const auto path = (dir / e.at("file").get<std::string>()).string();
      std::istringstream bin(read_file(path));
      try {
        if (read_u32(bin) != kSampleMagic) throw FormatError("bad magic");
        if (read_u32(bin) != kSampleVersion) throw FormatError("unsupported sample version");
        s.ref_image = read_tensor(bin);
        s.ref_mask = read_tensor(bin);
        s.video = read_tensor(bin);
        s.video_masks = read_tensor(bin);
        if (bin.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes");
      } catch (const FormatError& err) {
        throw FormatError(path + ": " + err.what());
      }
      const std::size_t S = ds.config.size, F = ds.config.frames;
      if (s.video.shape() != Shape{F, S, S, 3} || s.ref_image.shape() != Shape{S, S, 3})
        throw FormatError(path + ": tensor shapes do not match the manifest config");
      ds.samples.push_back(std::move(s));
    }
    if (m.contains("dropped"))
      for (const auto& d : m.at("dropped"))
        ds.dropped.push_back(
            {d.at("index").get<std::size_t>(), d.at("attempt").get<std::size_t>(), d.at("reason").get<std::string>()});
  } catch (const json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  } catch (const VocabError& e) {
    throw FormatError(manifest_path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
  return ds;
}

}  // namespace ctxdit::data
