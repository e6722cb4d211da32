#include <filesystem>
#include <fstream>

#include "ctxdit/data.hpp"
#include "ctxdit/errors.hpp"
#include "ctxdit/extract.hpp"
#include "ctxdit/ops.hpp"
#include "ctxdit/serialize.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace ctxdit;
using namespace ctxdit::data;
namespace fs = std::filesystem;

namespace {

GenConfig small_config() {
  GenConfig c;
  c.n_samples = 4;
  c.frames = 4;
  c.seed = 7;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("ctxdit_test_data_" + name);
  fs::remove_all(d);
  return d;
}

bool same_tensor(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && testing::bit_equal(a.data(), b.data()); }

bool same_sample(const Sample& a, const Sample& b) {
  return a.spec == b.spec && a.motion.id == b.motion.id && a.motion.speed == b.motion.speed &&
         a.scene.background == b.scene.background && a.scene.illumination == b.scene.illumination &&
         a.light == b.light && a.prompt == b.prompt && a.ref_illum == b.ref_illum && a.ref_pose.cx == b.ref_pose.cx &&
         a.ref_pose.cy == b.ref_pose.cy && a.ref_pose.radius == b.ref_pose.radius && a.index == b.index &&
         a.attempt == b.attempt && a.seed == b.seed && same_tensor(a.ref_image, b.ref_image) &&
         same_tensor(a.ref_mask, b.ref_mask) && same_tensor(a.video, b.video) &&
         same_tensor(a.video_masks, b.video_masks);
}

nlohmann::json load_manifest(const fs::path& dir) { return nlohmann::json::parse(read_file((dir / "manifest.json").string())); }

void save_manifest(const fs::path& dir, const nlohmann::json& m) { write_file((dir / "manifest.json").string(), m.dump(1)); }

}  // namespace

TEST_CASE("prompt ids round-trip for every spec") {
  std::size_t n = 0;
  for (std::size_t s = 0; s < sprites::kNumShapes; ++s)
    for (int c = 0; c < 6; ++c)
      for (std::size_t a = 0; a < sprites::kNumAccessories; ++a)
        for (int ac = -1; ac < 6; ++ac) {
          sprites::SpriteSpec spec{static_cast<sprites::ShapeKind>(s), c, static_cast<sprites::Accessory>(a), ac};
          bool ok = (a == 0) == (ac < 0) && ac != c;
          if (!ok) continue;
          auto p = make_prompt(spec, 3, 5, 1);
          CHECK(p.later == std::vector<std::size_t>{0, 3, 5, 1});
          CHECK(spec_from_prompt(p) == spec);
          ++n;
        }
  CHECK(n == 288);
  auto p = make_prompt({}, 0, 0, 0);
  p.first[1] = 6;
  CHECK_THROWS_AS(spec_from_prompt(p), VocabError);
  CHECK_THROWS_AS(make_prompt({}, 16, 0, 0), VocabError);
  CHECK_THROWS_AS(make_prompt({}, 0, 0, 5), VocabError);
}

TEST_CASE("speed 0 gives a static video") {
  sprites::SpriteSpec spec{sprites::ShapeKind::Triangle, 2, sprites::Accessory::Hat, 4};
  for (std::size_t m = 0; m < sprites::kNumMotions; ++m) {
    auto v = sprites::render_video(spec, {m, 0.0}, {3, 1.0}, 5, 32, 32);
    for (std::size_t f = 1; f < 5; ++f) CHECK(same_tensor(video_frame(v.frames, f), video_frame(v.frames, 0)));
  }
}

TEST_CASE("illumination scales subject pixels linearly") {
  sprites::SpriteSpec spec{sprites::ShapeKind::Square, 0, sprites::Accessory::Belt, 5};
  sprites::Pose pose{16, 16, 6.4};
  auto bright = sprites::render_frame(spec, pose, 2, 1.0, 32, 32);
  auto dim = sprites::render_frame(spec, pose, 2, 0.5, 32, 32);
  std::size_t n = 0;
  for (std::size_t i = 0; i < 32 * 32; ++i) {
    if (bright.mask.data()[i] != 1) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      double b = bright.image.data()[3 * i + c], d = dim.image.data()[3 * i + c];
      if (b == 0) continue;
      CHECK(std::abs(b / d - 2.0) < 1e-12);
      ++n;
    }
  }
  CHECK(n > 100);
}

TEST_CASE("sample generation is deterministic and seed-dependent") {
  auto cfg = small_config();
  auto a = generate_sample(cfg, 2, 0);
  auto b = generate_sample(cfg, 2, 0);
  CHECK(same_sample(a, b));
  auto c = generate_sample(cfg, 2, 1);
  CHECK_FALSE(same_tensor(a.video, c.video));
  cfg.seed = 8;
  CHECK_FALSE(same_tensor(a.ref_image, generate_sample(cfg, 2, 0).ref_image));
}

TEST_CASE("emitted samples satisfy the anti-copy and identity properties") {
  auto cfg = small_config();
  cfg.n_samples = 12;
  auto ds = generate_dataset(cfg);
  REQUIRE(ds.samples.size() == 12);
  for (const auto& s : ds.samples) {
    CHECK(validate_sample(s, cfg).ok);
    auto f0 = video_frame(s.video, 0);
    CHECK(mse(s.ref_image, f0).item() > 0);
    CHECK(sprites::pose_distance(s.ref_pose, s.frame0_pose) >= cfg.min_pose_distance);
    CHECK(std::abs(s.ref_illum - s.scene.illumination) >= cfg.min_illum_delta);
    CHECK(eval::extract_attributes(s.ref_image) == s.spec);
    CHECK(eval::extract_attributes(f0) == s.spec);
    CHECK(spec_from_prompt(s.prompt) == s.spec);
    // Blank background on the reference.
    for (std::size_t i = 0; i < s.ref_mask.numel(); ++i)
      if (s.ref_mask.data()[i] == 0)
        for (std::size_t c = 0; c < 3; ++c) CHECK(s.ref_image.data()[3 * i + c] == 0);
  }
  for (const auto& d : ds.dropped) CHECK_FALSE(d.reason.empty());
}

TEST_CASE("dataset generation is a pure function of the config") {
  auto cfg = small_config();
  auto a = generate_dataset(cfg);
  auto b = generate_dataset(cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(same_sample(a.samples[i], b.samples[i]));
}

TEST_CASE("clipped subject is rejected") {
  auto cfg = small_config();
  auto s = generate_sample(cfg, 0, 0);
  REQUIRE(validate_sample(s, cfg).ok);
  sprites::Pose edge{2.0, 16.0, s.ref_pose.radius};
  auto f = sprites::render_frame(s.spec, edge, -1, s.ref_illum, cfg.size, cfg.size);
  s.ref_image = f.image;
  s.ref_mask = f.mask;
  s.ref_pose = edge;
  auto v = validate_sample(s, cfg);
  CHECK_FALSE(v.ok);
  CHECK(v.reason.find("border") != std::string::npos);
}

TEST_CASE("reference equal to frame 0 is rejected") {
  auto cfg = small_config();
  auto s = generate_sample(cfg, 1, 0);
  REQUIRE(validate_sample(s, cfg).ok);
  s.ref_image = video_frame(s.video, 0);
  s.ref_mask = Tensor({cfg.size, cfg.size}, std::vector<Scalar>(s.video_masks.data().begin(),
                                                                 s.video_masks.data().begin() + cfg.size * cfg.size));
  CHECK_FALSE(is_valid(s, cfg));
  CHECK(validate_sample(s, cfg).reason == "reference equals frame 0");
}

TEST_CASE("make_reference gives up after bounded retries") {
  auto cfg = small_config();
  cfg.min_pose_distance = 1e6;
  RngState rng(1);
  CHECK_THROWS_AS(make_reference({}, {16, 16, 6.4}, 1.0, 32, 32, rng, cfg), GenError);
}

TEST_CASE("dataset round-trip is bit-exact") {
  auto cfg = small_config();
  auto ds = generate_dataset(cfg);
  auto dir = fresh_dir("roundtrip");
  write_dataset(ds, dir);
  auto back = read_dataset(dir);
  CHECK(back.config == cfg);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(same_sample(back.samples[i], ds.samples[i]));
  auto m = load_manifest(dir);
  CHECK(m.at("count") == cfg.n_samples);
  CHECK(m.at("vocab").at("motions").size() == 16);
  CHECK(m.at("samples").at(0).at("seed").get<std::uint64_t>() == ds.samples[0].seed);
  fs::remove_all(dir);
}

TEST_CASE("corrupt or inconsistent datasets raise FormatError") {
  auto cfg = small_config();
  auto ds = generate_dataset(cfg);

  SUBCASE("count mismatch") {
    auto dir = fresh_dir("count");
    write_dataset(ds, dir);
    auto m = load_manifest(dir);
    m["count"] = 5;
    save_manifest(dir, m);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    fs::remove_all(dir);
  }
  SUBCASE("missing sample file names the file") {
    auto dir = fresh_dir("missing");
    write_dataset(ds, dir);
    fs::remove(dir / "sample_00002.bin");
    try {
      read_dataset(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("manifest.json") != std::string::npos);
    }
    fs::remove_all(dir);
  }
  SUBCASE("truncated sample file") {
    auto dir = fresh_dir("truncated");
    write_dataset(ds, dir);
    auto p = dir / "sample_00001.bin";
    auto bytes = read_file(p.string());
    write_file(p.string(), bytes.substr(0, bytes.size() / 2));
    try {
      read_dataset(dir);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("sample_00001.bin") != std::string::npos);
    }
    fs::remove_all(dir);
  }
  SUBCASE("missing manifest") {
    auto dir = fresh_dir("nomanifest");
    fs::create_directories(dir);
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    fs::remove_all(dir);
  }
}

TEST_CASE("unknown manifest fields are ignored") {
  auto cfg = small_config();
  auto ds = generate_dataset(cfg);
  auto dir = fresh_dir("future");
  write_dataset(ds, dir);
  auto m = load_manifest(dir);
  m["future_field"] = {{"nested", 1}};
  m["config"]["future_knob"] = 3.5;
  m["samples"][0]["future_annotation"] = "x";
  save_manifest(dir, m);
  auto back = read_dataset(dir);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(same_sample(back.samples[i], ds.samples[i]));
  fs::remove_all(dir);
}

TEST_CASE("prompt text parses to the same ids as make_prompt") {
  auto p = data::parse_prompt("shape=square,body_color=blue,accessory=hat,accessory_color=red,motion=3,background=1,light=4");
  auto want = data::make_prompt({sprites::ShapeKind::Square, 2, sprites::Accessory::Hat, 0}, 3, 1, 4);
  CHECK(sprites::color_names()[2] == "blue");
  CHECK(p == want);
  CHECK(data::parse_prompt("") == data::make_prompt({}, 0, 0, 2));
  CHECK(data::parse_prompt("shape=1,body_color=2") == data::parse_prompt("shape=" + sprites::shape_names()[1] +
                                                                          ",body_color=" + sprites::color_names()[2]));
  CHECK_THROWS_AS(data::parse_prompt("shape=blob"), VocabError);
  CHECK_THROWS_AS(data::parse_prompt("size=3"), VocabError);
  CHECK_THROWS_AS(data::parse_prompt("shape"), VocabError);
  CHECK_THROWS_AS(data::parse_prompt("motion=999"), VocabError);
  CHECK_THROWS_AS(data::parse_prompt("accessory=hat"), VocabError);
  CHECK_THROWS(data::parse_prompt("body_color=red,accessory=hat,accessory_color=red"));
}
