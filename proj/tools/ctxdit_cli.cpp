// ctxdit: dataset generation, training, sampling, evaluation and self-verification.
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ctxdit/eval.hpp"
#include "ctxdit/image_io.hpp"
#include "ctxdit/serialize.hpp"
#include "ctxdit/train.hpp"
#include "ctxdit/verify.hpp"
#include "json.hpp"

using namespace ctxdit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

constexpr char kVideoMagic[8] = {'C', 'T', 'X', 'D', 'V', 'I', 'D', '1'};

json read_json_file(const std::string& path) {
  auto text = read_file(path);
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError(path + ": not valid JSON");
  return j;
}

void write_json_file(const fs::path& path, const json& j) { write_file(path.string(), j.dump(2) + "\n"); }

// ---- gen-data ----

struct GenArgs {
  std::string config, out;
  std::size_t n_samples = 64, size = 32, frames = 8;
  std::uint64_t seed = 0;
  double speed = 1.0;
  bool previews = false;
};

int run_gen_data(const GenArgs& a, CLI::App& cmd) {
  data::GenConfig g;
  if (!a.config.empty()) g = data::gen_config_from_json(read_json_file(a.config));
  if (a.config.empty() || cmd.count("--n-samples")) g.n_samples = a.n_samples;
  if (a.config.empty() || cmd.count("--seed")) g.seed = a.seed;
  if (a.config.empty() || cmd.count("--size")) g.size = a.size;
  if (a.config.empty() || cmd.count("--frames")) g.frames = a.frames;
  if (a.config.empty() || cmd.count("--speed")) g.speed = a.speed;
  auto ds = data::generate_dataset(g);
  data::write_dataset(ds, a.out);
  if (a.previews) {
    for (const auto& s : ds.samples) {
      char name[64];
      std::snprintf(name, sizeof name, "ref_%05zu.ppm", s.index);
      image_io::write_ppm(fs::path(a.out) / name, s.ref_image);
    }
  }
  std::cout << "wrote " << ds.samples.size() << " samples to " << a.out << " (" << ds.dropped.size()
            << " draws dropped)\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string config, dataset, out, resume, preset;
  std::size_t steps = 0, checkpoint_every = 0, log_every = 10;
  std::uint64_t seed = 0;
  std::string flags = "full";
};

void apply_preset(const std::string& preset, train::TrainConfig& t) {
  if (preset.empty()) return;
  if (preset != "toy") throw ConfigError("unknown preset: " + preset);
  t.lr = 1e-3;
  t.warmup_steps = 20;
  t.batch_size = 8;
  t.total_steps = 500;
}

int run_train(const TrainArgs& a, CLI::App& cmd) {
  auto ds = data::read_dataset(a.dataset);
  fs::create_directories(a.out);
  model::ModelConfig mcfg;
  train::TrainConfig tcfg;
  std::optional<train::Checkpoint> ck;
  if (!a.resume.empty()) {
    ck = train::load_checkpoint(a.resume);
    mcfg = ck->model_config;
    tcfg = ck->train_config;
  }
  const bool explicit_cfg = !a.config.empty() || !a.preset.empty() || cmd.count("--seed") || cmd.count("--flags");
  if (explicit_cfg) {
    if (!ck) mcfg.frames = ds.config.frames, mcfg.height = mcfg.width = ds.config.size;
    train::TrainConfig fresh;
    apply_preset(a.preset, fresh);
    if (!a.config.empty()) {
      auto j = read_json_file(a.config);
      if (j.contains("model") && !ck) mcfg = model::model_config_from_json(j.at("model"));
      if (j.contains("train")) fresh = train::train_config_from_json(j.at("train"));
    }
    if (cmd.count("--seed")) fresh.seed = a.seed;
    if (cmd.count("--flags")) fresh.flags = model::parse_ablation_flags(a.flags);
    if (ck) fresh.total_steps = tcfg.total_steps;
    tcfg = fresh;
  } else if (!ck) {
    mcfg.frames = ds.config.frames;
    mcfg.height = mcfg.width = ds.config.size;
  }
  if (a.steps) tcfg.total_steps = a.steps;
  tcfg.validate();

  auto trainer = ck ? train::Trainer::resume(*ck, ds, &tcfg) : train::Trainer(mcfg, tcfg, ds);
  write_json_file(fs::path(a.out) / "config.json",
                  {{"model", model::to_json(trainer.model().config())},
                   {"train", train::to_json(trainer.config())},
                   {"data", data::to_json(ds.config)}});
  std::ofstream log(fs::path(a.out) / "train_log.jsonl", ck ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot open training log in " + a.out);
  auto t0 = std::chrono::steady_clock::now();
  std::cout << "training " << trainer.model().parameter_count() << " parameters from step " << trainer.current_step()
            << " to " << trainer.config().total_steps << "\n";
  trainer.run([&](const train::StepResult& r) {
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    train::write_log_line(log, {r.step, r.loss.l_gen, r.loss.l_ref, r.loss.l_total, r.lr, wall});
    log.flush();
    if (a.log_every && r.step % a.log_every == 0)
      std::printf("step %zu  l_gen %.5f  l_ref %.5f  l_total %.5f  lr %.2e\n", r.step, r.loss.l_gen, r.loss.l_ref,
                  r.loss.l_total, r.lr);
    if (a.checkpoint_every && r.step % a.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.bin", r.step);
      train::save_checkpoint(trainer.checkpoint(), fs::path(a.out) / name);
    }
  });
  train::save_checkpoint(trainer.checkpoint(), fs::path(a.out) / "checkpoint.bin");
  std::cout << "saved " << (fs::path(a.out) / "checkpoint.bin").string() << "\n";
  return kOk;
}

// ---- sample ----

struct SampleArgs {
  std::string checkpoint, ref, prompt, out, sampler = "ddim";
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  double guidance = 1.0;
};

int run_sample(const SampleArgs& a) {
  auto ck = train::load_checkpoint(a.checkpoint);
  auto m = train::model_from_checkpoint(ck);
  const auto& mc = m.config();
  auto ref = image_io::read_ppm(a.ref);
  auto prompt = data::parse_prompt(a.prompt);
  eval::GenerateOptions opts;
  opts.steps = a.steps;
  opts.ancestral = a.sampler == "ancestral";
  opts.guidance_scale = a.guidance;
  RngState rng(a.seed);
  auto video = eval::generate_video(m, ref, prompt, opts, rng);

  fs::create_directories(a.out);
  std::ostringstream raw;
  raw.write(kVideoMagic, sizeof kVideoMagic);
  write_tensor(raw, video);
  write_file((fs::path(a.out) / "video.bin").string(), raw.str());
  json frames = json::array();
  for (std::size_t f = 0; f < mc.frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.ppm", f);
    image_io::write_ppm(fs::path(a.out) / name, data::video_frame(video, f));
    frames.push_back(name);
  }
  write_json_file(fs::path(a.out) / "metadata.json",
                  {{"checkpoint", a.checkpoint},
                   {"checkpoint_step", ck.step},
                   {"reference", a.ref},
                   {"prompt", {{"first", prompt.first}, {"later", prompt.later}}},
                   {"sampler", a.sampler},
                   {"steps", a.steps},
                   {"seed", a.seed},
                   {"guidance_scale", a.guidance},
                   {"frames", frames},
                   {"video", "video.bin"},
                   {"video_shape", video.shape()},
                   {"pixel_range", "unclamped; frames clamp to [0, 1]"}});
  std::cout << "wrote " << mc.frames << " frames to " << a.out << "\n";
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint, dataset, out, config, train_dataset;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> ablate;
  std::size_t steps = 20, max_samples = 0;
};

int run_eval(const EvalArgs& a) {
  auto ds = data::read_dataset(a.dataset);
  eval::EvalConfig ec;
  ec.sampler_steps = a.steps;
  ec.max_samples = a.max_samples;
  eval::AblationReport rep;
  if (!a.checkpoint.empty()) {
    auto ck = train::load_checkpoint(a.checkpoint);
    std::vector<eval::MetricReport> reports;
    for (auto seed : a.seeds) {
      ec.seed = seed;
      reports.push_back(eval::evaluate(ck, ds, ec));
    }
    rep.variants.push_back(eval::summarize(ck.train_config.flags.name(), a.seeds, std::move(reports)));
    rep.provenance = {{"checkpoint", a.checkpoint}, {"eval", eval::to_json(ec)}};
  } else {
    if (a.ablate.empty()) throw ConfigError("eval needs --checkpoint or --ablate");
    eval::AblationOptions opts;
    if (!a.config.empty()) {
      auto j = read_json_file(a.config);
      if (j.contains("model")) opts.model = model::model_config_from_json(j.at("model"));
      if (j.contains("train")) opts.train = train::train_config_from_json(j.at("train"));
    }
    opts.eval = ec;
    opts.seeds = a.seeds;
    opts.on_run = [](const std::string& v, std::uint64_t s) { std::cout << "trained " << v << " seed " << s << "\n"; };
    std::vector<model::AblationFlags> flags;
    for (const auto& f : a.ablate) flags.push_back(model::parse_ablation_flags(f));
    auto train_set = a.train_dataset.empty() ? ds : data::read_dataset(a.train_dataset);
    rep = eval::ablation_suite(flags, train_set, ds, opts);
  }
  eval::write_report(rep, a.out);
  std::cout << eval::to_csv(rep);
  return kOk;
}

// ---- verify ----

int run_verify(bool as_json, const std::string& filter, bool sabotage) {
  verify::VerifyOptions opts;
  opts.filter = filter;
  opts.sabotage_ref_mask = sabotage;
  if (!as_json)
    opts.on_result = [](const verify::CheckResult& r) {
      std::printf("%-4s %-12s %-30s %6.2fs  %s\n", r.pass ? "PASS" : "FAIL", r.module.c_str(), r.name.c_str(),
                  r.seconds, r.detail.c_str());
      std::fflush(stdout);
    };
  auto results = verify::run_all(opts);
  if (as_json) {
    std::cout << verify::to_json(results).dump(2) << "\n";
  } else {
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.pass ? 0 : 1;
    std::printf("%zu/%zu checks passed\n", results.size() - failed, results.size());
    for (const auto& r : results)
      if (!r.pass) std::printf("failed: %s\n", r.name.c_str());
  }
  return verify::all_passed(results) ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxdit: reference-conditioned video diffusion on synthetic sprites"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic sprite-video dataset");
  gen_cmd->add_option("--config", gen.config, "Dataset config JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--n-samples", gen.n_samples, "Number of samples");
  gen_cmd->add_option("--seed", gen.seed, "Master seed");
  gen_cmd->add_option("--size", gen.size, "Frame height and width");
  gen_cmd->add_option("--frames", gen.frames, "Frames per video");
  gen_cmd->add_option("--speed", gen.speed, "Motion speed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--previews", gen.previews, "Also write reference images as PPM");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", tr.config, "JSON with optional 'model' and 'train' objects")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--preset", tr.preset, "Training preset")->check(CLI::IsMember({"toy"}));
  train_cmd->add_option("--steps", tr.steps, "Total steps (overrides the config)");
  train_cmd->add_option("--seed", tr.seed, "Training seed");
  train_cmd->add_option("--flags", tr.flags, "Ablation flags, e.g. full or no_recon_loss+no_gap_rope");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Save a checkpoint every N steps");
  train_cmd->add_option("--log-every", tr.log_every, "Print every N steps (0 = quiet)");

  SampleArgs sm;
  auto* sample_cmd = app.add_subcommand("sample", "Generate a video from a reference image and prompt");
  sample_cmd->add_option("--checkpoint", sm.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--ref", sm.ref, "Reference image (binary PPM)")->required()->check(CLI::ExistingFile);
  sample_cmd
      ->add_option("--prompt", sm.prompt,
                   "Comma-separated fields: shape, body_color, accessory, accessory_color, motion, background, light")
      ->required();
  sample_cmd->add_option("--out", sm.out, "Output directory")->required();
  sample_cmd->add_option("--steps", sm.steps, "Denoising steps");
  sample_cmd->add_option("--seed", sm.seed, "Noise seed");
  sample_cmd->add_option("--sampler", sm.sampler, "ddim or ancestral")->check(CLI::IsMember({"ddim", "ancestral"}));
  sample_cmd->add_option("--guidance", sm.guidance, "Classifier-free guidance scale");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or run an ablation suite");
  auto* ck_opt =
      eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", ev.dataset, "Evaluation dataset directory")->required();
  eval_cmd->add_option("--seeds", ev.seeds, "Evaluation seeds")->delimiter(',');
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();
  eval_cmd->add_option("--steps", ev.steps, "DDIM steps");
  eval_cmd->add_option("--max-samples", ev.max_samples, "Evaluate at most N samples (0 = all)");
  eval_cmd->add_option("--ablate", ev.ablate, "Flag sets to train and compare, e.g. full,no_recon_loss")
      ->delimiter(',')
      ->excludes(ck_opt);
  eval_cmd->add_option("--config", ev.config, "Model/train config JSON for --ablate")->check(CLI::ExistingFile);
  eval_cmd->add_option("--train-dataset", ev.train_dataset, "Training dataset for --ablate (default: --dataset)");

  bool verify_json = false, sabotage = false;
  std::string verify_filter;
  auto* verify_cmd = app.add_subcommand("verify", "Run the invariant catalog on built-in tiny configs");
  verify_cmd->add_flag("--json", verify_json, "Machine-readable output");
  verify_cmd->add_option("--filter", verify_filter, "Run only checks whose name contains this text");
  verify_cmd->add_flag("--sabotage-ref-mask", sabotage, "Test hook: disable the reference mask")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen, *gen_cmd);
    if (*train_cmd) return run_train(tr, *train_cmd);
    if (*sample_cmd) return run_sample(sm);
    if (*eval_cmd) return run_eval(ev);
    if (*verify_cmd) return run_verify(verify_json, verify_filter, sabotage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
