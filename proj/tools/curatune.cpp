// Copyright 2026 The curatune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point: autoencoder training/metrics, latent-diffusion
// pre-training and sampling, curation, quality-tuning and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "curatune/autoencoder/metrics.hpp"
#include "curatune/autoencoder/train.hpp"
#include "curatune/curation/cascade.hpp"
#include "curatune/curation/server.hpp"
#include "curatune/curation/synthetic.hpp"
#include "curatune/diffusion/sampler.hpp"
#include "curatune/diffusion/trainer.hpp"
#include "curatune/eval/service.hpp"
#include "curatune/image/dataset.hpp"
#include "curatune/image/synthetic.hpp"
#include "curatune/qtune/ablation.hpp"
#include "curatune/qtune/latent_backbone.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace curatune;

namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_text(path, j.dump(2) + "\n");
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

/// Loads and square-resizes the images of a manifest.
std::vector<CaptionedImage> load_images(const fs::path& manifest, int resolution, bool prefer_curated = false) {
  auto items = load_captioned_images(manifest, prefer_curated);
  if (items.empty()) throw DataError("manifest " + manifest.string() + " lists no images");
  if (resolution > 0)
    for (auto& it : items) it.image = curation::resize_to_target(it.image, resolution);
  return items;
}

std::vector<Image> images_only(const std::vector<CaptionedImage>& items) {
  std::vector<Image> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.image);
  return out;
}

// ---------------------------------------------------------------------------
// Autoencoder

struct AETrainFile {
  ae::AEConfig model;
  ae::AETrainOptions train;
  std::string data;
  int resolution = 0;
};

AETrainFile load_ae_train_file(const fs::path& path) {
  const json j = io::load_config(path);
  auto allowed = ae::ae_config_keys();
  for (const char* k : {"data", "resolution", "batch_size", "learning_rate", "adv_start_fraction"}) allowed.insert(k);
  io::check_keys(j, allowed, "autoencoder training config");
  AETrainFile f;
  json model = json::object();
  for (const auto& [k, v] : j.items())
    if (ae::ae_config_keys().count(k)) model[k] = v;
  f.model = model.get<ae::AEConfig>();
  f.model.validate();
  io::read_opt(j, "data", f.data);
  io::read_opt(j, "resolution", f.resolution);
  io::read_opt(j, "batch_size", f.train.batch_size);
  io::read_opt(j, "learning_rate", f.train.learning_rate);
  io::read_opt(j, "adv_start_fraction", f.train.adv_start_fraction);
  if (!f.data.empty() && fs::path(f.data).is_relative()) f.data = (path.parent_path() / f.data).string();
  return f;
}

int cmd_train_ae(const fs::path& config, int steps, std::uint64_t seed, const fs::path& out, const std::string& data) {
  AETrainFile f = load_ae_train_file(config);
  const std::string manifest = data.empty() ? f.data : data;
  if (manifest.empty()) throw ConfigError("no training data: set 'data' in the config or pass --data");
  f.train.steps = steps;
  f.train.seed = seed;
  const auto items = load_images(manifest, f.resolution);
  const auto images = images_only(items);
  log_line("train-ae: " + std::to_string(images.size()) + " images, " + std::to_string(steps) + " steps");
  auto result = ae::train_ae<float>(images, f.model, f.train);
  Archive a = result.model.to_archive(steps);
  a.meta["seed"] = seed;
  a.meta["final_loss"] = result.log.back();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  a.save(out);
  log_line("train-ae: final recon " + std::to_string(result.log.back().recon) + " -> " + out.string());
  return 0;
}

int cmd_ae_metrics(const fs::path& ckpt, const fs::path& data, const fs::path& report, int resolution) {
  const Archive a = Archive::load(ckpt);
  if (a.kind != "autoencoder") throw ConfigError("checkpoint kind is '" + a.kind + "', expected 'autoencoder'");
  const auto model = ae::Autoencoder<float>::from_archive(a);
  const auto images = images_only(load_images(data, resolution));
  const ae::DefaultFeatureExtractor fx;
  const auto m = ae::evaluate_autoencoder(model, std::span<const Image>(images), fx);
  json r = {{"ssim", m.ssim},
            {"psnr", m.psnr},
            {"fid", m.fid},
            {"fid_epsilon", m.fid_epsilon},
            {"n_images", images.size()},
            {"config", a.config}};
  write_json(report, r);
  std::cout << r.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Latent diffusion

int cmd_pretrain(const fs::path& config, const fs::path& data, const fs::path& out_dir) {
  const auto cfg = io::load_config(config).get<diffusion::TrainConfig>();
  cfg.validate();
  if (cfg.ae_ckpt.empty()) throw ConfigError("train config needs ae_ckpt (first-stage autoencoder checkpoint)");
  fs::path ae_path(cfg.ae_ckpt);
  if (ae_path.is_relative()) ae_path = config.parent_path() / ae_path;
  const Archive ae_arch = Archive::load(ae_path);
  if (ae_arch.kind != "autoencoder") throw ConfigError(ae_path.string() + " is not an autoencoder checkpoint");
  diffusion::LatentDiffusion model(ae::Autoencoder<float>::from_archive(ae_arch), cfg.denoiser, cfg.text_cond,
                                   cfg.schedule_steps, cfg.seed);
  const auto items = load_captioned_images(data);
  if (items.empty()) throw DataError("pretrain: manifest lists no images");
  log_line("pretrain: " + std::to_string(items.size()) + " images, " + std::to_string(cfg.total_steps()) +
           " steps, denoiser params " + std::to_string(model.denoiser().param_count()));
  fs::create_directories(out_dir);
  diffusion::PretrainOptions opt;
  opt.out_dir = out_dir;
  const int every = std::max(1, cfg.total_steps() / 20);
  opt.on_step = [every](const diffusion::StepLog& s) {
    if ((s.step + 1) % every == 0)
      log_line("  step " + std::to_string(s.step + 1) + " res " + std::to_string(s.resolution) + " loss " +
               std::to_string(s.loss));
  };
  const auto result = diffusion::pretrain(model, items, cfg, opt);
  Archive final_ckpt = model.to_archive(cfg.total_steps());
  final_ckpt.meta["train_config"] = cfg;
  final_ckpt.save(out_dir / "final.ckpt");
  std::vector<json> log;
  for (const auto& s : result.log) log.emplace_back(s);
  io::write_jsonl(out_dir / "train_log.jsonl", log);
  json ckpts = json::array();
  for (const auto& c : result.checkpoints)
    ckpts.push_back({{"stage", c.stage},
                     {"resolution", c.resolution},
                     {"step", c.step},
                     {"file", fs::path(c.path).filename().string()}});
  write_json(out_dir / "summary.json", {{"total_steps", cfg.total_steps()},
                                        {"n_images", items.size()},
                                        {"latent_scale", model.latent_scale()},
                                        {"final_loss", result.log.back().loss},
                                        {"checkpoints", ckpts},
                                        {"final", "final.ckpt"},
                                        {"config", cfg}});
  log_line("pretrain: wrote " + (out_dir / "final.ckpt").string());
  return 0;
}

int cmd_sample(const fs::path& ckpt, const std::string& prompt, std::uint64_t seed, const fs::path& out, int n,
               int steps, double guidance) {
  const auto model = diffusion::LatentDiffusion::from_archive(Archive::load(ckpt));
  diffusion::SampleOptions opt;
  opt.seed = seed;
  opt.steps = steps;
  opt.guidance_scale = guidance;
  const std::vector<std::string> prompts(static_cast<std::size_t>(n), prompt);
  const auto images = diffusion::sample(model, prompts, opt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (images.size() == 1)
    save_png(out, images.front());
  else
    save_png(out, make_grid(images, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(images.size()))))));
  log_line("sample: wrote " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------
// Curation

int cmd_curate_auto(const fs::path& in, const fs::path& config, const fs::path& out) {
  curation::CascadeConfig cfg;
  if (!config.empty()) cfg = io::load_config(config).get<curation::CascadeConfig>();
  const auto parsed = curation::parse_records(io::read_jsonl(in));
  auto result = curation::run_auto_cascade(parsed.records, cfg);
  result.rejection_counts["malformed"] += static_cast<long long>(parsed.malformed.size());
  std::vector<json> rows;
  for (const auto& r : result.records) rows.emplace_back(r);
  io::write_jsonl(out, rows);
  json summary = {{"input_rows", parsed.records.size() + parsed.malformed.size()},
                  {"malformed", parsed.malformed.size()},
                  {"filter_survivors", result.survivors},
                  {"after_engagement", result.ranked},
                  {"auto_passed", result.auto_passed},
                  {"rejection_counts", result.rejection_counts}};
  for (const auto& [line, msg] : parsed.malformed)
    log_line("curate auto: skipped malformed row " + std::to_string(line) + ": " + msg);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_curate_init(const fs::path& records, const fs::path& config, const fs::path& state) {
  fs::create_directories(state);
  std::vector<json> rows;
  for (const auto& r : curation::parse_records(io::read_jsonl(records)).records) {
    json j = r;
    // Keep image uris valid from inside the state directory.
    fs::path uri(r.uri);
    if (!r.uri.empty() && uri.is_relative())
      j["uri"] = fs::relative(fs::absolute(records.parent_path() / uri), fs::absolute(state)).string();
    rows.push_back(std::move(j));
  }
  io::write_jsonl(state / "records.jsonl", rows);
  if (!config.empty()) fs::copy_file(config, state / "config.yaml", fs::copy_options::overwrite_existing);
  if (!fs::exists(state / "events.jsonl")) io::write_text(state / "events.jsonl", "");
  // Validate the assembled state.
  const auto st = curation::CurationService::load_state(state);
  std::cout << json(st.funnel()).dump(2) << "\n";
  return 0;
}

int cmd_curate_serve(const fs::path& state, const std::string& host, int port) {
  curation::CurationService svc(state);
  httplib::Server server;
  curation::register_curation_routes(server, svc);
  log_line("curate serve: listening on http://" + host + ":" + std::to_string(port));
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

int cmd_curate_export(const fs::path& state, const fs::path& out) {
  const auto st = curation::CurationService::load_state(state);
  auto rows = curation::export_quality_set(st);
  for (auto& j : rows) {
    fs::path uri(j.value("uri", std::string{}));
    if (!uri.empty() && uri.is_relative()) {
      const fs::path out_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
      j["uri"] = fs::relative(fs::absolute(state / uri), fs::absolute(out_dir)).string();
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_jsonl(out, rows);
  log_line("curate export: " + std::to_string(rows.size()) + " selected records -> " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------
// Quality tuning

std::vector<qtune::QualityExample> load_quality_set(const fs::path& data) {
  std::vector<qtune::QualityExample> q;
  for (auto& it : load_captioned_images(data, /*prefer_curated=*/true))
    q.push_back({std::move(it.id), std::move(it.image), std::move(it.caption)});
  return q;
}

int cmd_quality_tune(const fs::path& ckpt, const fs::path& data, const fs::path& config, const fs::path& out) {
  const auto cfg = config.empty() ? qtune::QTuneConfig{} : io::load_config(config).get<qtune::QTuneConfig>();
  cfg.validate();
  qtune::LatentDiffusionBackbone backbone;
  backbone.load(ckpt);
  const auto quality = load_quality_set(data);
  fs::create_directories(out);
  std::vector<std::string> grid_prompts;
  for (std::size_t i = 0; i < std::min<std::size_t>(16, quality.size()); ++i) grid_prompts.push_back(quality[i].caption);
  qtune::QTuneHooks hooks;
  hooks.on_grid = [&](std::int64_t step, qtune::QTuneBackbone& bb) {
    const auto imgs = bb.sample(grid_prompts, cfg.seed);
    char name[32];
    std::snprintf(name, sizeof name, "grid_%06lld.png", static_cast<long long>(step));
    save_png(out / name, make_grid(imgs, 4));
  };
  hooks.on_step = [&](const qtune::StepRecord& s) {
    if (s.step % 100 == 0) log_line("  step " + std::to_string(s.step) + " loss " + std::to_string(s.loss));
  };
  log_line("quality-tune: " + std::to_string(quality.size()) + " examples");
  const auto report = qtune::quality_tune(backbone, quality, cfg, hooks);
  backbone.save(out / "tuned.ckpt");
  write_json(out / "report.json", report);
  log_line("quality-tune: " + std::to_string(report.steps_run) + " steps, stop_reason " + report.stop_reason);
  return 0;
}

int cmd_qtune_ablation(const fs::path& ckpt, const fs::path& data, const fs::path& config, const fs::path& prompts_path,
                       const std::vector<int>& sizes, const fs::path& out) {
  qtune::AblationSpec spec;
  spec.sizes = sizes;
  if (!config.empty()) spec.config = io::load_config(config).get<qtune::QTuneConfig>();
  spec.sample_seed = spec.config.seed;
  spec.task_seed = spec.config.seed;
  const auto quality = load_quality_set(data);
  std::vector<eval::PromptRecord> prompts;
  for (const auto& row : io::read_jsonl(prompts_path)) prompts.push_back(row.get<eval::PromptRecord>());
  auto loader = [&]() {
    auto bb = std::make_unique<qtune::LatentDiffusionBackbone>();
    bb->load(ckpt);
    return std::unique_ptr<qtune::QTuneBackbone>(std::move(bb));
  };
  const auto result = qtune::run_subset_ablation(loader, quality, prompts, qtune::contrast_judge(), spec);
  write_json(out, result);
  for (const auto& arm : result.arms)
    std::printf("%6d  %5.1f  %5.1f  %5.1f\n", arm.subset_size, arm.overall.win_pct.value_or(0),
                arm.overall.tie_pct.value_or(0), arm.overall.lose_pct.value_or(0));
  return 0;
}

// ---------------------------------------------------------------------------
// Evaluation

std::map<std::string, std::string> load_image_manifest(const fs::path& manifest, const fs::path& state) {
  std::map<std::string, std::string> m;
  for (const auto& row : io::read_jsonl(manifest)) {
    if (!row.contains("prompt_id") || !row.contains("uri"))
      throw DataError(manifest.string() + ": rows need prompt_id and uri");
    const auto pid = row["prompt_id"].get<std::string>();
    fs::path uri = resolve_uri(manifest, row["uri"].get<std::string>());
    if (!m.emplace(pid, fs::relative(fs::absolute(uri), fs::absolute(state)).string()).second)
      throw DataError(manifest.string() + ": two images for prompt " + pid);
  }
  return m;
}

int cmd_eval_build(const fs::path& prompts_path, const fs::path& images_x, const fs::path& images_y,
                   const std::string& model_x, const std::string& model_y, const std::string& metric,
                   std::uint64_t seed, const fs::path& state) {
  std::vector<eval::PromptRecord> prompts;
  for (const auto& row : io::read_jsonl(prompts_path)) prompts.push_back(row.get<eval::PromptRecord>());
  fs::create_directories(state);
  const auto xi = load_image_manifest(images_x, state);
  const auto yi = load_image_manifest(images_y, state);
  const eval::ModelPair models{model_x, model_y};
  std::vector<eval::ComparisonTask> tasks;
  std::vector<eval::Metric> metrics;
  if (metric == "both")
    metrics = {eval::Metric::VisualAppeal, eval::Metric::TextFaithfulness};
  else
    metrics = {eval::parse_metric(metric)};
  for (auto m : metrics) {
    auto t = eval::build_task_set(prompts, xi, yi, m, seed, models);
    tasks.insert(tasks.end(), t.begin(), t.end());
  }
  eval::write_eval_state(state, prompts, tasks, models, seed);
  log_line("eval build-tasks: " + std::to_string(tasks.size()) + " tasks -> " + state.string());
  return 0;
}

int cmd_eval_gen_prompts(std::size_t n, std::uint64_t seed, double stylized, const fs::path& out) {
  const auto prompts = eval::generate_oui_like_prompts(n, seed, stylized);
  std::vector<json> rows;
  for (const auto& p : prompts) rows.emplace_back(p);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_jsonl(out, rows);
  const auto check = eval::validate_prompt_distribution(prompts, eval::default_taxonomy(), 0.05);
  log_line("eval gen-prompts: " + std::to_string(n) + " prompts, L1 to target " + std::to_string(check.l1));
  return 0;
}

int cmd_eval_report(const fs::path& state, const std::string& slice, const fs::path& out) {
  if (!slice.empty()) eval::check_slice(slice);
  const auto st = eval::load_eval_state(state);
  std::vector<std::string> slices{eval::kSliceAll, eval::kSliceStylized};
  if (!slice.empty()) slices = {slice};
  const json r = eval::report_from_log(st.tasks, st.prompts, st.judgments, st.models, slices);
  if (out.empty())
    std::cout << r.dump(2) << "\n";
  else
    write_json(out, r);
  return 0;
}

int cmd_eval_serve(const fs::path& state, const std::string& host, int port) {
  eval::EvalService svc(state);
  httplib::Server server;
  eval::register_eval_routes(server, svc);
  log_line("eval serve: listening on http://" + host + ":" + std::to_string(port));
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

// ---------------------------------------------------------------------------
// Synthetic data

int cmd_synth_images(std::size_t n, int size, std::uint64_t seed, double cmin, double cmax, const fs::path& out_dir) {
  synth::Options opt;
  opt.size = size;
  opt.contrast_min = cmin;
  opt.contrast_max = cmax;
  fs::create_directories(out_dir / "images");
  std::vector<json> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = synth::make_sample(seed, i, opt);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    save_png(out_dir / "images" / name, s.image);
    char id[32];
    std::snprintf(id, sizeof id, "img-%06zu", i);
    rows.push_back({{"id", id},
                    {"uri", std::string("images/") + name},
                    {"caption", s.caption},
                    {"concept", s.concept_label},
                    {"contrast", s.contrast}});
  }
  io::write_jsonl(out_dir / "manifest.jsonl", rows);
  log_line("synth images: " + std::to_string(n) + " images -> " + (out_dir / "manifest.jsonl").string());
  return 0;
}

int cmd_synth_records(std::size_t n, std::uint64_t seed, const fs::path& out) {
  std::vector<json> rows;
  for (const auto& r : curation::synthetic_records(n, seed)) rows.emplace_back(r);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_jsonl(out, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curatune: pre-train, curate, quality-tune and evaluate a toy text-to-image model"};
  app.require_subcommand(1);
  std::function<int()> run;

  // train-ae
  auto* tae = app.add_subcommand("train-ae", "Train the first-stage autoencoder");
  static std::string tae_config, tae_out, tae_data;
  static int tae_steps = 1000;
  static std::uint64_t tae_seed = 0;
  tae->add_option("--config", tae_config, "Autoencoder training config (YAML)")->required();
  tae->add_option("--steps", tae_steps, "Training steps")->required();
  tae->add_option("--seed", tae_seed, "Random seed");
  tae->add_option("--out", tae_out, "Output checkpoint")->required();
  tae->add_option("--data", tae_data, "Image manifest (overrides the config's data key)");
  tae->callback([&] { run = [] { return cmd_train_ae(tae_config, tae_steps, tae_seed, tae_out, tae_data); }; });

  // ae-metrics
  auto* aem = app.add_subcommand("ae-metrics", "Reconstruction metrics (SSIM, PSNR, FID) of an autoencoder");
  static std::string aem_ckpt, aem_data, aem_report;
  static int aem_res = 0;
  aem->add_option("--ckpt", aem_ckpt)->required();
  aem->add_option("--data", aem_data, "Held-out image manifest")->required();
  aem->add_option("--report", aem_report, "Output JSON report")->required();
  aem->add_option("--resolution", aem_res, "Center-crop and resize images to this size first");
  aem->callback([&] { run = [] { return cmd_ae_metrics(aem_ckpt, aem_data, aem_report, aem_res); }; });

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Progressive-resolution latent-diffusion pre-training");
  static std::string pre_config, pre_data, pre_out;
  pre->add_option("--config", pre_config, "Train config (YAML)")->required();
  pre->add_option("--data", pre_data, "Captioned image manifest")->required();
  pre->add_option("--out-dir", pre_out, "Output directory")->required();
  pre->callback([&] { run = [] { return cmd_pretrain(pre_config, pre_data, pre_out); }; });

  // sample
  auto* smp = app.add_subcommand("sample", "Generate an image from a prompt");
  static std::string smp_ckpt, smp_prompt, smp_out;
  static std::uint64_t smp_seed = 0;
  static int smp_n = 1, smp_steps = 50;
  static double smp_guidance = 3.0;
  smp->add_option("--ckpt", smp_ckpt)->required();
  smp->add_option("--prompt", smp_prompt)->required();
  smp->add_option("--seed", smp_seed);
  smp->add_option("--out", smp_out, "Output PNG")->required();
  smp->add_option("--n", smp_n, "Number of samples (tiled into a grid when > 1)")->check(CLI::PositiveNumber);
  smp->add_option("--steps", smp_steps, "DDIM steps")->check(CLI::PositiveNumber);
  smp->add_option("--guidance", smp_guidance, "Classifier-free guidance scale");
  smp->callback([&] {
    run = [] { return cmd_sample(smp_ckpt, smp_prompt, smp_seed, smp_out, smp_n, smp_steps, smp_guidance); };
  });

  // curate
  auto* cur = app.add_subcommand("curate", "Data curation funnel");
  cur->require_subcommand(1);
  auto* cauto = cur->add_subcommand("auto", "Run the automatic filter cascade");
  static std::string ca_in, ca_config, ca_out;
  cauto->add_option("--in", ca_in, "Input record manifest (JSONL)")->required();
  cauto->add_option("--config", ca_config, "Cascade config (YAML)");
  cauto->add_option("--out", ca_out, "Output records with updated stages (JSONL)")->required();
  cauto->callback([&] { run = [] { return cmd_curate_auto(ca_in, ca_config, ca_out); }; });
  auto* cinit = cur->add_subcommand("init", "Create a review state directory from cascade output");
  static std::string ci_records, ci_config, ci_state;
  cinit->add_option("--records", ci_records, "Records from 'curate auto'")->required();
  cinit->add_option("--config", ci_config, "Cascade config (YAML)");
  cinit->add_option("--state", ci_state, "State directory to create")->required();
  cinit->callback([&] { run = [] { return cmd_curate_init(ci_records, ci_config, ci_state); }; });
  auto* cserve = cur->add_subcommand("serve", "Serve the human-review HTTP API");
  static std::string cs_state, cs_host = "127.0.0.1";
  static int cs_port = 8080;
  cserve->add_option("--state", cs_state)->required();
  cserve->add_option("--port", cs_port);
  cserve->add_option("--host", cs_host);
  cserve->callback([&] { run = [] { return cmd_curate_serve(cs_state, cs_host, cs_port); }; });
  auto* cexp = cur->add_subcommand("export", "Export SELECTED records as the quality-tuning manifest");
  static std::string ce_state, ce_out;
  cexp->add_option("--state", ce_state)->required();
  cexp->add_option("--out", ce_out)->required();
  cexp->callback([&] { run = [] { return cmd_curate_export(ce_state, ce_out); }; });

  // quality-tune
  auto* qt = app.add_subcommand("quality-tune", "Fine-tune a pre-trained checkpoint on a quality set");
  static std::string qt_ckpt, qt_data, qt_config, qt_out;
  qt->add_option("--ckpt", qt_ckpt, "Pre-trained checkpoint")->required();
  qt->add_option("--data", qt_data, "Quality-set manifest")->required();
  qt->add_option("--config", qt_config, "Quality-tuning config (YAML)");
  qt->add_option("--out", qt_out, "Output directory")->required();
  qt->callback([&] { run = [] { return cmd_quality_tune(qt_ckpt, qt_data, qt_config, qt_out); }; });

  auto* qta = app.add_subcommand("qtune-ablation", "Dataset-size ablation judged against the pre-trained model");
  static std::string qa_ckpt, qa_data, qa_config, qa_prompts, qa_out;
  static std::vector<int> qa_sizes{100, 1000, 2000};
  qta->add_option("--ckpt", qa_ckpt)->required();
  qta->add_option("--data", qa_data)->required();
  qta->add_option("--config", qa_config);
  qta->add_option("--prompts", qa_prompts, "Prompt manifest")->required();
  qta->add_option("--sizes", qa_sizes, "Nested subset sizes")->delimiter(',');
  qta->add_option("--out", qa_out, "Output JSON")->required();
  qta->callback([&] {
    run = [] { return cmd_qtune_ablation(qa_ckpt, qa_data, qa_config, qa_prompts, qa_sizes, qa_out); };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Paired human-preference evaluation");
  ev->require_subcommand(1);
  auto* eb = ev->add_subcommand("build-tasks", "Build A/B comparison tasks");
  static std::string eb_prompts, eb_x, eb_y, eb_mx = "model_x", eb_my = "model_y", eb_metric = "both", eb_state;
  static std::uint64_t eb_seed = 0;
  eb->add_option("--prompts", eb_prompts, "Prompt manifest")->required();
  eb->add_option("--images-x", eb_x, "Image manifest {prompt_id, uri} of the system under test")->required();
  eb->add_option("--images-y", eb_y, "Image manifest {prompt_id, uri} of the baseline")->required();
  eb->add_option("--model-x", eb_mx);
  eb->add_option("--model-y", eb_my);
  eb->add_option("--metric", eb_metric)->check(CLI::IsMember({"visual_appeal", "text_faithfulness", "both"}));
  eb->add_option("--seed", eb_seed);
  eb->add_option("--state", eb_state, "Eval state directory")->required();
  eb->callback([&] {
    run = [] { return cmd_eval_build(eb_prompts, eb_x, eb_y, eb_mx, eb_my, eb_metric, eb_seed, eb_state); };
  });
  auto* eg = ev->add_subcommand("gen-prompts", "Generate an open-user-input-like prompt set");
  static std::size_t eg_n = 2100;
  static std::uint64_t eg_seed = 0;
  static double eg_styl = 0.15;
  static std::string eg_out;
  eg->add_option("--n", eg_n);
  eg->add_option("--seed", eg_seed);
  eg->add_option("--stylized-fraction", eg_styl);
  eg->add_option("--out", eg_out)->required();
  eg->callback([&] { run = [] { return cmd_eval_gen_prompts(eg_n, eg_seed, eg_styl, eg_out); }; });
  auto* er = ev->add_subcommand("report", "Win/tie/lose report from the judgment log");
  static std::string er_state, er_slice, er_out;
  er->add_option("--state", er_state)->required();
  er->add_option("--slice", er_slice)->check(CLI::IsMember({"all", "stylized"}));
  er->add_option("--out", er_out, "Write JSON here instead of stdout");
  er->callback([&] { run = [] { return cmd_eval_report(er_state, er_slice, er_out); }; });
  auto* es = ev->add_subcommand("serve", "Serve the evaluation HTTP API");
  static std::string es_state, es_host = "127.0.0.1";
  static int es_port = 8081;
  es->add_option("--state", es_state)->required();
  es->add_option("--port", es_port);
  es->add_option("--host", es_host);
  es->callback([&] { run = [] { return cmd_eval_serve(es_state, es_host, es_port); }; });

  // synth
  auto* sy = app.add_subcommand("synth", "Generate synthetic data");
  sy->require_subcommand(1);
  auto* si = sy->add_subcommand("images", "Procedural captioned images with a PNG manifest");
  static std::size_t si_n = 1000;
  static int si_size = 32;
  static std::uint64_t si_seed = 0;
  static double si_cmin = 0.15, si_cmax = 1.0;
  static std::string si_out;
  si->add_option("--n", si_n);
  si->add_option("--size", si_size);
  si->add_option("--seed", si_seed);
  si->add_option("--contrast-min", si_cmin);
  si->add_option("--contrast-max", si_cmax);
  si->add_option("--out-dir", si_out)->required();
  si->callback([&] { run = [] { return cmd_synth_images(si_n, si_size, si_seed, si_cmin, si_cmax, si_out); }; });
  auto* sr = sy->add_subcommand("records", "Synthetic curation records with random scores");
  static std::size_t sr_n = 10000;
  static std::uint64_t sr_seed = 0;
  static std::string sr_out;
  sr->add_option("--n", sr_n);
  sr->add_option("--seed", sr_seed);
  sr->add_option("--out", sr_out)->required();
  sr->callback([&] { run = [] { return cmd_synth_records(sr_n, sr_seed, sr_out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run ? run() : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}
