#pragma once
// End-to-end orchestration: dataset generation, branch training, one-branch
// and fused restoration, and bucketed evaluation tables. Every command
// freezes its resolved config, writes a run manifest whose referenced paths
// are verified to exist, and stages outputs atomically. All randomness flows
// from the single global seed through named substreams, so any stage can be
// rerun in isolation and reproduce itself.

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "astrodiff/fusion/fusion.hpp"
#include "astrodiff/image/png_io.hpp"
#include "astrodiff/metrics/metrics.hpp"
#include "astrodiff/pipeline/run_config.hpp"
#include "astrodiff/turbsim/turbsim.hpp"

namespace astrodiff::pipe {

namespace fs = std::filesystem;
using img::ImageSample;
using tg::Rng;
using tg::Tensorf;

inline std::string make_run_id(uint64_t seed) {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y%m%dT%H%M%SZ", &tm);
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(tg::splitmix64(seed)));
  return std::string(ts) + "-" + hash;
}

// Record of one command invocation: inputs consumed, outputs produced (paths
// relative to the run root) and timings. Refuses to be written while any
// referenced path is missing, so an interrupted run cannot leave a manifest
// pointing at files that never materialized.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::vector<std::array<std::string, 3>> entries;  // kind, key, value

  void add_meta(const std::string& key, const std::string& value) {
    entries.push_back({"meta", key, value});
  }
  void add_input(const std::string& key, const std::string& rel_path) {
    entries.push_back({"input", key, rel_path});
  }
  void add_output(const std::string& key, const std::string& rel_path) {
    entries.push_back({"output", key, rel_path});
  }
  void add_timing(const std::string& key, double seconds) {
    entries.push_back({"timing", key, util::fmt_g12(seconds)});
  }

  std::string serialize() const {
    util::CsvTable t{{"kind", "key", "value"}, {}};
    t.rows.push_back({"meta", "run_id", run_id});
    t.rows.push_back({"meta", "command", command});
    for (const auto& e : entries) t.rows.push_back({e[0], e[1], e[2]});
    return util::to_csv(t);
  }

  void write(const std::string& path, const std::string& root) const {
    std::string missing;
    for (const auto& e : entries) {
      if (e[0] != "input" && e[0] != "output") continue;
      if (!fs::exists(fs::path(root) / e[2])) missing += (missing.empty() ? "" : ", ") + e[2];
    }
    if (!missing.empty())
      throw std::runtime_error("manifest: referenced paths missing: " + missing);
    util::atomic_write(path, serialize());
  }
};

namespace pipe_detail {

inline double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline diff::ScheduleKind schedule_kind(const std::string& name) {
  if (name == "linear") return diff::ScheduleKind::linear;
  if (name == "cosine") return diff::ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule '" + name + "'");
}

inline void freeze_config(RunConfig cfg, const std::string& root, const std::string& command) {
  util::atomic_write((fs::path(root) / "configs" / (command + ".config")).string(),
                     cfg.serialize());
}

inline RunManifest start_manifest(const RunConfig& cfg, const std::string& command) {
  RunManifest m;
  m.run_id = make_run_id(cfg.run.seed);
  m.command = command;
  m.add_meta("seed", std::to_string(cfg.run.seed));
  m.add_meta("preset", cfg.run.preset);
  return m;
}

struct ManifestRow {
  std::string clean_rel, degraded_rel, cn2, bucket;
  uint64_t seed = 0;
};

inline std::vector<ManifestRow> load_split(const std::string& split_dir) {
  const std::string path = (fs::path(split_dir) / "manifest.csv").string();
  if (!fs::exists(path))
    throw std::runtime_error("missing data manifest '" + path + "' — run gen-data first");
  const util::CsvTable t = util::parse_csv(util::read_file(path));
  const int c_clean = util::csv_col(t, "clean_path");
  const int c_deg = util::csv_col(t, "degraded_path");
  const int c_cn2 = util::csv_col(t, "cn2");
  const int c_bucket = util::csv_col(t, "bucket");
  const int c_seed = util::csv_col(t, "seed");
  std::vector<ManifestRow> rows;
  for (const auto& r : t.rows)
    rows.push_back({r[c_clean], r[c_deg], r[c_cn2], r[c_bucket], std::stoull(r[c_seed])});
  return rows;
}

inline ImageSample load_image(const std::string& split_dir, const std::string& rel,
                              uint64_t seed = 0) {
  return ImageSample(img::read_png((fs::path(split_dir) / rel).string()), rel, seed);
}

inline Tensorf hstack(const std::vector<Tensorf>& tiles) {
  const int C = tiles.front().dim(0), H = tiles.front().dim(1);
  int W = 0;
  for (const auto& t : tiles) W += t.dim(2);
  Tensorf out({C, H, W});
  int x = 0;
  for (const auto& t : tiles) {
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < t.dim(2); ++j) out.at3(c, i, x + j) = t.at3(c, i, j);
    x += t.dim(2);
  }
  return out;
}

inline const met::SeverityModel& severity_model_for(const RunConfig& cfg,
                                                    met::SeverityModel& storage) {
  if (cfg.eval.severity_model.empty()) return met::default_severity_model();
  storage = met::SeverityModel::load(cfg.eval.severity_model);
  return storage;
}

inline std::unique_ptr<diff::EpsNet> load_checkpoint_or_fail(const std::string& path,
                                                             const std::string& hint) {
  if (!fs::exists(path))
    throw std::runtime_error("missing checkpoint '" + path + "' — run " + hint + " first");
  return diff::load_model(path);
}

}  // namespace pipe_detail

// Builds disjoint train/eval splits (scene seeds derived from separate
// substreams; collisions rejected) and writes both dataset manifests.
inline RunManifest cmd_gen_data(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string root = cfg.run.out;

  const uint64_t train_seed =
      cfg.data.train_seed ? cfg.data.train_seed : Rng::derive(cfg.run.seed, "data-train");
  const uint64_t eval_seed =
      cfg.data.eval_seed ? cfg.data.eval_seed : Rng::derive(cfg.run.seed, "data-eval");

  std::set<uint64_t> train_scene_seeds;
  for (int s = 0; s < cfg.data.train_scenes; ++s)
    train_scene_seeds.insert(Rng::derive(train_seed, "scene", static_cast<uint64_t>(s)));
  for (int s = 0; s < cfg.data.eval_scenes; ++s)
    if (train_scene_seeds.count(Rng::derive(eval_seed, "scene", static_cast<uint64_t>(s))))
      throw std::invalid_argument(
          "gen-data: train/eval splits share a scene seed; choose distinct "
          "data.train_seed/data.eval_seed");

  turb::SceneSpec proto;
  proto.height = proto.width = cfg.data.image_size;
  proto.channels = cfg.data.channels;

  turb::build_paired_dataset(cfg.data.train_scenes, proto, cfg.data.train_cn2,
                             (fs::path(root) / "data" / "train").string(), train_seed);
  turb::build_paired_dataset(cfg.data.eval_scenes, proto, cfg.data.eval_cn2,
                             (fs::path(root) / "data" / "eval").string(), eval_seed);

  pipe_detail::freeze_config(cfg, root, "gen_data");
  RunManifest m = pipe_detail::start_manifest(cfg, "gen-data");
  m.add_output("train_manifest", "data/train/manifest.csv");
  m.add_output("eval_manifest", "data/eval/manifest.csv");
  m.add_output("config", "configs/gen_data.config");
  m.add_timing("total_seconds", pipe_detail::seconds_since(t0));
  m.write((fs::path(root) / "manifests" / "gen_data.csv").string(), root);
  return m;
}

// Trains one branch on the train split: "prior" fits the unconditional image
// model, "restore" fits the conditional model on clean/degraded pairs.
inline RunManifest cmd_train(const std::string& branch, const RunConfig& cfg) {
  cfg.validate();
  if (branch != "prior" && branch != "restore")
    throw std::invalid_argument("train: unknown branch '" + branch + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const std::string root = cfg.run.out;
  const std::string train_dir = (fs::path(root) / "data" / "train").string();
  const auto rows = pipe_detail::load_split(train_dir);
  if (rows.empty()) throw std::runtime_error("train: train manifest has no rows");

  const TrainSection& sec = branch == "prior" ? cfg.train_prior : cfg.train_restore;
  diff::UNetConfig arch;
  arch.in_channels = cfg.data.channels;
  arch.out_channels = cfg.data.channels;
  arch.widths = sec.widths;
  arch.temb_dim = sec.temb_dim;
  diff::NoiseSchedule sched(pipe_detail::schedule_kind(sec.schedule), sec.T);

  diff::TrainConfig tc;
  tc.steps = sec.steps;
  tc.batch = sec.batch;
  tc.lr = sec.lr;
  tc.weight_decay = sec.weight_decay;
  tc.warmup_frac = sec.warmup_frac;
  tc.seed = Rng::derive(cfg.run.seed, branch == "prior" ? "train-prior" : "train-restore");
  tc.threads = cfg.run.threads;
  tc.log_every = cfg.run.verbose ? sec.log_every : 0;
  tc.loss_csv = (fs::path(root) / "logs" / ("train_" + branch + "_loss.csv")).string();
  tc.sample_every = sec.sample_every;

  const std::string samples_dir = (fs::path(root) / "samples").string();
  std::unique_ptr<diff::EpsNet> model;
  if (branch == "prior") {
    std::vector<ImageSample> clean;
    std::set<std::string> seen;
    for (const auto& r : rows)
      if (seen.insert(r.clean_rel).second)
        clean.push_back(pipe_detail::load_image(train_dir, r.clean_rel));
    const std::vector<int> shape = {cfg.data.channels, cfg.data.image_size, cfg.data.image_size};
    tc.sample_hook = [&cfg, shape, samples_dir](long long step, diff::EpsNet& m) {
      std::vector<Tensorf> tiles;
      for (uint64_t i = 0; i < 3; ++i)
        tiles.push_back(img::to_unit_range(diff::ancestral_sample(
            m, shape, Rng::derive(cfg.run.seed, "sample-prior", 8 * step + i))));
      char name[64];
      std::snprintf(name, sizeof(name), "prior_%06lld.png", step);
      img::write_png((fs::path(samples_dir) / name).string(), pipe_detail::hstack(tiles));
    };
    model = diff::train_prior(clean, arch, std::move(sched), tc);
  } else {
    std::vector<rest::PairedSample> pairs;
    for (const auto& r : rows)
      pairs.emplace_back(pipe_detail::load_image(train_dir, r.clean_rel),
                         pipe_detail::load_image(train_dir, r.degraded_rel, r.seed),
                         util::parse_double(r.cn2), r.bucket);
    const ImageSample first_degraded = pairs.front().degraded;
    const ImageSample first_clean = pairs.front().clean;
    tc.sample_hook = [&cfg, first_degraded, first_clean, samples_dir](long long step,
                                                                      diff::EpsNet& m) {
      const ImageSample restored = rest::restore_one_branch(
          first_degraded, m, Rng::derive(cfg.run.seed, "sample-restore", step));
      char name[64];
      std::snprintf(name, sizeof(name), "restore_%06lld.png", step);
      img::write_png(
          (fs::path(samples_dir) / name).string(),
          pipe_detail::hstack({first_degraded.pixels, restored.pixels, first_clean.pixels}));
    };
    model = rest::train_restoration(pairs, arch, std::move(sched), tc);
  }

  const std::string ckpt_rel = "checkpoints/" + branch + ".ckpt";
  util::make_dirs((fs::path(root) / "checkpoints").string());
  diff::save_model((fs::path(root) / ckpt_rel).string(), *model);

  pipe_detail::freeze_config(cfg, root, "train_" + branch);
  RunManifest m = pipe_detail::start_manifest(cfg, "train-" + branch);
  m.add_input("train_manifest", "data/train/manifest.csv");
  m.add_output("checkpoint", ckpt_rel);
  m.add_output("loss_csv", "logs/train_" + branch + "_loss.csv");
  m.add_output("config", "configs/train_" + branch + ".config");
  const double total = pipe_detail::seconds_since(t0);
  m.add_timing("total_seconds", total);
  m.add_timing("seconds_per_step", total / static_cast<double>(sec.steps));
  m.write((fs::path(root) / "manifests" / ("train_" + branch + ".csv")).string(), root);
  return m;
}

// Restores every eval image with the requested mode and writes the restored
// PNGs plus a per-image quality report. Per-image seeds depend only on the
// global seed and the row index, so both modes see identical substreams.
inline RunManifest cmd_restore(const std::string& mode, const RunConfig& cfg) {
  cfg.validate();
  if (mode != "one_step" && mode != "fused")
    throw std::invalid_argument("restore: unknown mode '" + mode + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const std::string root = cfg.run.out;
  const std::string eval_dir = (fs::path(root) / "data" / "eval").string();
  const auto rows = pipe_detail::load_split(eval_dir);
  if (rows.empty()) throw std::runtime_error("restore: eval manifest has no input rows");

  auto restorer = pipe_detail::load_checkpoint_or_fail(
      (fs::path(root) / "checkpoints" / "restore.ckpt").string(), "train-restore");
  rest::rest_detail::require_conditional(*restorer, cfg.data.channels);
  std::unique_ptr<diff::EpsNet> prior;
  if (mode == "fused") {
    prior = pipe_detail::load_checkpoint_or_fail(
        (fs::path(root) / "checkpoints" / "prior.ckpt").string(), "train-prior");
    const auto hint = prior->input_shape_hint();
    if (hint.size() != 3 || hint[0] != cfg.data.channels)
      throw std::invalid_argument("restore: prior checkpoint expects " +
                                  std::to_string(hint.empty() ? -1 : hint[0]) +
                                  " channels, data has " + std::to_string(cfg.data.channels));
  }

  met::SeverityModel custom;
  const met::SeverityModel& sev = pipe_detail::severity_model_for(cfg, custom);

  const std::string mode_rel = "restored/" + mode;
  util::CsvTable report{{"input", "restored", "cn2", "bucket"}, {}};
  for (const auto& h : met::quality_report_header()) report.header.push_back(h);

  for (size_t idx = 0; idx < rows.size(); ++idx) {
    const auto& r = rows[idx];
    const ImageSample degraded = pipe_detail::load_image(eval_dir, r.degraded_rel, r.seed);
    const ImageSample clean = pipe_detail::load_image(eval_dir, r.clean_rel);
    const uint64_t seed = Rng::derive(cfg.run.seed, "restore", idx);

    ImageSample restored;
    if (mode == "one_step") {
      restored = rest::restore_one_branch(degraded, *restorer, seed);
    } else {
      fusion::FusionConfig fc;
      fc.iterations = cfg.fuse.iterations;
      fc.eta_start = cfg.fuse.eta_start;
      fc.eta_end = cfg.fuse.eta_end;
      fc.lambda_prior = cfg.fuse.lambda_prior;
      fc.lambda_lik = cfg.fuse.lambda_lik;
      fc.t_start_fraction = cfg.fuse.t_start_fraction;
      fc.timestep_policy = cfg.fuse.timestep_policy;
      fc.init_noise = cfg.fuse.init_noise;
      fc.seed = seed;
      if (cfg.run.verbose && idx == 0) {
        fc.verbose = true;
        fc.diagnostics_csv = (fs::path(root) / mode_rel / "diagnostics.csv").string();
      }
      restored = fusion::fuse(degraded, *prior, *restorer, fc);
    }

    const std::string out_rel =
        mode_rel + "/" + fs::path(r.degraded_rel).filename().string();
    img::write_png((fs::path(root) / out_rel).string(), restored.pixels);

    std::vector<std::string> row = {"data/eval/" + r.degraded_rel, out_rel, r.cn2, r.bucket};
    for (const auto& cell : met::quality_report_row(met::assess(restored, &clean, sev)))
      row.push_back(cell);
    report.rows.push_back(std::move(row));
  }

  const std::string report_rel = mode_rel + "/report.csv";
  util::atomic_write((fs::path(root) / report_rel).string(), util::to_csv(report));

  pipe_detail::freeze_config(cfg, root, "restore_" + mode);
  RunManifest m = pipe_detail::start_manifest(cfg, "restore-" + mode);
  m.add_input("eval_manifest", "data/eval/manifest.csv");
  m.add_input("restore_checkpoint", "checkpoints/restore.ckpt");
  if (mode == "fused") m.add_input("prior_checkpoint", "checkpoints/prior.ckpt");
  m.add_output("report", report_rel);
  m.add_output("config", "configs/restore_" + mode + ".config");
  const double total = pipe_detail::seconds_since(t0);
  m.add_timing("total_seconds", total);
  m.add_timing("seconds_per_image", total / static_cast<double>(rows.size()));
  m.write((fs::path(root) / "manifests" / ("restore_" + mode + ".csv")).string(), root);
  return m;
}

// Scores the degraded baseline plus every restored mode found on disk, and
// aggregates PSNR/severity means per turbulence bucket. The summary is
// computed from the parsed detail CSV, so the two tables are consistent by
// construction at the written precision.
inline RunManifest cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::string root = cfg.run.out;
  const std::string eval_dir = (fs::path(root) / "data" / "eval").string();
  const auto rows = pipe_detail::load_split(eval_dir);
  if (rows.empty()) throw std::runtime_error("eval: eval manifest has no input rows");

  std::vector<std::string> methods = {"degraded"};
  for (const std::string mode : {"one_step", "fused"})
    if (fs::exists(fs::path(root) / "restored" / mode)) methods.push_back(mode);
  if (methods.size() == 1)
    throw std::runtime_error("eval: no restored outputs under '" +
                             (fs::path(root) / "restored").string() +
                             "' — run restore first");

  // locate every image up front; a missing restored file aborts with a list
  std::string missing;
  auto image_rel = [&](const std::string& method, const pipe_detail::ManifestRow& r) {
    if (method == "degraded") return "data/eval/" + r.degraded_rel;
    return "restored/" + method + "/" + fs::path(r.degraded_rel).filename().string();
  };
  for (const auto& method : methods)
    for (const auto& r : rows) {
      const std::string rel = image_rel(method, r);
      if (!fs::exists(fs::path(root) / rel)) missing += (missing.empty() ? "" : ", ") + rel;
    }
  if (!missing.empty()) throw std::runtime_error("eval: missing restored files: " + missing);

  met::SeverityModel custom;
  const met::SeverityModel& sev = pipe_detail::severity_model_for(cfg, custom);

  util::CsvTable detail{{"method", "input", "cn2", "bucket", "psnr", "severity"}, {}};
  for (const auto& method : methods)
    for (const auto& r : rows) {
      const std::string rel = image_rel(method, r);
      const ImageSample image = pipe_detail::load_image(root, rel);
      const ImageSample clean = pipe_detail::load_image(eval_dir, r.clean_rel);
      const met::QualityReport q = met::assess(image, &clean, sev);
      detail.rows.push_back({method, rel, r.cn2, r.bucket, util::fmt_g12(*q.psnr_db),
                             util::fmt_g12(q.severity)});
    }
  const std::string detail_text = util::to_csv(detail);
  util::atomic_write((fs::path(root) / "eval" / "detail.csv").string(), detail_text);

  // bucket means recomputed from the formatted rows
  const util::CsvTable parsed = util::parse_csv(detail_text);
  const int c_method = util::csv_col(parsed, "method");
  const int c_bucket = util::csv_col(parsed, "bucket");
  const int c_psnr = util::csv_col(parsed, "psnr");
  const int c_sev = util::csv_col(parsed, "severity");
  const std::vector<std::string> buckets = {"Low", "Medium", "High"};

  util::CsvTable summary;
  summary.header = {"method"};
  for (const auto& b : buckets) {
    summary.header.push_back("psnr_" + b);
    summary.header.push_back("severity_" + b);
  }
  for (const auto& method : methods) {
    std::vector<std::string> row = {method};
    for (const auto& b : buckets) {
      double psnr_sum = 0.0, sev_sum = 0.0;
      int n = 0;
      for (const auto& r : parsed.rows) {
        if (r[c_method] != method || r[c_bucket] != b) continue;
        psnr_sum += util::parse_double(r[c_psnr]);
        sev_sum += util::parse_double(r[c_sev]);
        ++n;
      }
      row.push_back(n ? util::fmt_g12(psnr_sum / n) : "");
      row.push_back(n ? util::fmt_g12(sev_sum / n) : "");
    }
    summary.rows.push_back(std::move(row));
  }
  util::atomic_write((fs::path(root) / "eval" / "summary.csv").string(),
                     util::to_csv(summary));

  pipe_detail::freeze_config(cfg, root, "eval");
  RunManifest m = pipe_detail::start_manifest(cfg, "eval");
  m.add_input("eval_manifest", "data/eval/manifest.csv");
  for (const auto& method : methods)
    if (method != "degraded") m.add_input(method + "_dir", "restored/" + method);
  m.add_output("summary", "eval/summary.csv");
  m.add_output("detail", "eval/detail.csv");
  m.add_output("config", "configs/eval.config");
  m.add_timing("total_seconds", pipe_detail::seconds_since(t0));
  m.write((fs::path(root) / "manifests" / "eval.csv").string(), root);
  return m;
}

}  // namespace astrodiff::pipe
