#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "usvtrack/config.hpp"
#include "usvtrack/dataset.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/gan.hpp"
#include "usvtrack/harness.hpp"
#include "usvtrack/nn.hpp"
#include "usvtrack/servo.hpp"
#include "usvtrack/sim.hpp"

namespace fs = std::filesystem;
using namespace usvtrack;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

cfg::Config load_config(const GlobalArgs& g) {
  return g.config_path.empty() ? cfg::Config{} : cfg::Config::load(g.config_path);
}

std::uint64_t pick_seed(const GlobalArgs& g, const cfg::Config& c) {
  return g.seed_set ? g.seed : c.get_u64("seed", 1);
}

std::string pick_out(const GlobalArgs& g, const cfg::Config& c, const std::string& def) {
  const std::string dir = !g.out_dir.empty() ? g.out_dir : c.get_str("out_dir", def);
  fs::create_directories(dir);
  return dir;
}

int cmd_gen_dataset(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "n_frames", "image_size", "weather", "class_id",
                   "bearing_deg", "approach_start_m", "approach_end_m", "tick_hz",
                   "sample_fps", "n_trajectories"});
  data::GenDatasetConfig dc;
  dc.seed = pick_seed(g, c);
  dc.out_dir = pick_out(g, c, "out/dataset");
  dc.n_frames = c.get_int("n_frames", dc.n_frames);
  dc.image_size = c.get_int("image_size", dc.image_size);
  dc.weather = haze::preset_from_string(c.get_str("weather", "fog_heavy"));
  dc.class_id = c.get_int("class_id", dc.class_id);
  dc.bearing_deg = c.get_double("bearing_deg", dc.bearing_deg);
  dc.approach_start_m = c.get_double("approach_start_m", dc.approach_start_m);
  dc.approach_end_m = c.get_double("approach_end_m", dc.approach_end_m);
  dc.tick_hz = c.get_int("tick_hz", dc.tick_hz);
  dc.sample_fps = c.get_int("sample_fps", dc.sample_fps);
  dc.n_trajectories = c.get_int("n_trajectories", dc.n_trajectories);

  const data::DatasetManifest m = data::gen_dataset(dc);
  cfg::write_resolved_config(
      dc.out_dir + "/resolved_config.txt",
      {{"command", "gen-dataset"},
       {"seed", std::to_string(dc.seed)},
       {"n_frames", std::to_string(dc.n_frames)},
       {"image_size", std::to_string(dc.image_size)},
       {"weather", haze::preset_to_string(dc.weather)},
       {"class_id", std::to_string(dc.class_id)},
       {"bearing_deg", cfg::format_double(dc.bearing_deg)},
       {"approach_start_m", cfg::format_double(dc.approach_start_m)},
       {"approach_end_m", cfg::format_double(dc.approach_end_m)},
       {"tick_hz", std::to_string(dc.tick_hz)},
       {"sample_fps", std::to_string(dc.sample_fps)},
       {"n_trajectories", std::to_string(dc.n_trajectories)}});
  std::printf("dataset: %d frames (%d train / %d test) under %s\n",
              static_cast<int>(m.frames.size()), m.count(true), m.count(false),
              dc.out_dir.c_str());
  return 0;
}

int cmd_train_dehaze(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "manifest", "epochs", "batch_size", "lr_g", "lr_d",
                   "w_l1", "w_mse", "w_bce", "base_width"});
  const std::string manifest_path = c.get_str("manifest", "out/dataset/manifest.json");
  const std::string out = pick_out(g, c, "out/dehaze");

  gan::TrainConfig tc;
  tc.seed = pick_seed(g, c);
  tc.epochs = c.get_int("epochs", tc.epochs);
  tc.batch_size = c.get_int("batch_size", tc.batch_size);
  tc.lr_g = c.get_double("lr_g", tc.lr_g);
  tc.lr_d = c.get_double("lr_d", tc.lr_d);
  tc.weights.w_l1 = c.get_double("w_l1", tc.weights.w_l1);
  tc.weights.w_mse = c.get_double("w_mse", tc.weights.w_mse);
  tc.weights.w_bce = c.get_double("w_bce", tc.weights.w_bce);
  tc.base_width = c.get_int("base_width", tc.base_width);

  const data::DatasetManifest m = data::load_manifest(manifest_path);
  gan::GanCheckpoint ck = gan::train(m, tc);
  gan::save_gan_checkpoint(ck, out + "/dehaze.ckpt");
  gan::write_loss_csv(ck.history, out + "/gan_loss.csv");
  cfg::write_resolved_config(out + "/resolved_config.txt",
                             {{"command", "train-dehaze"},
                              {"manifest", manifest_path},
                              {"seed", std::to_string(tc.seed)},
                              {"epochs", std::to_string(tc.epochs)},
                              {"batch_size", std::to_string(tc.batch_size)},
                              {"lr_g", cfg::format_double(tc.lr_g)},
                              {"lr_d", cfg::format_double(tc.lr_d)},
                              {"w_l1", cfg::format_double(tc.weights.w_l1)},
                              {"w_mse", cfg::format_double(tc.weights.w_mse)},
                              {"w_bce", cfg::format_double(tc.weights.w_bce)},
                              {"base_width", std::to_string(tc.base_width)}});
  std::printf("trained dehaze GAN: generator %zu params, discriminator %zu params\n",
              nn::param_count(ck.gen.params()), nn::param_count(ck.disc.params()));
  std::printf("epoch 1 gen_loss %.6f -> epoch %d gen_loss %.6f; checkpoint %s\n",
              ck.history.front().gen_loss, ck.history.back().epoch,
              ck.history.back().gen_loss, (out + "/dehaze.ckpt").c_str());
  return 0;
}

int cmd_train_detector(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "manifest", "epochs", "batch_size", "lr", "base_width",
                   "anchors_per_cell", "num_classes", "lambda_noobj", "train_on_hazy"});
  const std::string manifest_path = c.get_str("manifest", "out/dataset/manifest.json");
  const std::string out = pick_out(g, c, "out/detector");

  det::DetTrainConfig tc;
  tc.seed = pick_seed(g, c);
  tc.epochs = c.get_int("epochs", tc.epochs);
  tc.batch_size = c.get_int("batch_size", tc.batch_size);
  tc.lr = c.get_double("lr", tc.lr);
  tc.base_width = c.get_int("base_width", tc.base_width);
  tc.anchors_per_cell = c.get_int("anchors_per_cell", tc.anchors_per_cell);
  tc.num_classes = c.get_int("num_classes", tc.num_classes);
  tc.lambda_noobj = c.get_double("lambda_noobj", tc.lambda_noobj);
  tc.train_on_hazy = c.get_bool("train_on_hazy", tc.train_on_hazy);

  const data::DatasetManifest m = data::load_manifest(manifest_path);
  det::DetectorCheckpoint ck = det::train_detector(m, tc);
  det::save_detector_checkpoint(ck, out + "/detector.ckpt");
  det::write_det_loss_csv(ck.history, out + "/detector_loss.csv");
  cfg::write_resolved_config(out + "/resolved_config.txt",
                             {{"command", "train-detector"},
                              {"manifest", manifest_path},
                              {"seed", std::to_string(tc.seed)},
                              {"epochs", std::to_string(tc.epochs)},
                              {"batch_size", std::to_string(tc.batch_size)},
                              {"lr", cfg::format_double(tc.lr)},
                              {"base_width", std::to_string(tc.base_width)},
                              {"anchors_per_cell", std::to_string(tc.anchors_per_cell)},
                              {"num_classes", std::to_string(tc.num_classes)},
                              {"lambda_noobj", cfg::format_double(tc.lambda_noobj)},
                              {"train_on_hazy", tc.train_on_hazy ? "true" : "false"}});
  std::printf("trained detector: %zu params, epoch 1 loss %.6f -> epoch %d loss %.6f\n",
              nn::param_count(ck.net.params()), ck.history.front().loss,
              ck.history.back().epoch, ck.history.back().loss);
  return 0;
}

int cmd_eval_dehaze(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "manifest", "checkpoint"});
  const std::string manifest_path = c.get_str("manifest", "out/dataset/manifest.json");
  const std::string ckpt_path = c.get_str("checkpoint", "");
  const std::string out = pick_out(g, c, "out/eval_dehaze");

  const data::DatasetManifest m = data::load_manifest(manifest_path);
  gan::GanCheckpoint ck;
  gan::GanCheckpoint* ckp = nullptr;
  if (!ckpt_path.empty()) {
    ck = gan::load_gan_checkpoint(ckpt_path);
    ckp = &ck;
  }
  const auto rows = harness::eval_dehaze(m, ckp, out);
  for (const auto& r : rows)
    std::printf("%-8s psnr %6.2f dB  ssim %5.3f  mse %8.2f  (n=%d)\n", r.label.c_str(),
                r.psnr_db, r.ssim, r.mse, r.n_images);
  return 0;
}

int cmd_eval_detector(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "manifest", "detector", "dehaze"});
  const std::string manifest_path = c.get_str("manifest", "out/dataset/manifest.json");
  const std::string det_path = c.get_str("detector", "out/detector/detector.ckpt");
  const std::string dehaze_path = c.get_str("dehaze", "");
  const std::string out = pick_out(g, c, "out/eval_detector");

  const data::DatasetManifest m = data::load_manifest(manifest_path);
  det::DetectorCheckpoint dk = det::load_detector_checkpoint(det_path);
  gan::GanCheckpoint gk;
  gan::GanCheckpoint* gkp = nullptr;
  if (!dehaze_path.empty()) {
    gk = gan::load_gan_checkpoint(dehaze_path);
    gkp = &gk;
  }
  const auto rows = harness::eval_detector(m, dk, gkp, out);
  for (const auto& r : rows)
    std::printf("%-8s success %5.1f%%  (n=%d, false positives %d)\n", r.input.c_str(),
                100.0 * r.success_rate, r.n_frames, r.false_positives);
  return 0;
}

int cmd_track(const GlobalArgs& g) {
  const cfg::Config c = load_config(g);
  c.require_known({"seed", "out_dir", "detector", "dehaze", "use_dehaze", "target_range_m",
                   "bearing_deg", "class_id", "weather", "image_size", "kp", "ki", "kd",
                   "cruise_speed", "deadband_px", "proximity_height_frac", "max_ticks",
                   "lost_patience", "search_omega", "dt", "dump_frames"});
  const std::string out = pick_out(g, c, "out/track");

  sim::ScenarioConfig sc;
  sc.seed = pick_seed(g, c);
  sc.target_range_m = c.get_double("target_range_m", sc.target_range_m);
  sc.bearing_deg = c.get_double("bearing_deg", sc.bearing_deg);
  sc.class_id = c.get_int("class_id", sc.class_id);
  sc.weather = haze::preset_from_string(c.get_str("weather", "fog_heavy"));
  sc.image_size = c.get_int("image_size", 128);
  const sim::Scenario scenario = sim::make_scenario(sc);

  servo::EpisodeConfig ec;
  ec.gains.kp = c.get_double("kp", ec.gains.kp);
  ec.gains.ki = c.get_double("ki", ec.gains.ki);
  ec.gains.kd = c.get_double("kd", ec.gains.kd);
  ec.cruise_speed = c.get_double("cruise_speed", ec.cruise_speed);
  ec.deadband_px = c.get_double("deadband_px", ec.deadband_px);
  ec.stop.proximity_height_frac =
      c.get_double("proximity_height_frac", ec.stop.proximity_height_frac);
  ec.stop.max_ticks = c.get_int("max_ticks", ec.stop.max_ticks);
  ec.stop.lost_patience = c.get_int("lost_patience", ec.stop.lost_patience);
  ec.search_omega = c.get_double("search_omega", ec.search_omega);
  ec.dt = c.get_double("dt", ec.dt);
  ec.use_dehaze = c.get_bool("use_dehaze", true);
  if (c.get_bool("dump_frames", false)) ec.dump_frames_dir = out + "/frames";

  det::DetectorCheckpoint dk =
      det::load_detector_checkpoint(c.get_str("detector", "out/detector/detector.ckpt"));
  gan::GanCheckpoint gk;
  gan::GanCheckpoint* gkp = nullptr;
  const std::string dehaze_path = c.get_str("dehaze", "");
  if (!dehaze_path.empty()) {
    gk = gan::load_gan_checkpoint(dehaze_path);
    gkp = &gk;
  }

  const servo::EpisodeLog log = servo::run_episode(scenario, gkp, dk, ec, sc.seed);
  servo::write_episode_csv(log, out + "/episode.csv");
  const harness::TrackSummary s = harness::summarize_episode(log);
  harness::write_track_summary(s, out + "/summary.txt");
  std::printf("episode: ticks=%d stop=%s peak|ex|=%.2f px last50 max|ex|=%.2f px\n", s.ticks,
              s.stop_reason.c_str(), s.peak_abs_ex, s.max_abs_ex_last50);
  return 0;
}

int cmd_report(const GlobalArgs& g, const std::vector<std::string>& run_dirs) {
  const std::string out = g.out_dir.empty() ? "out/report" : g.out_dir;
  fs::create_directories(out);
  harness::report(run_dirs, out + "/report.csv");
  std::printf("report written to %s/report.csv\n", out.c_str());
  return 0;
}

int cmd_audit_tables(const GlobalArgs& g) {
  const std::string out = g.out_dir.empty() ? "out/audit" : g.out_dir;
  fs::create_directories(out);
  const auto rows = harness::audit_paper_tables();
  harness::write_audit_csv(rows, out + "/audit.csv");
  int inconsistent = 0;
  for (const auto& r : rows) {
    std::printf("%s %-13s reported %5.2f dB, recomputed %5.2f dB from mse %7.2f -> %s\n",
                r.table.c_str(), r.label.c_str(), r.reported_psnr, r.computed_psnr,
                r.reported_mse, r.pass ? "consistent" : "INCONSISTENT");
    inconsistent += r.pass ? 0 : 1;
  }
  std::printf("%d of %zu rows consistent at +-0.01 dB\n",
              static_cast<int>(rows.size()) - inconsistent, rows.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale USV target tracking pipeline: simulation, haze synthesis, "
               "GAN dehazing, grid-anchor detection and visual-servo control"};
  app.require_subcommand(1);
  app.fallthrough(true);  // global flags may follow the subcommand

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key = value config file")->expected(1);
  app.add_option("--out", g.out_dir, "output run directory")->expected(1);
  auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");

  auto* gen = app.add_subcommand("gen-dataset", "simulate an approach and write paired frames");
  auto* tdh = app.add_subcommand("train-dehaze", "train the dehazing GAN on a dataset");
  auto* tde = app.add_subcommand("train-detector", "train the grid-anchor detector");
  auto* edh = app.add_subcommand("eval-dehaze", "PSNR/SSIM/MSE of hazy vs dehazed test frames");
  auto* ede = app.add_subcommand("eval-detector", "detection success on clear/hazy/dehazed");
  auto* trk = app.add_subcommand("track", "run a closed-loop tracking episode");
  auto* rep = app.add_subcommand("report", "merge metrics.json files from run dirs");
  auto* aud = app.add_subcommand("audit-tables", "recompute PSNR from MSE for reference tables");

  std::vector<std::string> run_dirs;
  rep->add_option("dirs", run_dirs, "run directories containing metrics.json");

  try {
    app.parse(argc, argv);
    g.seed_set = seed_opt->count() > 0;
    if (gen->parsed()) return cmd_gen_dataset(g);
    if (tdh->parsed()) return cmd_train_dehaze(g);
    if (tde->parsed()) return cmd_train_detector(g);
    if (edh->parsed()) return cmd_eval_dehaze(g);
    if (ede->parsed()) return cmd_eval_detector(g);
    if (trk->parsed()) return cmd_track(g);
    if (rep->parsed()) return cmd_report(g, run_dirs);
    if (aud->parsed()) return cmd_audit_tables(g);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
