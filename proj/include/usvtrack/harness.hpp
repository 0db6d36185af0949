#pragma once

#include <string>
#include <vector>

#include "usvtrack/dataset.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/gan.hpp"
#include "usvtrack/metrics.hpp"
#include "usvtrack/servo.hpp"

namespace usvtrack::harness {

// ---- published-table consistency audit ----

struct AuditRow {
  std::string table;  // "table1" | "table2"
  std::string label;
  double reported_psnr = 0.0;
  double reported_mse = 0.0;
  double computed_psnr = 0.0;  // 10*log10(255^2 / mse)
  bool pass = false;           // |computed - reported| <= 0.01 dB
};

// Recomputes PSNR from the reported MSE for all nine distinct rows of the two
// reference tables and flags rows where the pair is inconsistent.
std::vector<AuditRow> audit_paper_tables();
void write_audit_csv(const std::vector<AuditRow>& rows, const std::string& path);

// ---- evaluations ----

// Test-split PSNR/SSIM/MSE vs clear ground truth for the hazy baseline and
// the dehazed output (identity pass-through when ckpt is null). Writes
// metrics.csv / metrics.json under out_dir.
std::vector<metrics::MetricsReport> eval_dehaze(const data::DatasetManifest& manifest,
                                                gan::GanCheckpoint* ckpt,
                                                const std::string& out_dir);

struct DetEvalRow {
  std::string input;  // clear | hazy | dehazed
  double success_rate = 0.0;
  int n_frames = 0;
  int false_positives = 0;
};

// Success = top detection matches a truth box with IoU >= 0.5 at conf >= 0.5.
// Evaluated on the test split for clear, hazy and (with a checkpoint) dehazed
// inputs; per-input detection dumps are written next to the report.
std::vector<DetEvalRow> eval_detector(const data::DatasetManifest& manifest,
                                      det::DetectorCheckpoint& detector,
                                      gan::GanCheckpoint* dehaze_ckpt,
                                      const std::string& out_dir);
void write_det_eval_json(const std::vector<DetEvalRow>& rows, const std::string& path);

// ---- tracking summary ----

struct TrackSummary {
  int ticks = 0;
  std::string stop_reason;
  double peak_abs_ex = 0.0;          // over ticks with a detection
  double max_abs_ex_last50 = 0.0;    // over the final 50 ticks
  bool ex_defined_last50 = false;    // every one of the final 50 ticks saw the target
};

TrackSummary summarize_episode(const servo::EpisodeLog& log);
void write_track_summary(const TrackSummary& s, const std::string& path);

// Merges metrics.json files from run directories into one CSV; duplicate
// labels get deterministic numeric suffixes.
void report(const std::vector<std::string>& run_dirs, const std::string& out_csv);

}  // namespace usvtrack::harness
