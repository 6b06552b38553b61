#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/scan_io.hpp"

namespace ilam {

enum class PipelineMode { kSerial, kParallel };

/// Per-stage wall-clock accumulator, milliseconds.
struct StageTiming {
  double total_ms = 0.0;
  double max_ms = 0.0;
  int count = 0;

  void add(double ms) {
    total_ms += ms;
    if (ms > max_ms) max_ms = ms;
    ++count;
  }
  double mean_ms() const { return count > 0 ? total_ms / count : 0.0; }
};

/// One accepted loop closure.
struct LoopRecord {
  int query_kf = -1;
  int match_kf = -1;
  int query_scan = -1;
  int match_scan = -1;
  double similarity = 0.0;
  int inlier_count = 0;
};

struct RunSummary {
  int scans = 0;
  int keyframes = 0;
  int loops_accepted = 0;
  bool loop_closure_enabled = false;

  // scan indices that fell back (previous relative reused / optimization
  // had nothing to work with / ground fit failed)
  std::vector<int> odometry_fallback_scans;
  std::vector<int> mapping_fallback_scans;
  std::vector<int> ground_failure_scans;

  StageTiming frontend;    // image + features + registration
  StageTiming mapping;     // plane extraction + joint optimization + map update
  StageTiming loop_graph;  // retrieval + verification + graph optimization

  /// Mean per-scan cost with the keyframe stage amortized over all scans.
  double mean_total_ms() const {
    if (scans == 0) return 0.0;
    return (frontend.total_ms + mapping.total_ms + loop_graph.total_ms) / scans;
  }
};

struct RunResult {
  RunSummary summary;
  std::vector<TrajectoryRecord> odometry;             // dead-reckoned, one per scan
  std::vector<TrajectoryRecord> final_trajectory;     // post-loop, one per scan
  std::vector<TrajectoryRecord> keyframe_trajectory;  // final graph poses
  std::vector<int> keyframe_scans;                    // scan index per keyframe
  std::vector<LoopRecord> loops;
  std::vector<Eigen::Vector3d> map_points;
};

/// Runs intensity odometry -> map optimization -> pose graph over a scan
/// sequence. Serial mode executes the three stages inline per scan and
/// is bit-deterministic; parallel mode runs them in three threads
/// connected by bounded ordered queues, with the loop-closure correction
/// feeding forward only. Per-scan failures are absorbed by fallbacks and
/// flagged in the summary; emitted poses are always finite.
RunResult run_pipeline(SequenceReader& reader, const Config& cfg,
                       PipelineMode mode = PipelineMode::kSerial);

/// run_pipeline over every scan file in a directory (lexicographic
/// order). Throws InvalidInput when the directory holds no scans.
RunResult run_directory(const std::filesystem::path& scans_dir, const Config& cfg,
                        PipelineMode mode = PipelineMode::kSerial);

/// Writes odometry.txt, keyframes.txt, trajectory.txt, map.xyz and
/// summary.txt into out_dir (created if needed).
void write_run_outputs(const RunResult& result, const std::filesystem::path& out_dir);

std::string summary_text(const RunSummary& summary);

}  // namespace ilam
