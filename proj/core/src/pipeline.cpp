#include "ilam/pipeline.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <utility>

#include "ilam/errors.hpp"
#include "ilam/features.hpp"
#include "ilam/ikd_tree.hpp"
#include "ilam/loop_closure.hpp"
#include "ilam/map_optimization.hpp"
#include "ilam/odometry.hpp"
#include "ilam/plane_extraction.hpp"
#include "ilam/pose_graph.hpp"

namespace ilam {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool pose_finite(const Se3Pose& p) {
  return p.translation().allFinite() && p.rotation().coeffs().allFinite();
}

/// Blocking bounded FIFO. close() releases both sides; push after close
/// drops the element so a failed consumer cannot deadlock its producer.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t cap) : cap_(cap) {}

  void push(T v) {
    std::unique_lock lock(mutex_);
    room_.wait(lock, [&] { return closed_ || items_.size() < cap_; });
    if (closed_) return;
    items_.push_back(std::move(v));
    data_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    data_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    room_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    data_.notify_all();
    room_.notify_all();
  }

 private:
  size_t cap_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable data_, room_;
};

/// Loop-closure correction published by the pose-graph context and
/// consumed by the mapping context at the start of its next scan.
/// Feeds forward only: in-flight frames are not re-processed.
struct CorrectionCell {
  std::mutex mutex;
  int epoch = 0;
  Se3Pose delta;                   // re-anchors the mapping pose chain
  std::vector<Se3Pose> kf_poses;   // corrected graph poses, index = keyframe id
};

struct FrontendOut {
  int index = 0;
  double timestamp = 0.0;
  OrganizedScan scan;
  IntensityFrame frame;
  Se3Pose relative;  // pose of this scan expressed in the previous one
  bool odo_fallback = false;
  int matched = 0;
};

struct KeyframeMsg {
  int kf_id = 0;
  int scan_index = 0;
  double timestamp = 0.0;
  Se3Pose pose;
  IntensityFrame frame;  // retained for loop verification
};

class FrontendStage {
 public:
  explicit FrontendStage(const Config& cfg) : cfg_(cfg), odometry_(cfg) {}

  FrontendOut step(int index, OrganizedScan scan) {
    const auto t0 = Clock::now();
    FrontendOut out;
    out.index = index;
    out.timestamp = scan.timestamp;
    out.frame = make_frame(scan, cfg_);

    if (index > 0 && !cfg_.plane_only) {
      const OdometryEstimate est = odometry_.advance(prev_, out.frame);
      out.relative = est.relative;
      out.odo_fallback = est.low_confidence;
      out.matched = est.inlier_count;
      if (!pose_finite(out.relative)) {
        out.relative = Se3Pose::identity();
        out.odo_fallback = true;
      }
      if (out.odo_fallback) fallback_scans.push_back(index);
    } else {
      // Ablation and bootstrap: identity motion, keyframing by
      // distance/angle only.
      out.matched = cfg_.kf_min_matches;
    }

    odo_pose_ = index == 0 ? Se3Pose::identity() : compose(odo_pose_, out.relative);
    odometry_out.push_back(TrajectoryRecord{out.timestamp, odo_pose_});

    prev_ = out.frame;
    out.scan = std::move(scan);
    timing.add(ms_since(t0));
    return out;
  }

  StageTiming timing;
  std::vector<TrajectoryRecord> odometry_out;
  std::vector<int> fallback_scans;

 private:
  Config cfg_;
  Odometry odometry_;
  IntensityFrame prev_;
  Se3Pose odo_pose_;
};

class MappingStage {
 public:
  explicit MappingStage(const Config& cfg) : cfg_(cfg), map_(0.05) {}

  std::optional<KeyframeMsg> step(FrontendOut fo, CorrectionCell& cell) {
    const auto t0 = Clock::now();
    apply_pending_correction(cell);

    const Se3Pose predict =
        fo.index == 0 ? Se3Pose::identity() : compose(base_pose_, fo.relative);

    // Plane points for scan-to-map: ground inliers (voxel-thinned) plus
    // per-sector smooth points with the ground cells masked out.
    std::vector<PlanePoint> planes;
    std::span<const int> ground_cells;
    std::optional<GroundSegmentation> ground;
    try {
      ground = segment_ground(fo.scan, cfg_.height_prior, cfg_.ground_ransac_iters,
                              cfg_.ransac_seed);
      ground_cells = ground->inlier_cells;
    } catch (const NoGround& e) {
      ground_failure_scans.push_back(fo.index);
      std::clog << "[ilam] scan " << fo.index << ": " << e.what() << "\n";
    }
    planes = extract_general_planes(fo.scan, cfg_.plane_per_sector, ground_cells);
    if (ground) {
      const auto thinned = voxel_downsample(ground->inliers, cfg_.ground_voxel);
      planes.insert(planes.end(), thinned.begin(), thinned.end());
    }

    Se3Pose pose = predict;
    if (fo.index == 0) {
      std::vector<Eigen::Vector3d> pts;
      pts.reserve(planes.size());
      for (const auto& p : planes) pts.push_back(p.position);
      map_.insert(pts);
    } else {
      try {
        static const std::vector<Feature> kNoFeatures;
        const auto& ba_features = cfg_.plane_only ? kNoFeatures : fo.frame.features;
        const MapOptimizeResult result =
            optimize(predict, ba_features, window_, map_, planes, cfg_);
        pose = result.pose;
        if (result.fell_back) fallback_scans.push_back(fo.index);
      } catch (const Error& e) {
        pose = predict;
        fallback_scans.push_back(fo.index);
        std::clog << "[ilam] scan " << fo.index << ": map optimization failed: " << e.what()
                  << "\n";
      }
    }
    if (!pose_finite(pose)) {
      pose = pose_finite(predict) ? predict : base_pose_;
      if (fallback_scans.empty() || fallback_scans.back() != fo.index) {
        fallback_scans.push_back(fo.index);
      }
    }

    base_pose_ = pose;
    window_.push_back(WindowFrame{pose, fo.frame.features, fo.timestamp});
    if (static_cast<int>(window_.size()) > cfg_.ba_window) window_.erase(window_.begin());
    map_.remove_beyond(pose.translation(), cfg_.local_map_radius);

    std::optional<KeyframeMsg> msg;
    const bool is_kf =
        fo.index == 0 || maybe_keyframe(pose, last_kf_pose_, fo.matched, cfg_);
    if (is_kf) {
      const int kf_id = next_kf_id_++;
      last_kf_pose_ = pose;
      anchor_id_ = kf_id;
      anchor_pose_ = pose;
      keyframe_scans.push_back(fo.index);
      kf_planes_.push_back(std::move(planes));
      msg = KeyframeMsg{kf_id, fo.index, fo.timestamp, pose, std::move(fo.frame)};
    }
    anchors_.push_back(AnchorRef{anchor_id_, fo.timestamp,
                                 compose(inverse(anchor_pose_), pose)});

    timing.add(ms_since(t0));
    return msg;
  }

  /// Final per-scan trajectory: anchor keyframes moved to their final
  /// graph poses, local offsets preserved.
  std::vector<TrajectoryRecord> final_trajectory(std::span<const Se3Pose> kf_poses) const {
    std::vector<TrajectoryRecord> out;
    out.reserve(anchors_.size());
    for (const auto& a : anchors_) {
      out.push_back(TrajectoryRecord{a.timestamp, compose(kf_poses[a.kf_id], a.rel)});
    }
    return out;
  }

  std::vector<Eigen::Vector3d> map_points() const { return map_.live_points(); }

  StageTiming timing;
  std::vector<int> keyframe_scans;
  std::vector<int> fallback_scans;
  std::vector<int> ground_failure_scans;

 private:
  struct AnchorRef {
    int kf_id = 0;
    double timestamp = 0.0;
    Se3Pose rel;  // pose expressed in the anchor keyframe
  };

  void apply_pending_correction(CorrectionCell& cell) {
    Se3Pose delta;
    std::vector<Se3Pose> kf_poses;
    {
      std::lock_guard lock(cell.mutex);
      if (cell.epoch == seen_epoch_) return;
      seen_epoch_ = cell.epoch;
      delta = cell.delta;
      kf_poses = cell.kf_poses;
    }
    base_pose_ = compose(delta, base_pose_);
    for (auto& w : window_) w.pose = compose(delta, w.pose);
    if (anchor_id_ >= 0 && anchor_id_ < static_cast<int>(kf_poses.size())) {
      anchor_pose_ = kf_poses[anchor_id_];
      last_kf_pose_ = kf_poses[anchor_id_];
    }
    // The map is rebuilt from keyframe plane points at their corrected
    // poses; map points are never warped in place.
    map_.clear();
    std::vector<Eigen::Vector3d> pts;
    for (size_t id = 0; id < kf_planes_.size() && id < kf_poses.size(); ++id) {
      const Se3Pose& kp = kf_poses[id];
      if ((kp.translation() - base_pose_.translation()).norm() > cfg_.local_map_radius) {
        continue;
      }
      for (const auto& p : kf_planes_[id]) {
        pts.push_back(transform_point(kp, p.position));
      }
    }
    map_.insert(pts);
  }

  Config cfg_;
  IkdTree map_;
  std::vector<WindowFrame> window_;
  Se3Pose base_pose_;
  Se3Pose last_kf_pose_;
  Se3Pose anchor_pose_;
  int anchor_id_ = -1;
  int next_kf_id_ = 0;
  int seen_epoch_ = 0;
  std::vector<std::vector<PlanePoint>> kf_planes_;  // sensor frame, index = keyframe id
  std::vector<AnchorRef> anchors_;
};

class GraphStage {
 public:
  explicit GraphStage(const Config& cfg) : cfg_(cfg) {
    if (!cfg.vocab_path.empty()) {
      vocab_ = Vocabulary::load(cfg.vocab_path);
    } else {
      std::clog << "[ilam] no vocabulary configured; loop closure disabled\n";
    }
  }

  bool loop_closure_enabled() const { return vocab_.has_value(); }

  void step(KeyframeMsg msg, CorrectionCell& cell) {
    const auto t0 = Clock::now();
    const int id = graph_.add_vertex(msg.pose);
    if (id != msg.kf_id) throw Error("pipeline: keyframe id out of sync with pose graph");
    kf_frames_.push_back(std::move(msg.frame));
    kf_scans_.push_back(msg.scan_index);
    kf_times_.push_back(msg.timestamp);

    if (vocab_) {
      std::vector<Descriptor> descs;
      descs.reserve(kf_frames_[id].features.size());
      for (const auto& f : kf_frames_[id].features) descs.push_back(f.descriptor);
      BowVector bow = vocab_->transform(descs);

      const auto candidates =
          database_.query(id, bow, cfg_.loop_gap, 1, cfg_.loop_sim_threshold);
      for (const auto& [cand_id, sim] : candidates) {
        const auto verified =
            verify_loop(kf_frames_[id], id, kf_frames_[cand_id], cand_id, sim, cfg_);
        if (!verified) continue;
        const Se3Pose delta =
            graph_.on_loop(*verified, Eigen::Matrix<double, 6, 6>::Identity());
        loops.push_back(LoopRecord{id, cand_id, kf_scans_[id], kf_scans_[cand_id], sim,
                                   verified->inlier_count});
        std::lock_guard lock(cell.mutex);
        cell.delta = delta;
        cell.kf_poses = graph_.poses();
        ++cell.epoch;
        break;
      }
      database_.add(id, std::move(bow));
    }
    timing.add(ms_since(t0));
  }

  std::vector<TrajectoryRecord> keyframe_trajectory() const {
    std::vector<TrajectoryRecord> out;
    out.reserve(kf_times_.size());
    for (size_t i = 0; i < kf_times_.size(); ++i) {
      out.push_back(TrajectoryRecord{kf_times_[i], graph_.poses()[i]});
    }
    return out;
  }

  const std::vector<Se3Pose>& poses() const { return graph_.poses(); }

  StageTiming timing;
  std::vector<LoopRecord> loops;

 private:
  Config cfg_;
  std::optional<Vocabulary> vocab_;
  LoopDatabase database_;
  PoseGraph graph_;
  std::vector<IntensityFrame> kf_frames_;
  std::vector<int> kf_scans_;
  std::vector<double> kf_times_;
};

RunResult assemble(FrontendStage& frontend, MappingStage& mapping, GraphStage& graph,
                   int scans) {
  RunResult result;
  result.summary.scans = scans;
  result.summary.keyframes = static_cast<int>(graph.poses().size());
  result.summary.loops_accepted = static_cast<int>(graph.loops.size());
  result.summary.loop_closure_enabled = graph.loop_closure_enabled();
  result.summary.odometry_fallback_scans = std::move(frontend.fallback_scans);
  result.summary.mapping_fallback_scans = std::move(mapping.fallback_scans);
  result.summary.ground_failure_scans = std::move(mapping.ground_failure_scans);
  result.summary.frontend = frontend.timing;
  result.summary.mapping = mapping.timing;
  result.summary.loop_graph = graph.timing;

  result.odometry = std::move(frontend.odometry_out);
  result.final_trajectory = mapping.final_trajectory(graph.poses());
  result.keyframe_trajectory = graph.keyframe_trajectory();
  result.keyframe_scans = std::move(mapping.keyframe_scans);
  result.loops = std::move(graph.loops);
  result.map_points = mapping.map_points();
  return result;
}

RunResult run_serial(SequenceReader& reader, const Config& cfg) {
  FrontendStage frontend(cfg);
  MappingStage mapping(cfg);
  GraphStage graph(cfg);
  CorrectionCell cell;

  int index = 0;
  while (auto scan = reader.next()) {
    auto fo = frontend.step(index++, std::move(*scan));
    auto kf = mapping.step(std::move(fo), cell);
    if (kf) graph.step(std::move(*kf), cell);
  }
  return assemble(frontend, mapping, graph, index);
}

RunResult run_parallel(SequenceReader& reader, const Config& cfg) {
  FrontendStage frontend(cfg);
  MappingStage mapping(cfg);
  GraphStage graph(cfg);  // loads the vocabulary up front; throws here, not in a thread
  CorrectionCell cell;

  BoundedQueue<FrontendOut> frames(4);
  BoundedQueue<KeyframeMsg> keyframes(8);
  std::exception_ptr errors[3] = {};
  int index = 0;

  std::thread odo_thread([&] {
    try {
      while (auto scan = reader.next()) {
        frames.push(frontend.step(index++, std::move(*scan)));
      }
    } catch (...) {
      errors[0] = std::current_exception();
    }
    frames.close();
  });

  std::thread map_thread([&] {
    try {
      while (auto fo = frames.pop()) {
        if (auto kf = mapping.step(std::move(*fo), cell)) {
          keyframes.push(std::move(*kf));
        }
      }
    } catch (...) {
      errors[1] = std::current_exception();
      frames.close();  // unblock the producer
    }
    keyframes.close();
  });

  std::thread graph_thread([&] {
    try {
      while (auto kf = keyframes.pop()) {
        graph.step(std::move(*kf), cell);
      }
    } catch (...) {
      errors[2] = std::current_exception();
      keyframes.close();
    }
  });

  odo_thread.join();
  map_thread.join();
  graph_thread.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return assemble(frontend, mapping, graph, index);
}

}  // namespace

RunResult run_pipeline(SequenceReader& reader, const Config& cfg, PipelineMode mode) {
  cfg.validate();
  if (mode == PipelineMode::kParallel) return run_parallel(reader, cfg);
  return run_serial(reader, cfg);
}

RunResult run_directory(const std::filesystem::path& scans_dir, const Config& cfg,
                        PipelineMode mode) {
  SequenceReader reader(scans_dir);
  if (reader.size() == 0) {
    throw InvalidInput("no scan files in " + scans_dir.string());
  }
  return run_pipeline(reader, cfg, mode);
}

std::string summary_text(const RunSummary& s) {
  std::ostringstream os;
  os << "scans            " << s.scans << "\n";
  os << "keyframes        " << s.keyframes << "\n";
  os << "loop_closure     " << (s.loop_closure_enabled ? "enabled" : "disabled") << "\n";
  os << "loops_accepted   " << s.loops_accepted << "\n";

  const auto list = [&os](const char* label, const std::vector<int>& scans) {
    os << label << " " << scans.size();
    if (!scans.empty()) {
      os << " (scans";
      for (int idx : scans) os << " " << idx;
      os << ")";
    }
    os << "\n";
  };
  list("odometry_fallbacks", s.odometry_fallback_scans);
  list("mapping_fallbacks ", s.mapping_fallback_scans);
  list("ground_failures   ", s.ground_failure_scans);

  os << std::fixed << std::setprecision(3);
  os << "stage        mean_ms      max_ms\n";
  const auto row = [&os](const char* name, const StageTiming& t) {
    os << std::left << std::setw(12) << name << std::right << std::setw(8) << t.mean_ms()
       << "    " << std::setw(8) << t.max_ms << "\n";
  };
  row("frontend", s.frontend);
  row("mapping", s.mapping);
  row("loop_graph", s.loop_graph);
  os << "mean_total_per_scan_ms " << s.mean_total_ms() << "\n";
  return os.str();
}

void write_run_outputs(const RunResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_trajectory(result.odometry, out_dir / "odometry.txt");
  write_trajectory(result.keyframe_trajectory, out_dir / "keyframes.txt");
  write_trajectory(result.final_trajectory, out_dir / "trajectory.txt");

  std::ofstream map_os(out_dir / "map.xyz");
  if (!map_os) throw IoError("cannot open " + (out_dir / "map.xyz").string());
  map_os << std::setprecision(9);
  for (const auto& p : result.map_points) {
    map_os << p.x() << " " << p.y() << " " << p.z() << "\n";
  }

  std::ofstream sum_os(out_dir / "summary.txt");
  if (!sum_os) throw IoError("cannot open " + (out_dir / "summary.txt").string());
  sum_os << summary_text(result.summary);
}

}  // namespace ilam
