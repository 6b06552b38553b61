#pragma once

#include <filesystem>
#include <string>

namespace ilam {

/// Run configuration. Every field is a tunable with the default given
/// here; load_config overrides from a "key = value" text file.
struct Config {
  // intensity image
  double intensity_cap = 512.0;
  bool row_gain_equalize = false;

  // features
  int fast_threshold = 20;
  int feature_cap = 200;
  int max_hamming = 64;
  double match_ratio = 0.8;

  // odometry
  int min_matches = 8;

  // plane extraction
  int plane_per_sector = 20;
  double ground_voxel = 0.4;
  double height_prior = -0.5;
  int ground_ransac_iters = 100;
  unsigned ransac_seed = 42;

  // map optimization
  int ba_window = 5;
  double huber_delta = 0.1;
  double local_map_radius = 100.0;

  // keyframes
  double kf_dist = 1.0;
  double kf_angle = 0.2;
  int kf_min_matches = 50;

  // loop closure
  int loop_gap = 50;
  double loop_sim_threshold = 0.15;
  int loop_min_inliers = 25;
  double loop_max_residual = 0.3;
  int vocab_branching = 10;
  int vocab_depth = 3;
  std::string vocab_path;

  // ablation: identity-seeded plane-only scan-to-map (no intensity
  // odometry, no BA residuals)
  bool plane_only = false;

  /// Throws ConfigError when a threshold is out of range.
  void validate() const;
};

/// Parses a "key = value" file ('#' starts a comment). Missing keys keep
/// their defaults; unknown keys or unparsable values raise ConfigError
/// naming the key and line.
Config load_config(const std::filesystem::path& path);

}  // namespace ilam
