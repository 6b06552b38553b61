#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/features.hpp"
#include "ilam/geometry.hpp"

namespace ilam {

/// Sparse word-id -> tf-idf weight map, L1-normalized when non-empty.
struct BowVector {
  std::map<int, double> weights;

  double l1_norm() const;
};

/// similarity = 1 - |a - b|_1 / 2; 1 for identical vectors, 0 for
/// disjoint word supports.
double similarity(const BowVector& a, const BowVector& b);

/// Hierarchical k-medians vocabulary over 256-bit descriptors: Hamming
/// metric, bitwise-majority centroids, `branching` children per level,
/// `depth` levels. Leaves are words with dense ids.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Deterministic for a given seed. frame_sizes optionally partitions
  /// the corpus into documents for idf weighting; without it all words
  /// weigh 1. Throws InsufficientCorpus when corpus < branching^depth.
  static Vocabulary train(std::span<const Descriptor> corpus, int branching, int depth,
                          uint32_t seed, std::span<const int> frame_sizes = {});

  int word_count() const { return word_count_; }
  int branching() const { return branching_; }
  int depth() const { return depth_; }
  bool empty() const { return nodes_.empty(); }

  /// Word of one descriptor: depth Hamming-nearest descents.
  int word_of(const Descriptor& d) const;

  /// tf-idf bag of words of a frame's descriptors, L1-normalized.
  BowVector transform(std::span<const Descriptor> descriptors) const;

  /// Binary format: magic "IVOC", u32 version, u32 branching, u32 depth,
  /// u32 node count, nodes (4x u64 centroid, i32 first_child, i32
  /// child_count, i32 word_id), u32 word count, f64 idf per word.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  struct Node {
    Descriptor centroid;
    int first_child = -1;  // children are contiguous
    int child_count = 0;
    int word_id = -1;  // >= 0 for leaves
  };

  std::vector<Node> nodes_;  // nodes_[0] is the root
  std::vector<double> idf_;
  int branching_ = 0;
  int depth_ = 0;
  int word_count_ = 0;
};

struct LoopCandidate {
  int query_id = -1;
  int match_id = -1;
  double similarity = 0.0;
  Se3Pose relative;  // maps query-frame coordinates into match-frame coordinates
  int inlier_count = 0;
  double mean_residual = 0.0;
};

/// Append-only keyframe bag-of-words store with gap-limited retrieval.
class LoopDatabase {
 public:
  void add(int keyframe_id, BowVector bow);
  size_t size() const { return entries_.size(); }

  /// Keyframes with id + gap < current_id scored against the query,
  /// filtered by threshold, best first, at most top_n.
  std::vector<std::pair<int, double>> query(int current_id, const BowVector& bow, int gap,
                                            int top_n, double threshold) const;

 private:
  std::vector<std::pair<int, BowVector>> entries_;
};

/// Geometric verification of a retrieval candidate: descriptor matching
/// plus robust registration. Accepts only if the surviving inlier count
/// and mean residual clear cfg.loop_min_inliers / cfg.loop_max_residual.
std::optional<LoopCandidate> verify_loop(const IntensityFrame& query_frame, int query_id,
                                         const IntensityFrame& candidate_frame, int candidate_id,
                                         double sim, const Config& cfg);

}  // namespace ilam
