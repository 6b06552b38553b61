#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/intensity_image.hpp"
#include "ilam/scan.hpp"

namespace ilam {

/// 256-bit binary descriptor.
struct Descriptor {
  std::array<uint64_t, 4> words{};

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(int i) { words[i >> 6] |= uint64_t{1} << (i & 63); }
  bool operator==(const Descriptor&) const = default;
};

inline int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

std::string to_hex(const Descriptor& d);

struct Feature {
  int row = 0;
  int col = 0;
  double response = 0.0;
  Descriptor descriptor;
  Eigen::Vector3d point3d = Eigen::Vector3d::Zero();
};

struct MatchPair {
  int index_prev = 0;
  int index_curr = 0;
  int hamming = 0;
  double score = 0.0;  // 1 - hamming/256
};

struct DetectorParams {
  int threshold = 20;  // segment-test contrast, gray levels
  int cap = 200;
};

/// Segment-test corner detection on the intensity image: a 16-pixel
/// circle of radius 3 around each candidate must contain a contiguous
/// arc of >= 9 pixels all brighter or all darker than the center by the
/// threshold. Columns wrap (the image is a 360 degree panorama), rows
/// clamp. Survivors of 3x3 non-maximum suppression are bucketed into 8
/// column sectors (quota ceil(cap/8) each) and truncated to cap by
/// descending response. Pixels without a 3D return never produce
/// features; returned features carry their back-projected point and
/// descriptor.
std::vector<Feature> detect(const IntensityImage& img, const OrganizedScan& scan,
                            const DetectorParams& params);

/// 256 fixed pseudo-random pixel-pair comparisons in the 31x31 patch
/// around the pixel, pair coordinates rotated by the patch's
/// intensity-centroid orientation quantized to 12 bins.
Descriptor describe(const IntensityImage& img, int row, int col);

/// Orientation bin (0..11) from the patch intensity centroid.
int orientation_bin(const IntensityImage& img, int row, int col);

/// Comparison set evaluated at a fixed orientation bin; describe() is
/// describe_oriented at orientation_bin(). Exposed for tests and tools.
Descriptor describe_oriented(const IntensityImage& img, int row, int col, int bin);

/// Mutual-nearest-neighbor matching with ratio test (best < ratio *
/// second-best on both sides) and a Hamming cutoff. Every feature index
/// appears in at most one pair; score = 1 - hamming/256.
std::vector<MatchPair> match(const std::vector<Feature>& prev, const std::vector<Feature>& curr,
                             int max_hamming, double ratio = 0.8);

/// Per-scan bundle handed through the pipeline: the image, its features,
/// and the scan timestamp.
struct IntensityFrame {
  double timestamp = 0.0;
  IntensityImage image;
  std::vector<Feature> features;
};

IntensityFrame make_frame(const OrganizedScan& scan, const Config& cfg);

}  // namespace ilam
