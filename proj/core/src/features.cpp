#include "ilam/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

// FAST 16-pixel circle of radius 3, clockwise from 12 o'clock: (dc, dr).
constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},   {3, 1},
                                {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2},  {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

constexpr int kArcMin = 9;
constexpr int kPatchRadius = 15;
constexpr int kPairRadius = 13;
constexpr int kOrientationBins = 12;
constexpr int kColumnSectors = 8;

inline uint8_t sample(const IntensityImage& img, int r, int c) {
  r = std::clamp(r, 0, img.rows - 1);
  c %= img.cols;
  if (c < 0) c += img.cols;
  return img.pixels[static_cast<size_t>(r) * img.cols + c];
}

// Comparison-pair table, fixed for the lifetime of the format: 256 pairs
// drawn uniformly from the disc of radius 13 with a pinned seed.
struct PairTable {
  std::array<std::array<int8_t, 4>, 256> pairs;  // ax, ay, bx, by

  PairTable() {
    std::mt19937 rng(0x5EED);
    auto draw = [&rng]() {
      std::uniform_int_distribution<int> dist(-kPairRadius, kPairRadius);
      for (;;) {
        const int x = dist(rng);
        const int y = dist(rng);
        if (x * x + y * y <= kPairRadius * kPairRadius) return std::pair<int, int>{x, y};
      }
    };
    for (auto& p : pairs) {
      auto [ax, ay] = draw();
      auto [bx, by] = draw();
      while (ax == bx && ay == by) std::tie(bx, by) = draw();
      p = {static_cast<int8_t>(ax), static_cast<int8_t>(ay), static_cast<int8_t>(bx),
           static_cast<int8_t>(by)};
    }
  }
};

const PairTable& pair_table() {
  static const PairTable table;
  return table;
}

struct RawCorner {
  int row;
  int col;
  double response;
};

// Sum of contrast beyond the threshold over the best qualifying arc;
// 0 when no arc of >= 9 passes.
double segment_test(const IntensityImage& img, int r, int c, int threshold) {
  const int center = sample(img, r, c);
  int diff[16];
  for (int i = 0; i < 16; ++i) {
    diff[i] = static_cast<int>(sample(img, r + kCircle[i][1], c + kCircle[i][0])) - center;
  }

  double best = 0.0;
  for (int sign = 0; sign < 2; ++sign) {
    int run = 0;
    double run_sum = 0.0;
    double best_run = 0.0;
    // doubled loop handles circular wrap of the arc
    for (int i = 0; i < 32; ++i) {
      const int d = sign == 0 ? diff[i & 15] : -diff[i & 15];
      if (d >= threshold) {
        ++run;
        run_sum += d - threshold;
        if (run >= kArcMin && run_sum > best_run) best_run = run_sum;
        if (run >= 16) break;  // full circle
      } else {
        run = 0;
        run_sum = 0.0;
      }
    }
    best = std::max(best, best_run);
  }
  return best;
}

}  // namespace

std::string to_hex(const Descriptor& d) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (int w = 3; w >= 0; --w) {
    for (int nibble = 15; nibble >= 0; --nibble) {
      out.push_back(digits[(d.words[w] >> (nibble * 4)) & 0xF]);
    }
  }
  return out;
}

int orientation_bin(const IntensityImage& img, int row, int col) {
  double m10 = 0.0, m01 = 0.0;
  for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
    for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
      const double v = sample(img, row + dy, col + dx);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  if (m10 == 0.0 && m01 == 0.0) return 0;
  const double theta = std::atan2(m01, m10);  // (-pi, pi]
  int bin = static_cast<int>(std::lround(theta * kOrientationBins / (2.0 * M_PI)));
  return (bin % kOrientationBins + kOrientationBins) % kOrientationBins;
}

Descriptor describe_oriented(const IntensityImage& img, int row, int col, int bin) {
  const double angle = 2.0 * M_PI * bin / kOrientationBins;
  const double cs = std::cos(angle);
  const double sn = std::sin(angle);
  auto rotate = [cs, sn](int x, int y) {
    return std::pair<int, int>{static_cast<int>(std::lround(cs * x - sn * y)),
                               static_cast<int>(std::lround(sn * x + cs * y))};
  };

  Descriptor d;
  const auto& pairs = pair_table().pairs;
  for (int i = 0; i < 256; ++i) {
    const auto [ax, ay] = rotate(pairs[i][0], pairs[i][1]);
    const auto [bx, by] = rotate(pairs[i][2], pairs[i][3]);
    const uint8_t va = sample(img, row + ay, col + ax);
    const uint8_t vb = sample(img, row + by, col + bx);
    if (va < vb) d.set_bit(i);
  }
  return d;
}

Descriptor describe(const IntensityImage& img, int row, int col) {
  return describe_oriented(img, row, col, orientation_bin(img, row, col));
}

std::vector<Feature> detect(const IntensityImage& img, const OrganizedScan& scan,
                            const DetectorParams& params) {
  if (params.cap <= 0) return {};

  std::vector<double> response(img.pixels.size(), 0.0);
  std::vector<RawCorner> corners;
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      if (img.cell_index(r, c) < 0) continue;  // no 3D return behind this pixel
      const double s = segment_test(img, r, c, params.threshold);
      if (s > 0.0) response[static_cast<size_t>(r) * img.cols + c] = s;
    }
  }

  // 3x3 non-maximum suppression; ties keep the earliest pixel in raster
  // order. Rows outside the image are not compared (no vertical clamp
  // here, a clamped neighbor would be the pixel itself).
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      const size_t i = static_cast<size_t>(r) * img.cols + c;
      const double s = response[i];
      if (s <= 0.0) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr) {
        const int nr = r + dr;
        if (nr < 0 || nr >= img.rows) continue;
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nc = (c + dc + img.cols) % img.cols;
          const size_t ni = static_cast<size_t>(nr) * img.cols + nc;
          const double ns = response[ni];
          if (ns > s || (ns == s && ni < i)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({r, c, s});
    }
  }

  // bucket into 8 column sectors, quota per sector, then global cap
  auto better = [](const RawCorner& a, const RawCorner& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  };
  const int quota = (params.cap + kColumnSectors - 1) / kColumnSectors;
  std::vector<std::vector<RawCorner>> sectors(kColumnSectors);
  for (const auto& corner : corners) {
    sectors[static_cast<size_t>(corner.col) * kColumnSectors / img.cols].push_back(corner);
  }
  std::vector<RawCorner> selected;
  for (auto& sector : sectors) {
    std::sort(sector.begin(), sector.end(), better);
    if (static_cast<int>(sector.size()) > quota) sector.resize(quota);
    selected.insert(selected.end(), sector.begin(), sector.end());
  }
  std::sort(selected.begin(), selected.end(), better);
  if (static_cast<int>(selected.size()) > params.cap) selected.resize(params.cap);

  std::vector<Feature> features;
  features.reserve(selected.size());
  for (const auto& corner : selected) {
    Feature f;
    f.row = corner.row;
    f.col = corner.col;
    f.response = corner.response;
    f.descriptor = describe(img, corner.row, corner.col);
    f.point3d = scan.points[static_cast<size_t>(img.cell_index(corner.row, corner.col))].position();
    features.push_back(std::move(f));
  }
  return features;
}

std::vector<MatchPair> match(const std::vector<Feature>& prev, const std::vector<Feature>& curr,
                             int max_hamming, double ratio) {
  const int np = static_cast<int>(prev.size());
  const int nc = static_cast<int>(curr.size());
  if (np == 0 || nc == 0) return {};

  struct Best {
    int idx = -1;
    int dist = 257;
    int second = 257;
  };
  std::vector<Best> best_for_prev(np), best_for_curr(nc);

  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < nc; ++j) {
      const int h = hamming(prev[i].descriptor, curr[j].descriptor);
      auto& bp = best_for_prev[i];
      if (h < bp.dist) {
        bp.second = bp.dist;
        bp.dist = h;
        bp.idx = j;
      } else if (h < bp.second) {
        bp.second = h;
      }
      auto& bc = best_for_curr[j];
      if (h < bc.dist) {
        bc.second = bc.dist;
        bc.dist = h;
        bc.idx = i;
      } else if (h < bc.second) {
        bc.second = h;
      }
    }
  }

  std::vector<MatchPair> pairs;
  for (int i = 0; i < np; ++i) {
    const auto& bp = best_for_prev[i];
    if (bp.idx < 0 || bp.dist > max_hamming) continue;
    const auto& bc = best_for_curr[bp.idx];
    if (bc.idx != i) continue;  // not mutual
    if (static_cast<double>(bp.dist) >= ratio * bp.second) continue;
    if (static_cast<double>(bc.dist) >= ratio * bc.second) continue;
    pairs.push_back({i, bp.idx, bp.dist, 1.0 - bp.dist / 256.0});
  }
  return pairs;
}

IntensityFrame make_frame(const OrganizedScan& scan, const Config& cfg) {
  IntensityFrame frame;
  frame.timestamp = scan.timestamp;
  frame.image = project(scan, {cfg.intensity_cap, cfg.row_gain_equalize});
  frame.features =
      detect(frame.image, scan, {cfg.fast_threshold, cfg.feature_cap});
  return frame;
}

}  // namespace ilam
