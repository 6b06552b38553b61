#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "ilam/features.hpp"
#include "ilam/intensity_image.hpp"
#include "support.hpp"

using namespace ilam;

namespace {

// cap 255 makes pixel value == integer intensity, so images can be
// scripted directly through scan intensities
OrganizedScan canvas(int rows, int cols, double background = 0.0) {
  OrganizedScan scan(rows, cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto& p = scan.at(r, c);
      p.x = 5.0 + 0.02 * c;
      p.y = 2.0;
      p.z = 0.05 * r;
      p.intensity = background;
      p.valid = true;
    }
  }
  return scan;
}

IntensityImage image_of(const OrganizedScan& scan) {
  NormalizationParams params;
  params.cap = 255.0;
  return project(scan, params);
}

Descriptor random_descriptor(std::mt19937& rng) {
  Descriptor d;
  for (auto& w : d.words) w = (uint64_t(rng()) << 32) | rng();
  return d;
}

Feature feature_with(const Descriptor& d, int idx) {
  Feature f;
  f.row = 1;
  f.col = idx;
  f.descriptor = d;
  f.point3d = Eigen::Vector3d(idx, 0, 0);
  return f;
}

// 31x31 patch writer centered on (row, col); values must already be
// valid pixel intensities
template <typename F>
void paint_patch(OrganizedScan& scan, int row, int col, F value) {
  for (int dy = -15; dy <= 15; ++dy) {
    for (int dx = -15; dx <= 15; ++dx) {
      scan.at(row + dy, col + dx).intensity = double(value(dy, dx));
    }
  }
}

}  // namespace

TEST_CASE("hamming distance equals the bitwise definition") {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const Descriptor a = random_descriptor(rng);
    const Descriptor b = random_descriptor(rng);
    int expect = 0;
    for (int i = 0; i < 256; ++i) expect += a.bit(i) != b.bit(i) ? 1 : 0;
    CHECK(hamming(a, b) == expect);
  }
  Descriptor z;
  CHECK(hamming(z, z) == 0);
}

TEST_CASE("descriptor hex dump") {
  Descriptor d;
  d.words[3] = 1;
  const std::string hex = to_hex(d);
  REQUIRE(hex.size() == 64);
  CHECK(hex.substr(0, 16) == "0000000000000001");
  CHECK(hex.substr(16) == std::string(48, '0'));
}

TEST_CASE("uniform image has no corners") {
  const OrganizedScan scan = canvas(16, 128, 120.0);
  const auto features = detect(image_of(scan), scan, {});
  CHECK(features.empty());
}

TEST_CASE("an isolated bright pixel is exactly one corner") {
  OrganizedScan scan = canvas(16, 64, 0.0);
  scan.at(8, 32).intensity = 255.0;
  const auto features = detect(image_of(scan), scan, {});
  REQUIRE(features.size() == 1);
  CHECK(features[0].row == 8);
  CHECK(features[0].col == 32);
  CHECK(features[0].response > 0.0);
  // the features carry the 3D point behind the pixel
  CHECK((features[0].point3d - scan.at(8, 32).position()).norm() == 0.0);
}

TEST_CASE("cap and sector quotas bound the selection") {
  // isolated bright dots every 4th row/column: far more corners than cap
  OrganizedScan scan = canvas(16, 1024, 0.0);
  int planted = 0;
  for (int r = 4; r <= 12; r += 4) {
    for (int c = 0; c < 1024; c += 4) {
      scan.at(r, c).intensity = 255.0;
      ++planted;
    }
  }
  REQUIRE(planted >= 500);

  DetectorParams params;
  params.cap = 200;
  const auto features = detect(image_of(scan), scan, params);
  CHECK(features.size() == 200);

  std::array<int, 8> per_sector{};
  for (const auto& f : features) {
    CHECK(f.point3d.allFinite());
    per_sector[size_t(f.col * 8 / 1024)]++;
  }
  for (int count : per_sector) CHECK(count <= 25);  // ceil(200 / 8)

  params.cap = 40;
  CHECK(detect(image_of(scan), scan, params).size() == 40);
}

TEST_CASE("identical patches give identical descriptors") {
  OrganizedScan scan = canvas(33, 512, 0.0);
  std::mt19937 rng(42);
  std::uniform_int_distribution<int> v(0, 255);
  std::vector<int> patch(31 * 31);
  for (auto& x : patch) x = v(rng);
  auto value = [&patch](int dy, int dx) { return patch[size_t(dy + 15) * 31 + (dx + 15)]; };
  paint_patch(scan, 16, 100, value);
  paint_patch(scan, 16, 300, value);

  const IntensityImage img = image_of(scan);
  CHECK(hamming(describe(img, 16, 100), describe(img, 16, 300)) == 0);
}

TEST_CASE("orientation normalization matches a patch to its half-turn copy") {
  OrganizedScan scan = canvas(33, 512, 0.0);
  // dominant gradient keeps the centroid angle mid-bin; the hash term
  // adds texture without moving it much
  auto base = [](int dy, int dx) {
    return std::clamp(128 + 4 * dx + 2 * dy + ((dx * 3 + dy * 7) % 5) - 2, 0, 255);
  };
  auto rotated = [&base](int dy, int dx) { return base(-dy, -dx); };
  paint_patch(scan, 16, 100, base);
  paint_patch(scan, 16, 300, rotated);

  const IntensityImage img = image_of(scan);
  const int bin_a = orientation_bin(img, 16, 100);
  const int bin_b = orientation_bin(img, 16, 300);
  CHECK((bin_a + 6) % 12 == bin_b);
  CHECK(hamming(describe(img, 16, 100), describe(img, 16, 300)) == 0);
}

TEST_CASE("complementing a tie-free patch flips every comparison") {
  // patch values chosen so no comparison pair of the fixed table lands
  // on equal pixels; verified against the frozen table
  OrganizedScan scan = canvas(33, 512, 0.0);
  auto value = [](int dy, int dx) {
    const int idx = (dy + 15) * 33 + (dx + 15);
    return (idx * 37) % 256;
  };
  auto complement = [&value](int dy, int dx) { return 255 - value(dy, dx); };
  paint_patch(scan, 16, 100, value);
  paint_patch(scan, 16, 300, complement);

  const IntensityImage img = image_of(scan);
  const Descriptor a = describe_oriented(img, 16, 100, 0);
  const Descriptor b = describe_oriented(img, 16, 300, 0);
  CHECK(hamming(a, b) == 256);
}

TEST_CASE("matching a feature set against itself is the identity pairing") {
  std::mt19937 rng(43);
  std::vector<Feature> set;
  for (int i = 0; i < 25; ++i) set.push_back(feature_with(random_descriptor(rng), i));

  const auto pairs = match(set, set, 64);
  REQUIRE(pairs.size() == set.size());
  for (const auto& m : pairs) {
    CHECK(m.index_prev == m.index_curr);
    CHECK(m.hamming == 0);
    CHECK(m.score == 1.0);
  }
}

TEST_CASE("single pair arithmetic") {
  Descriptor a;  // all zeros
  Descriptor b;
  for (int i = 0; i < 10; ++i) b.set_bit(i * 7);
  const auto pairs = match({feature_with(a, 0)}, {feature_with(b, 0)}, 30);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].hamming == 10);
  CHECK(pairs[0].score == doctest::Approx(1.0 - 10.0 / 256.0).epsilon(1e-12));
}

TEST_CASE("random descriptor sets do not match under a tight cutoff") {
  std::mt19937 rng(44);
  std::vector<Feature> a, b;
  for (int i = 0; i < 50; ++i) {
    a.push_back(feature_with(random_descriptor(rng), i));
    b.push_back(feature_with(random_descriptor(rng), i));
  }
  // expected distance of random 256-bit strings is 128; 30 is far below
  CHECK(match(a, b, 30).empty());
}

TEST_CASE("matching is symmetric and never repeats an index") {
  std::mt19937 rng(45);
  // b holds noisy copies of most of a (10 flipped bits each) plus
  // strangers; the copies match decisively, the strangers never do
  std::vector<Feature> a, b;
  for (int i = 0; i < 40; ++i) a.push_back(feature_with(random_descriptor(rng), i));
  std::uniform_int_distribution<int> bit(0, 255);
  for (int i = 0; i < 30; ++i) {
    Descriptor noisy = a[size_t(i)].descriptor;
    std::set<int> flips;
    while (flips.size() < 10) flips.insert(bit(rng));
    for (int f : flips) noisy.words[size_t(f) / 64] ^= uint64_t(1) << (size_t(f) % 64);
    b.push_back(feature_with(noisy, i));
  }
  for (int i = 30; i < 35; ++i) b.push_back(feature_with(random_descriptor(rng), i));

  const auto ab = match(a, b, 64);
  const auto ba = match(b, a, 64);
  CHECK(ab.size() >= 25);
  REQUIRE(ab.size() == ba.size());

  std::set<std::pair<int, int>> fwd, rev;
  std::set<int> prev_idx, curr_idx;
  for (const auto& m : ab) {
    fwd.insert({m.index_prev, m.index_curr});
    CHECK(prev_idx.insert(m.index_prev).second);
    CHECK(curr_idx.insert(m.index_curr).second);
    CHECK(m.score == doctest::Approx(1.0 - m.hamming / 256.0).epsilon(1e-12));
    CHECK(m.hamming <= 64);
  }
  for (const auto& m : ba) rev.insert({m.index_curr, m.index_prev});
  CHECK(fwd == rev);
}

TEST_CASE("ratio test discards ambiguous matches") {
  Descriptor d0;  // zeros
  Descriptor close1, close2, far;
  for (int i = 0; i < 10; ++i) close1.set_bit(i);
  for (int i = 0; i < 11; ++i) close2.set_bit(100 + i);
  for (int i = 0; i < 20; ++i) far.set_bit(50 + i);

  // 10 vs 11: ambiguous (10 >= 0.8 * 11)
  CHECK(match({feature_with(d0, 0)}, {feature_with(close1, 0), feature_with(close2, 1)}, 64)
            .empty());

  // 10 vs 20: decisive (10 < 0.8 * 20)
  const auto pairs =
      match({feature_with(d0, 0)}, {feature_with(close1, 0), feature_with(far, 1)}, 64);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].index_curr == 0);
}

TEST_CASE("frames built from scans only carry features with returns") {
  OrganizedScan scan = canvas(32, 256, 0.0);
  std::mt19937 rng(46);
  std::uniform_int_distribution<int> v(0, 255);
  for (auto& p : scan.points) p.intensity = v(rng);
  // punch holes; features must never land on them
  std::uniform_int_distribution<int> pick(0, int(scan.points.size()) - 1);
  for (int i = 0; i < 800; ++i) {
    auto& p = scan.points[size_t(pick(rng))];
    p.valid = false;
    p.x = p.y = p.z = 0.0;
    p.intensity = 0.0;
  }

  Config cfg;
  const IntensityFrame frame = make_frame(scan, cfg);
  CHECK(int(frame.features.size()) <= cfg.feature_cap);
  CHECK_FALSE(frame.features.empty());
  for (const auto& f : frame.features) {
    CHECK(scan.at(f.row, f.col).valid);
    CHECK(f.point3d.allFinite());
    CHECK(f.point3d.norm() > 0.0);
  }
}
