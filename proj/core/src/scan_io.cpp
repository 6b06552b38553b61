#include "ilam/scan_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ilam/errors.hpp"

namespace ilam {

namespace {

constexpr char kScanMagic[4] = {'O', 'S', 'C', 'N'};
constexpr uint32_t kScanVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError("scan file truncated");
  return value;
}

}  // namespace

OrganizedScan read_scan(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open scan file: " + path.string());

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kScanMagic, 4) != 0) {
    throw FormatError("not a scan file (bad magic): " + path.string());
  }
  const auto version = get<uint32_t>(is);
  if (version != kScanVersion) {
    throw FormatError("unsupported scan version " + std::to_string(version));
  }
  const auto rows = get<uint32_t>(is);
  const auto cols = get<uint32_t>(is);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 65536) {
    throw FormatError("implausible scan shape " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  const double timestamp = get<double>(is);

  OrganizedScan scan(static_cast<int>(rows), static_cast<int>(cols), timestamp);
  for (auto& p : scan.points) {
    const float x = get<float>(is);
    const float y = get<float>(is);
    const float z = get<float>(is);
    const float intensity = get<float>(is);
    const uint8_t valid = get<uint8_t>(is);
    if (valid) {
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
          !std::isfinite(intensity) || intensity < 0.0f) {
        throw FormatError("invalid cell payload in " + path.string());
      }
      p = ScanPoint{x, y, z, intensity, true};
      if (p.range() == 0.0) p = ScanPoint{};  // zero-range returns are invalid
    } else {
      p = ScanPoint{};
    }
  }
  return scan;
}

void write_scan(const OrganizedScan& scan, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());

  os.write(kScanMagic, 4);
  put<uint32_t>(os, kScanVersion);
  put<uint32_t>(os, static_cast<uint32_t>(scan.rows));
  put<uint32_t>(os, static_cast<uint32_t>(scan.cols));
  put<double>(os, scan.timestamp);
  for (const auto& p : scan.points) {
    put<float>(os, p.valid ? static_cast<float>(p.x) : 0.0f);
    put<float>(os, p.valid ? static_cast<float>(p.y) : 0.0f);
    put<float>(os, p.valid ? static_cast<float>(p.z) : 0.0f);
    put<float>(os, p.valid ? static_cast<float>(p.intensity) : 0.0f);
    put<uint8_t>(os, p.valid ? 1 : 0);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

void write_trajectory(const std::vector<TrajectoryRecord>& records,
                      const std::filesystem::path& path) {
  for (size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp <= records[i - 1].timestamp) {
      throw InvalidInput("trajectory records out of timestamp order");
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  char line[256];
  for (const auto& rec : records) {
    const auto& q = rec.pose.rotation();
    const auto& t = rec.pose.translation();
    std::snprintf(line, sizeof(line), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", rec.timestamp,
                  t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    os << line;
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open trajectory file: " + path.string());
  std::vector<TrajectoryRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw FormatError("bad trajectory line " + std::to_string(lineno) + " in " + path.string());
    }
    records.push_back({ts, Se3Pose(Eigen::Quaterniond(qw, qx, qy, qz), {tx, ty, tz})});
  }
  return records;
}

OrganizedScan import_ascii_cloud(const std::filesystem::path& path, int rows, int cols,
                                 double timestamp) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open cloud file: " + path.string());
  OrganizedScan scan(rows, cols, timestamp);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double x, y, z, intensity;
    int ring;
    if (!(ss >> x >> y >> z >> intensity >> ring)) {
      throw FormatError("bad cloud line " + std::to_string(lineno) + " in " + path.string());
    }
    if (ring < 0 || ring >= rows) continue;
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) continue;
    if (x == 0.0 && y == 0.0 && z == 0.0) continue;
    const double az = std::atan2(y, x);  // (-pi, pi]
    int col = static_cast<int>(std::floor((az + M_PI) / (2.0 * M_PI) * cols));
    col = std::clamp(col, 0, cols - 1);
    auto& cell = scan.at(ring, col);
    if (!cell.valid) cell = ScanPoint{x, y, z, std::max(0.0, intensity), true};
  }
  return scan;
}

std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".oscn") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

SequenceReader::SequenceReader(const std::filesystem::path& dir)
    : SequenceReader(list_scan_files(dir)) {}

SequenceReader::SequenceReader(std::vector<std::filesystem::path> files)
    : files_(std::move(files)) {
  worker_ = std::thread([this] { fetch_loop(); });
}

SequenceReader::~SequenceReader() {
  {
    std::lock_guard lock(mutex_);
    done_ = true;
    slot_.reset();
  }
  slot_taken_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void SequenceReader::fetch_loop() {
  for (const auto& file : files_) {
    OrganizedScan scan;
    try {
      scan = read_scan(file);
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      slot_filled_.notify_all();
      return;
    }
    std::unique_lock lock(mutex_);
    slot_taken_.wait(lock, [this] { return !slot_.has_value() || done_; });
    if (done_) return;
    slot_ = std::move(scan);
    slot_filled_.notify_all();
  }
  std::lock_guard lock(mutex_);
  done_ = true;
  slot_filled_.notify_all();
}

std::optional<OrganizedScan> SequenceReader::next() {
  std::unique_lock lock(mutex_);
  slot_filled_.wait(lock, [this] { return slot_.has_value() || done_ || error_; });
  if (error_) {
    auto err = error_;
    error_ = nullptr;
    done_ = true;
    std::rethrow_exception(err);
  }
  if (!slot_.has_value()) return std::nullopt;
  std::optional<OrganizedScan> out = std::move(slot_);
  slot_.reset();
  ++produced_;
  slot_taken_.notify_all();
  return out;
}

}  // namespace ilam
