#pragma once

#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ilam/geometry.hpp"
#include "ilam/scan.hpp"

namespace ilam {

struct TrajectoryRecord {
  double timestamp = 0.0;
  Se3Pose pose;
};

/// Binary scan format: little-endian, magic "OSCN", u32 version=1,
/// u32 rows, u32 cols, f64 timestamp, then rows*cols cells of
/// f32 x, f32 y, f32 z, f32 intensity, u8 valid.
OrganizedScan read_scan(const std::filesystem::path& path);
void write_scan(const OrganizedScan& scan, const std::filesystem::path& path);

/// One line per record: "timestamp tx ty tz qx qy qz qw", timestamp with
/// 9 fixed decimals, pose values with 9 significant digits.
void write_trajectory(const std::vector<TrajectoryRecord>& records,
                      const std::filesystem::path& path);
std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

/// ASCII "x y z intensity ring" importer used by the scan-convert
/// subcommand. Azimuth columns are assigned from atan2(y, x).
OrganizedScan import_ascii_cloud(const std::filesystem::path& path, int rows, int cols,
                                 double timestamp);

/// Lists *.oscn files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir);

/// Reads a scan directory in order while prefetching the next file on a
/// background thread. Scans come out strictly in file (= timestamp) order.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& dir);
  explicit SequenceReader(std::vector<std::filesystem::path> files);
  ~SequenceReader();

  SequenceReader(const SequenceReader&) = delete;
  SequenceReader& operator=(const SequenceReader&) = delete;

  /// Next scan, or nullopt at end of sequence.
  std::optional<OrganizedScan> next();

  size_t size() const { return files_.size(); }

 private:
  void fetch_loop();

  std::vector<std::filesystem::path> files_;
  std::mutex mutex_;
  std::condition_variable slot_filled_;
  std::condition_variable slot_taken_;
  std::optional<OrganizedScan> slot_;
  std::exception_ptr error_;
  size_t produced_ = 0;
  bool done_ = false;
  std::thread worker_;
};

}  // namespace ilam
