#pragma once

#include <span>

#include "ilam/scan_io.hpp"

namespace ilam {

/// Translational absolute pose error after rigid alignment, meters.
struct ApeStats {
  double mean = 0.0;
  double median = 0.0;
  double rmse = 0.0;
  double max = 0.0;
  std::size_t pairs = 0;
};

/// Associates estimate and ground-truth records by nearest timestamp
/// (within max_dt seconds), rigidly aligns the estimate onto the ground
/// truth with uniform weights, and reports translational error
/// statistics. Both inputs must be sorted by timestamp.
///
/// Throws NoAssociations when no timestamp pair falls within max_dt,
/// DegenerateConfiguration when fewer than 3 pairs associate.
ApeStats evaluate_ape(std::span<const TrajectoryRecord> estimate,
                      std::span<const TrajectoryRecord> ground_truth, double max_dt = 0.05);

}  // namespace ilam
