#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <vector>

#include "ilam/config.hpp"
#include "ilam/features.hpp"
#include "ilam/geometry.hpp"
#include "ilam/ikd_tree.hpp"
#include "ilam/plane_extraction.hpp"

namespace ilam {

/// One frame of the sliding window. Poses are map-frame estimates from
/// the optimization step that admitted the frame; they stay fixed while
/// the current pose is refined.
struct WindowFrame {
  Se3Pose pose;
  std::vector<Feature> features;
  double timestamp = 0.0;
};

/// Scan point tied to its three nearest map points. The normal is the
/// normalized anchor cross product, cached by the association builder.
struct PlaneAssociation {
  Eigen::Vector3d source = Eigen::Vector3d::Zero();  // scan frame
  std::array<Eigen::Vector3d, 3> anchors;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

/// Feature point of the current scan paired with a feature point of one
/// window frame through descriptor matching.
struct BaCorrespondence {
  int window_index = 0;
  Eigen::Vector3d current_point = Eigen::Vector3d::Zero();  // current sensor frame
  Eigen::Vector3d window_point = Eigen::Vector3d::Zero();   // window sensor frame
};

struct MapOptimizeResult {
  Se3Pose pose;
  int ba_correspondences = 0;  // surviving the distance gate, final iteration
  int plane_associations = 0;  // from the final iteration
  int iterations = 0;
  double final_cost = 0.0;
  bool fell_back = false;  // no residuals at all; initial pose returned
};

/// Signed point-to-plane distance (pose*source - anchor0) . normal with
/// the normal recomputed from the anchors. Throws DegeneratePlane when
/// the anchors are collinear (cross product norm <= 1e-6).
double plane_residual(const PlaneAssociation& assoc, const Se3Pose& pose);

PlaneAssociation make_plane_association(const Eigen::Vector3d& source, const Eigen::Vector3d& a0,
                                        const Eigen::Vector3d& a1, const Eigen::Vector3d& a2);

/// One 3-vector per correspondence: current_pose*current_point -
/// window_pose*window_point; window poses are constants.
std::vector<Eigen::Vector3d> ba_residual(std::span<const WindowFrame> window,
                                         const Se3Pose& current_pose,
                                         std::span<const BaCorrespondence> correspondences);

/// Descriptor-matches the current features against every window frame.
std::vector<BaCorrespondence> match_window(std::span<const WindowFrame> window,
                                           const std::vector<Feature>& current_features,
                                           int max_hamming, double match_ratio);

/// Joint refinement of the current pose: Levenberg-Marquardt over its
/// 6-dim tangent with cost = sum |ba residual|^2 + sum huber(plane
/// residual). Plane associations (3-NN with anchor-distance and local
/// planarity gates) and the BA distance gate (0.3 m, rejects aliased
/// descriptor matches) are rebuilt every iteration. Afterwards the
/// plane points transformed by the result are inserted into the map.
MapOptimizeResult optimize(const Se3Pose& init, const std::vector<Feature>& current_features,
                           std::span<const WindowFrame> window, IkdTree& map,
                           std::span<const PlanePoint> plane_points, const Config& cfg);

}  // namespace ilam
