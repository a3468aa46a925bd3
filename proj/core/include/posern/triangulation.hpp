#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "posern/geometry.hpp"

namespace posern {

struct TriangulationConfig {
    double huber_delta = 10.0;   // residual threshold in weighted pixels
    int max_iterations = 50;
    double tolerance = 1e-6;     // step-norm convergence threshold in mm
    int min_cameras = 2;
};

struct JointObservation {
    int camera = 0;
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    double weight = 1.0;
};

struct TriangulationResult {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    double cost = 0.0;
};

/// Huber loss: r^2/2 for r <= delta, otherwise delta * (r - delta/2).
double huber(double r, double delta);

/// d/dr of huber(r, delta).
double huber_deriv(double r, double delta);

/// Linear least-squares initializer: homogeneous solution of the stacked
/// cross-product constraints, each observation's rows scaled by its weight so a
/// zero-weight view drops out of the system. Throws DegenerateGeometry when the
/// design matrix is rank deficient.
Eigen::Vector3d dlt_triangulate(std::span<const JointObservation> obs,
                                std::span<const CameraParams> cams);

/// Gauss-Newton with iteratively reweighted Huber weights and step halving,
/// initialized from dlt_triangulate. Minimizes
///   sum_c huber(w_c * |project(X, cam_c) - uv_c|, delta).
/// The returned cost never exceeds the cost at the initialization.
TriangulationResult triangulate_joint(std::span<const JointObservation> obs,
                                      std::span<const CameraParams> cams,
                                      const TriangulationConfig& cfg);

/// Per-joint robust triangulation over a multi-view frame. Joints visible in
/// fewer than cfg.min_cameras views, and joints whose solve fails, come back
/// with present = false.
Pose3D triangulate_pose(const std::vector<Pose2D>& views,
                        const std::vector<CameraParams>& cams,
                        const TriangulationConfig& cfg);

} // namespace posern
