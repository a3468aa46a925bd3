#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "posern/errors.hpp"

namespace posern {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

/// Calibrated pinhole camera stored as a single 3x4 projection matrix
/// (homogeneous world millimeters -> homogeneous pixels).
struct CameraParams {
    int id = 0;
    Matrix34d P = Matrix34d::Zero();
    int width = 0;
    int height = 0;

    /// P = K [R | t].
    static CameraParams compose(const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
                                const Eigen::Vector3d& t, int id, int width, int height);

    double min_side() const { return static_cast<double>(width < height ? width : height); }

    /// Unit vector along the viewing direction in world coordinates.
    Eigen::Vector3d optical_axis() const;

    /// Throws FormatError unless P has rank 3 and the image dimensions are positive.
    void validate() const;
};

/// Per-frame 3D joint positions in world millimeters.
struct Pose3D {
    std::vector<Eigen::Vector3d> joints;
    std::vector<std::uint8_t> present;

    Pose3D() = default;
    explicit Pose3D(std::size_t num_joints)
        : joints(num_joints, Eigen::Vector3d::Zero()), present(num_joints, 0) {}

    std::size_t size() const { return joints.size(); }
};

/// Per-camera 2D joint observations with confidences.
struct Pose2D {
    int camera = 0;
    std::vector<Eigen::Vector2d> joints;
    std::vector<double> confidence;
    std::vector<std::uint8_t> visible;

    Pose2D() = default;
    explicit Pose2D(std::size_t num_joints, int camera = 0)
        : camera(camera),
          joints(num_joints, Eigen::Vector2d::Zero()),
          confidence(num_joints, 0.0),
          visible(num_joints, 0) {}

    std::size_t size() const { return joints.size(); }
};

/// Joint layout: names, the three anchor joints used for normalization, and the
/// bone tree as (parent, child) index pairs.
struct Skeleton {
    std::vector<std::string> joint_names;
    int pelvis = 0;
    int spine_top = 0;
    int spine_bottom = 0;
    std::vector<std::pair<int, int>> bones;

    int num_joints() const { return static_cast<int>(joint_names.size()); }

    /// Parent joint per joint (-1 for the root of the bone tree).
    std::vector<int> parents() const;

    /// Index of a named joint, or -1.
    int index_of(const std::string& name) const;

    /// Throws FormatError unless the anchors are valid distinct indices and the
    /// bones form a connected acyclic graph over all joints.
    void validate() const;
};

/// Perspective projection of a world point. Throws DegenerateProjection when the
/// homogeneous depth magnitude is below 1e-12.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraParams& cam);

/// Translate so the pelvis sits exactly at the origin. Throws MissingPelvis.
Pose3D center_on_pelvis_3d(const Pose3D& pose, const Skeleton& skel);

/// Shift every visible joint by -pelvis. Throws MissingPelvis.
Pose2D center_on_pelvis_2d(const Pose2D& pose, const Skeleton& skel);

/// Divide every visible joint by min(width, height).
Pose2D normalize_2d(const Pose2D& pose, const CameraParams& cam);

/// Divide every present joint by spine_length / 3. Throws DegenerateSpine when the
/// spine joints are missing or the spine is shorter than 1e-6 mm.
Pose3D normalize_3d(const Pose3D& pose, const Skeleton& skel);

} // namespace posern
