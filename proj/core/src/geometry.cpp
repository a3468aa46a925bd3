#include "posern/geometry.hpp"

#include <cmath>
#include <queue>

namespace posern {

CameraParams CameraParams::compose(const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
                                   const Eigen::Vector3d& t, int id, int width, int height) {
    CameraParams cam;
    cam.id = id;
    cam.P.leftCols<3>() = K * R;
    cam.P.col(3) = K * t;
    cam.width = width;
    cam.height = height;
    return cam;
}

Eigen::Vector3d CameraParams::optical_axis() const {
    const Eigen::Matrix3d M = P.leftCols<3>();
    Eigen::Vector3d axis = M.row(2).transpose();
    if (M.determinant() < 0.0) {
        axis = -axis;
    }
    const double n = axis.norm();
    if (n == 0.0) {
        throw FormatError("camera projection matrix has zero third row");
    }
    return axis / n;
}

void CameraParams::validate() const {
    if (width <= 0 || height <= 0) {
        throw FormatError("camera " + std::to_string(id) + ": image dimensions must be positive");
    }
    Eigen::JacobiSVD<Matrix34d> svd(P);
    const auto& s = svd.singularValues();
    if (!(s(2) > 1e-12 * s(0)) || s(0) == 0.0) {
        throw FormatError("camera " + std::to_string(id) + ": projection matrix is rank deficient");
    }
}

std::vector<int> Skeleton::parents() const {
    std::vector<int> parent(joint_names.size(), -1);
    for (const auto& [p, c] : bones) {
        if (c >= 0 && c < num_joints()) {
            parent[static_cast<std::size_t>(c)] = p;
        }
    }
    return parent;
}

int Skeleton::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < joint_names.size(); ++i) {
        if (joint_names[i] == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void Skeleton::validate() const {
    const int n = num_joints();
    if (n < 3) {
        throw FormatError("skeleton needs at least 3 joints");
    }
    auto in_range = [n](int j) { return j >= 0 && j < n; };
    if (!in_range(pelvis) || !in_range(spine_top) || !in_range(spine_bottom)) {
        throw FormatError("skeleton anchor joint index out of range");
    }
    if (pelvis == spine_top || pelvis == spine_bottom || spine_top == spine_bottom) {
        throw FormatError("pelvis, spine_top and spine_bottom must be distinct");
    }
    if (static_cast<int>(bones.size()) != n - 1) {
        throw FormatError("skeleton bones must form a spanning tree (expected " +
                          std::to_string(n - 1) + " bones, got " + std::to_string(bones.size()) + ")");
    }
    // Connectivity over the undirected bone graph; |E| = |V|-1 + connected => acyclic.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [p, c] : bones) {
        if (!in_range(p) || !in_range(c) || p == c) {
            throw FormatError("skeleton bone references invalid joint index");
        }
        adj[static_cast<std::size_t>(p)].push_back(c);
        adj[static_cast<std::size_t>(c)].push_back(p);
    }
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
    std::queue<int> q;
    q.push(pelvis);
    seen[static_cast<std::size_t>(pelvis)] = 1;
    int reached = 0;
    while (!q.empty()) {
        const int j = q.front();
        q.pop();
        ++reached;
        for (int k : adj[static_cast<std::size_t>(j)]) {
            if (!seen[static_cast<std::size_t>(k)]) {
                seen[static_cast<std::size_t>(k)] = 1;
                q.push(k);
            }
        }
    }
    if (reached != n) {
        throw FormatError("skeleton bone graph is not connected");
    }
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraParams& cam) {
    const Eigen::Vector4d hp(point.x(), point.y(), point.z(), 1.0);
    const Eigen::Vector3d q = cam.P * hp;
    if (std::abs(q(2)) < 1e-12) {
        throw DegenerateProjection("point projects onto the principal plane of camera " +
                                   std::to_string(cam.id));
    }
    return {q(0) / q(2), q(1) / q(2)};
}

Pose3D center_on_pelvis_3d(const Pose3D& pose, const Skeleton& skel) {
    const auto pelvis = static_cast<std::size_t>(skel.pelvis);
    if (pelvis >= pose.size() || !pose.present[pelvis]) {
        throw MissingPelvis("3D pose has no pelvis joint");
    }
    Pose3D out = pose;
    const Eigen::Vector3d origin = pose.joints[pelvis];
    for (auto& j : out.joints) {
        j -= origin;
    }
    out.joints[pelvis].setZero();
    return out;
}

Pose2D center_on_pelvis_2d(const Pose2D& pose, const Skeleton& skel) {
    const auto pelvis = static_cast<std::size_t>(skel.pelvis);
    if (pelvis >= pose.size() || !pose.visible[pelvis]) {
        throw MissingPelvis("2D pose has no visible pelvis joint");
    }
    Pose2D out = pose;
    const Eigen::Vector2d origin = pose.joints[pelvis];
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (out.visible[j]) {
            out.joints[j] -= origin;
        }
    }
    out.joints[pelvis].setZero();
    return out;
}

Pose2D normalize_2d(const Pose2D& pose, const CameraParams& cam) {
    Pose2D out = pose;
    const double scale = cam.min_side();
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (out.visible[j]) {
            out.joints[j] /= scale;
        }
    }
    return out;
}

Pose3D normalize_3d(const Pose3D& pose, const Skeleton& skel) {
    const auto top = static_cast<std::size_t>(skel.spine_top);
    const auto bottom = static_cast<std::size_t>(skel.spine_bottom);
    if (top >= pose.size() || bottom >= pose.size() || !pose.present[top] || !pose.present[bottom]) {
        throw DegenerateSpine("spine joints are not present");
    }
    const double spine_length = (pose.joints[top] - pose.joints[bottom]).norm();
    if (spine_length < 1e-6) {
        throw DegenerateSpine("spine length below 1e-6 mm");
    }
    const double scale = spine_length / 3.0;
    Pose3D out = pose;
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (out.present[j]) {
            out.joints[j] /= scale;
        }
    }
    return out;
}

} // namespace posern
