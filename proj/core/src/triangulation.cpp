#include "posern/triangulation.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace posern {

double huber(double r, double delta) {
    if (r <= delta) {
        return 0.5 * r * r;
    }
    return delta * (r - 0.5 * delta);
}

double huber_deriv(double r, double delta) {
    return r <= delta ? r : delta;
}

namespace {

Eigen::Matrix<double, Eigen::Dynamic, 4> stack_constraints(std::span<const JointObservation> obs,
                                                           std::span<const CameraParams> cams) {
    Eigen::Matrix<double, Eigen::Dynamic, 4> A(2 * static_cast<long>(obs.size()), 4);
    long row = 0;
    for (const auto& o : obs) {
        const auto& P = cams[static_cast<std::size_t>(o.camera)].P;
        A.row(row++) = o.weight * (o.uv.x() * P.row(2) - P.row(0));
        A.row(row++) = o.weight * (o.uv.y() * P.row(2) - P.row(1));
    }
    return A;
}

struct Objective {
    std::span<const JointObservation> obs;
    std::span<const CameraParams> cams;
    double delta;

    double cost(const Eigen::Vector3d& x) const {
        double total = 0.0;
        const Eigen::Vector4d hx(x.x(), x.y(), x.z(), 1.0);
        for (const auto& o : obs) {
            const auto& P = cams[static_cast<std::size_t>(o.camera)].P;
            const Eigen::Vector3d q = P * hx;
            if (std::abs(q(2)) < 1e-12) {
                return std::numeric_limits<double>::infinity();
            }
            const Eigen::Vector2d e(q(0) / q(2) - o.uv.x(), q(1) / q(2) - o.uv.y());
            total += huber(o.weight * e.norm(), delta);
        }
        return total;
    }
};

} // namespace

Eigen::Vector3d dlt_triangulate(std::span<const JointObservation> obs,
                                std::span<const CameraParams> cams) {
    std::set<int> distinct;
    for (const auto& o : obs) {
        distinct.insert(o.camera);
    }
    if (distinct.size() < 2) {
        throw DegenerateGeometry("triangulation needs observations from at least 2 cameras");
    }
    const auto A = stack_constraints(obs, cams);
    Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 4>> svd(A, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s(0) == 0.0 || s(2) <= 1e-9 * s(0)) {
        throw DegenerateGeometry("triangulation design matrix is rank deficient");
    }
    const Eigen::Vector4d h = svd.matrixV().col(3);
    if (std::abs(h(3)) < 1e-12 * h.head<3>().norm()) {
        throw DegenerateGeometry("triangulated point lies at infinity");
    }
    return h.head<3>() / h(3);
}

TriangulationResult triangulate_joint(std::span<const JointObservation> obs,
                                      std::span<const CameraParams> cams,
                                      const TriangulationConfig& cfg) {
    Eigen::Vector3d x = dlt_triangulate(obs, cams);
    const Objective obj{obs, cams, cfg.huber_delta};

    double cost = obj.cost(x);
    if (!std::isfinite(cost)) {
        throw NonFinite("triangulation initialization is on a principal plane");
    }

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        const Eigen::Vector4d hx(x.x(), x.y(), x.z(), 1.0);
        for (const auto& o : obs) {
            const auto& P = cams[static_cast<std::size_t>(o.camera)].P;
            const Eigen::Vector3d q = P * hx;
            const double depth = q(2);
            if (std::abs(depth) < 1e-12) {
                throw NonFinite("iterate crossed a principal plane");
            }
            const Eigen::Vector2d uv(q(0) / depth, q(1) / depth);
            const Eigen::Vector2d e = uv - o.uv;
            // J = d(uv)/dX, rows (dA - u*dC)/depth and (dB - v*dC)/depth.
            Eigen::Matrix<double, 2, 3> J;
            J.row(0) = (P.row(0).head<3>() - uv.x() * P.row(2).head<3>()) / depth;
            J.row(1) = (P.row(1).head<3>() - uv.y() * P.row(2).head<3>()) / depth;
            const double r = o.weight * e.norm();
            const double irls = r <= cfg.huber_delta ? 1.0 : cfg.huber_delta / r;
            const double k = irls * o.weight * o.weight;
            H.noalias() += k * J.transpose() * J;
            g.noalias() += k * J.transpose() * e;
        }

        const Eigen::Vector3d step = H.ldlt().solve(-g);
        if (!step.allFinite()) {
            throw NonFinite("Gauss-Newton step is not finite");
        }

        double alpha = 1.0;
        double new_cost = obj.cost(x + alpha * step);
        int halvings = 0;
        while (new_cost > cost && halvings < 20) {
            alpha *= 0.5;
            new_cost = obj.cost(x + alpha * step);
            ++halvings;
        }
        if (new_cost > cost) {
            break;  // no descent direction left; keep the current point
        }
        x += alpha * step;
        cost = new_cost;
        if ((alpha * step).norm() < cfg.tolerance) {
            break;
        }
    }

    if (!x.allFinite() || !std::isfinite(cost)) {
        throw NonFinite("triangulation produced non-finite values");
    }
    return {x, cost};
}

Pose3D triangulate_pose(const std::vector<Pose2D>& views,
                        const std::vector<CameraParams>& cams,
                        const TriangulationConfig& cfg) {
    std::size_t num_joints = 0;
    for (const auto& v : views) {
        num_joints = std::max(num_joints, v.size());
    }
    Pose3D pose(num_joints);
    std::vector<JointObservation> obs;
    for (std::size_t j = 0; j < num_joints; ++j) {
        obs.clear();
        for (const auto& v : views) {
            if (j < v.size() && v.visible[j]) {
                obs.push_back({v.camera, v.joints[j], v.confidence[j]});
            }
        }
        if (static_cast<int>(obs.size()) < cfg.min_cameras) {
            continue;
        }
        try {
            const auto result = triangulate_joint(obs, cams, cfg);
            pose.joints[j] = result.point;
            pose.present[j] = 1;
        } catch (const DegenerateGeometry&) {
        } catch (const NonFinite&) {
        }
    }
    return pose;
}

} // namespace posern
