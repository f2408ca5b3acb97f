#include "coactive/kinematics.hpp"

#include <cmath>

#include "coactive/errors.hpp"

namespace coactive {

bool ArmModel::within_limits(const JointVector& q, double tol) const {
    if (q.size() != joint_limits.size()) return false;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (!(q[i] >= joint_limits[i].first - tol && q[i] <= joint_limits[i].second + tol)) return false;
    }
    return true;
}

void ArmModel::validate() const {
    if (!(upper_arm > 0.0 && forearm > 0.0 && ee_offset > 0.0)) {
        throw InvariantError("arm link lengths must be > 0");
    }
    if (joint_limits.size() < 4) throw InvariantError("arm needs at least 4 joints");
    for (const auto& [lo, hi] : joint_limits) {
        if (!(lo < hi)) throw InvariantError("joint limit lo must be < hi");
    }
}

ArmModel ArmModel::standard(const Vec3& shoulder) {
    ArmModel arm;
    arm.shoulder = shoulder;
    arm.joint_limits = {{-2.8, 2.8}, {-1.7, 1.7}, {-2.4, 2.4}, {-kPi, kPi}, {-2.0, 2.0}, {-kPi, kPi}};
    return arm;
}

ArmFrames forward_kinematics(const ArmModel& arm, const JointVector& q) {
    if (q.size() != arm.dof()) {
        throw DomainError("joint vector has " + std::to_string(q.size()) + " entries, arm has " +
                          std::to_string(arm.dof()));
    }
    if (!arm.within_limits(q)) throw DomainError("joint vector outside arm limits");

    // Positive pitch raises the link toward +z, hence rotation about −y.
    const Mat3 upper = Mat3::rot_z(q[0]) * Mat3::rot_y(-q[1]);
    const Mat3 fore = upper * Mat3::rot_y(-q[2]);
    Mat3 wrist = fore * Mat3::rot_x(q[3]);
    if (q.size() > 4) wrist = wrist * Mat3::rot_y(-q[4]);
    if (q.size() > 5) wrist = wrist * Mat3::rot_z(q[5]);

    ArmFrames f;
    f.shoulder = arm.shoulder;
    f.elbow = f.shoulder + upper.col(0) * arm.upper_arm;
    f.wrist = f.elbow + fore.col(0) * arm.forearm;
    f.end_effector = f.wrist + wrist.col(0) * arm.ee_offset;
    f.wrist_rotation = wrist;
    return f;
}

Pose end_effector_pose(const ArmFrames& frames) {
    return {frames.end_effector, Quaternion::from_matrix(frames.wrist_rotation)};
}

CylindricalCoord cylindrical(const Vec3& point, const Vec3& origin) {
    const Vec3 d = point - origin;
    CylindricalCoord c;
    c.r = std::hypot(d.x, d.y);
    c.theta = c.r > 0.0 ? std::atan2(d.y, d.x) : 0.0;
    c.z = d.z;
    return c;
}

void validate_trajectory(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    if (y.size() < kMinWaypoints) {
        throw InvariantError("trajectory needs at least " + std::to_string(kMinWaypoints) + " waypoints");
    }
    for (const auto& q : y.waypoints) {
        if (!arm.within_limits(q)) throw DomainError("trajectory waypoint outside arm limits");
    }
    auto same = [](const JointVector& a, const JointVector& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::abs(a[i] - b[i]) > 1e-9) return false;
        }
        return true;
    };
    if (!same(y.waypoints.front(), ctx.start_config)) throw InvariantError("trajectory does not start at start_config");
    if (!same(y.waypoints.back(), ctx.goal_config)) throw InvariantError("trajectory does not end at goal_config");
}

Pose object_pose_at(const ArmModel& arm, const JointVector& q, const Context& ctx) {
    return end_effector_pose(forward_kinematics(arm, q)).compose(ctx.grasp_transform);
}

std::vector<Pose> object_poses(const ArmModel& arm, const Trajectory& y, const Context& ctx) {
    std::vector<Pose> out;
    out.reserve(y.size());
    for (const auto& q : y.waypoints) out.push_back(object_pose_at(arm, q, ctx));
    return out;
}

}  // namespace coactive
