#pragma once

#include <string>
#include <utility>
#include <vector>

#include "coactive/geometry.hpp"
#include "coactive/world.hpp"

namespace coactive {

/// Serial arm: shoulder yaw/pitch, elbow pitch, then wrist roll/pitch/yaw.
/// The zero configuration points the whole chain along +x.
struct ArmModel {
    double upper_arm = 0.35;
    double forearm = 0.30;
    double ee_offset = 0.10;
    Vec3 shoulder{0.0, 0.0, 0.0};
    std::vector<std::pair<double, double>> joint_limits;
    /// Capsule radius used for arm segments in collision checks.
    double link_radius = 0.03;

    std::size_t dof() const { return joint_limits.size(); }
    bool within_limits(const JointVector& q, double tol = 1e-12) const;
    void validate() const;

    /// 6-DoF arm, links 0.35/0.30/0.10 m.
    static ArmModel standard(const Vec3& shoulder = {0.0, 0.0, 0.0});
};

struct ArmFrames {
    Vec3 shoulder;
    Vec3 elbow;
    Vec3 wrist;
    Vec3 end_effector;
    /// Orientation of the end-effector frame.
    Mat3 wrist_rotation;
};

/// Throws DomainError when q is outside the limits or has the wrong size.
ArmFrames forward_kinematics(const ArmModel& arm, const JointVector& q);

Pose end_effector_pose(const ArmFrames& frames);

struct CylindricalCoord {
    double r = 0.0;
    double theta = 0.0;
    double z = 0.0;
};

CylindricalCoord cylindrical(const Vec3& point, const Vec3& origin);

struct Waypoint {
    JointVector q;
    int index = 0;
};

struct Trajectory {
    std::string context_id;
    std::vector<JointVector> waypoints;

    std::size_t size() const { return waypoints.size(); }
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline constexpr std::size_t kMinWaypoints = 9;

/// N >= 9, endpoints equal start/goal within 1e-9, every waypoint in limits.
void validate_trajectory(const ArmModel& arm, const Context& ctx, const Trajectory& y);

/// Held-object pose at every waypoint: ee pose composed with the grasp transform.
std::vector<Pose> object_poses(const ArmModel& arm, const Trajectory& y, const Context& ctx);

Pose object_pose_at(const ArmModel& arm, const JointVector& q, const Context& ctx);

}  // namespace coactive
