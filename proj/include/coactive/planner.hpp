#pragma once

#include <cstdint>
#include <vector>

#include "coactive/convex.hpp"
#include "coactive/kinematics.hpp"
#include "coactive/world.hpp"

namespace coactive {

enum class PlannerAlgorithm { birrt, rrt };

struct PlannerConfig {
    int n_samples = 100;
    /// Max joint-space extension per tree step (rad, Euclidean).
    double step_size = 0.25;
    /// Per-sample tree growth budget; exceeding it raises PlannerError.
    int max_iterations = 4000;
    int shortcut_passes = 20;
    /// Probability that a valid shortcut is taken.
    double shortcut_accept = 0.35;
    int waypoint_count = 30;
    std::uint64_t seed = 1;
    PlannerAlgorithm algorithm = PlannerAlgorithm::birrt;
    /// Random intermediate configurations per sample (0 = plain start-goal query).
    int max_via_points = 2;
    /// Half-width of the per-joint box around the start-goal chord used to draw vias (rad).
    double via_spread = 0.7;
    /// Edge validity is checked every `edge_resolution` rad.
    double edge_resolution = 0.04;

    void validate() const;
};

/// Collision model of one context: arm links as capsules, the held object at
/// its grasped pose, every other object, surfaces and human regions as obstacles.
class CollisionWorld {
public:
    CollisionWorld(const Context& ctx, const ArmModel& arm);

    bool is_collision_free(const JointVector& q) const;
    /// Checks configurations along the straight joint-space segment a→b (endpoints excluded).
    bool is_motion_free(const JointVector& a, const JointVector& b, double resolution) const;

    const Context& context() const { return *ctx_; }
    const ArmModel& arm() const { return *arm_; }

private:
    const Context* ctx_;
    const ArmModel* arm_;
    std::vector<ConvexBody> obstacles_;  // objects + human regions
    std::vector<ConvexBody> surfaces_;
    Shape held_shape_;
};

bool is_collision_free(const JointVector& q, const Context& ctx, const ArmModel& arm);

/// Draws `cfg.n_samples` collision-free trajectories with exactly
/// `cfg.waypoint_count` waypoints each. Output depends only on (ctx, cfg, arm).
std::vector<Trajectory> sample_trajectories(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm);

/// One trajectory for sample slot `index` (the unit of work of sample_trajectories).
Trajectory sample_trajectory(const CollisionWorld& world, const PlannerConfig& cfg, int index);

/// Task-agnostic plan: plain start-goal BiRRT query with full shortcutting.
Trajectory plan_geometric(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm);

/// Arc-length uniform resampling of a joint-space polyline to `count` points.
std::vector<JointVector> resample_path(const std::vector<JointVector>& path, int count);

}  // namespace coactive
