#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "coactive/kinematics.hpp"
#include "coactive/world.hpp"

namespace coactive {

inline constexpr std::size_t kObjEnvDims = 20;
inline constexpr std::size_t kObjDims = 28;
inline constexpr std::size_t kRobotDims = 27;
inline constexpr std::size_t kEnvDims = kObjEnvDims + kObjDims + kRobotDims;  // 75

inline constexpr std::size_t kObjEnvOffset = 0;
inline constexpr std::size_t kObjOffset = kObjEnvDims;
inline constexpr std::size_t kRobotOffset = kObjEnvDims + kObjDims;

/// Length of phi_O for M properties.
constexpr std::size_t object_feature_dims(std::size_t m) { return 4 * m * m; }

struct FeatureConfig {
    /// Interaction-graph proximity threshold (m).
    double edge_threshold = 0.15;
};

/// Per-waypoint FK frames and held-object placement, shared by all extractors.
struct SweptGeometry {
    std::vector<ArmFrames> frames;
    std::vector<Pose> object_poses;
    std::vector<ShapePose> held;
    Vec3 object_vertical_axis{0.0, 0.0, 1.0};

    std::size_t size() const { return object_poses.size(); }
};

SweptGeometry sweep(const ArmModel& arm, const Context& ctx, const Trajectory& y);

struct InteractionEdge {
    int waypoint = 0;
    std::size_t object = 0;  // index into ctx.objects
    std::array<double, 4> phi_oo{};
};

struct InteractionGraph {
    std::vector<InteractionEdge> edges;
};

InteractionGraph interaction_graph(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg = {});

/// Flat 4M² vector; block (p, q) at offset 4·(p·M + q), p indexing o_k's
/// properties and q the manipulated object's.
std::vector<double> phi_O(const Context& ctx, const InteractionGraph& graph);
std::vector<double> phi_O(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg = {});

std::array<double, kRobotDims> phi_robot(const SweptGeometry& g);
std::array<double, kRobotDims> phi_robot(const ArmModel& arm, const Trajectory& y);

std::array<double, kObjDims> phi_obj(const Context& ctx, const SweptGeometry& g);
std::array<double, kObjDims> phi_obj(const ArmModel& arm, const Context& ctx, const Trajectory& y);

std::array<double, kObjEnvDims> phi_obj_env(const Context& ctx, const SweptGeometry& g);
std::array<double, kObjEnvDims> phi_obj_env(const ArmModel& arm, const Context& ctx, const Trajectory& y);

std::array<double, kEnvDims> phi_E(const Context& ctx, const SweptGeometry& g);
std::array<double, kEnvDims> phi_E(const ArmModel& arm, const Context& ctx, const Trajectory& y);

struct BandPower {
    double low = 0.0;
    double high = 0.0;
};

inline constexpr std::size_t kPsdLength = 32;

/// Linear resample to 32 samples, remove the mean, DFT; mean |X_f|² over
/// bins 1–8 (low) and 9–16 (high). Requires at least 2 samples.
BandPower psd_band(std::span<const double> signal);

/// Half-open [begin, end) index ranges of the three time-thirds of N waypoints.
std::array<std::pair<std::size_t, std::size_t>, 3> time_thirds(std::size_t n);

/// Per-waypoint distance signals of the held object.
struct SurfaceDistances {
    std::vector<double> vertical;    // to the nearest surface below (or the floor)
    std::vector<double> horizontal;  // to the nearest surface edge
    std::vector<double> table;       // 3D distance to the table
    std::vector<double> goal;        // center to goal position
};

SurfaceDistances surface_distances(const Context& ctx, const SweptGeometry& g);

/// Angle (rad) between the object's vertical axis at each waypoint and at the goal pose.
std::vector<double> vertical_deviation(const Context& ctx, const SweptGeometry& g);

struct FeatureVector {
    std::vector<double> phi_O;
    std::array<double, kEnvDims> phi_E{};

    std::size_t size() const { return phi_O.size() + phi_E.size(); }
    /// [phi_O | phi_E]
    std::vector<double> flat() const;
    static FeatureVector from_flat(std::span<const double> flat, std::size_t m);

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector compute_features(const ArmModel& arm, const Context& ctx, const Trajectory& y,
                               const FeatureConfig& cfg = {});
FeatureVector compute_features(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg = {});

/// CSV header for the feature dump: context_id,trajectory_id,phi0..phi{4M²+74}.
std::string feature_csv_header(std::size_t m);
std::string feature_csv_row(const std::string& context_id, int trajectory_id, const FeatureVector& f);

}  // namespace coactive
