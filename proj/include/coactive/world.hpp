#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coactive/convex.hpp"
#include "coactive/geometry.hpp"

namespace coactive {

using JointVector = std::vector<double>;

struct Sphere {
    double radius = 0.0;
    friend bool operator==(const Sphere&, const Sphere&) = default;
};

struct Box {
    Vec3 half_extents;
    friend bool operator==(const Box&, const Box&) = default;
};

/// Axis along the body z axis.
struct Cylinder {
    double radius = 0.0;
    double half_height = 0.0;
    friend bool operator==(const Cylinder&, const Cylinder&) = default;
};

using Shape = std::variant<Sphere, Box, Cylinder>;

struct ShapePose {
    Shape shape;
    Pose pose;

    ConvexBody body() const;
    /// Radius of the smallest vertical cylinder around the center enclosing the shape.
    double horizontal_radius() const;
    /// Half height of the world-aligned bounding box.
    double vertical_half_extent() const;
    double top() const { return pose.position.z + vertical_half_extent(); }
    double bottom() const { return pose.position.z - vertical_half_extent(); }

    /// Throws InvariantError on non-positive dimensions or a non-unit quaternion.
    void validate() const;

    friend bool operator==(const ShapePose&, const ShapePose&) = default;
};

inline const std::vector<std::string>& default_property_names() {
    static const std::vector<std::string> names{"heavy", "fragile", "sharp", "hot", "liquid", "electronic"};
    return names;
}

/// One binary label per property; the property list lives on the Context.
struct AttributeVector {
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    int operator[](std::size_t i) const { return labels[i]; }
    friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

struct ObjectInstance {
    std::string id;
    ShapePose shape_pose;
    AttributeVector attributes;
    /// Body-frame "up" direction.
    Vec3 vertical_axis{0.0, 0.0, 1.0};

    friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

enum class SurfaceKind { table, shelf, checkout };

std::string_view to_string(SurfaceKind kind);
SurfaceKind surface_kind_from_string(std::string_view s);

/// Horizontal rectangle with normal +z.
struct Surface {
    Vec3 center;
    double half_x = 0.0;
    double half_y = 0.0;
    SurfaceKind kind = SurfaceKind::table;

    bool contains_xy(double x, double y) const {
        return std::abs(x - center.x) <= half_x && std::abs(y - center.y) <= half_y;
    }
    /// Horizontal distance from (x, y) to the rectangle's boundary.
    double horizontal_edge_distance(double x, double y) const;
    ConvexBody body() const;

    friend bool operator==(const Surface&, const Surface&) = default;
};

struct Context {
    std::string id;
    std::vector<std::string> properties;
    std::vector<ObjectInstance> objects;
    std::string manipulated_id;
    std::vector<Surface> surfaces;
    std::vector<ShapePose> human_regions;
    JointVector start_config;
    JointVector goal_config;
    Pose goal_pose;
    /// End-effector frame to held-object frame.
    Pose grasp_transform;

    std::size_t property_count() const { return properties.size(); }
    const ObjectInstance& manipulated() const;
    const Surface& table() const;

    friend bool operator==(const Context&, const Context&) = default;
};

Separation min_collision_distance(const ShapePose& a, const ShapePose& b);

/// o_k lies vertically below the pose `bar`: horizontal overlap of the
/// enclosing vertical cylinders and o_k's top no higher than bar's bottom.
bool is_below(const ObjectInstance& o_k, const ShapePose& bar);

/// Checks every structural invariant except start/goal feasibility, which
/// needs an arm model (see planner). Throws InvariantError / ReferenceError.
void validate_context(const Context& ctx);

}  // namespace coactive
