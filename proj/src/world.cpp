#include "coactive/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <type_traits>

#include "coactive/errors.hpp"

namespace coactive {

ConvexBody ShapePose::body() const {
    const Mat3 rot = pose.rotation();
    return std::visit(
        [&](const auto& s) -> ConvexBody {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return ConvexBody::sphere(pose.position, s.radius);
            } else if constexpr (std::is_same_v<T, Box>) {
                return ConvexBody::box(pose.position, rot, s.half_extents);
            } else {
                return ConvexBody::cylinder(pose.position, rot, s.radius, s.half_height);
            }
        },
        shape);
}

double ShapePose::horizontal_radius() const {
    const Mat3 rot = pose.rotation();
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return s.radius;
            } else if constexpr (std::is_same_v<T, Box>) {
                // Farthest corner in the horizontal plane.
                double best = 0.0;
                for (int sx : {-1, 1}) {
                    for (int sy : {-1, 1}) {
                        for (int sz : {-1, 1}) {
                            const Vec3 c = rot * Vec3{sx * s.half_extents.x, sy * s.half_extents.y,
                                                      sz * s.half_extents.z};
                            best = std::max(best, std::hypot(c.x, c.y));
                        }
                    }
                }
                return best;
            } else {
                const Vec3 axis = rot.col(2);
                const double tilt = std::hypot(axis.x, axis.y);
                const double h = s.half_height, r = s.radius;
                if (tilt <= 0.0) return r;
                // Maximize h*tilt*c + r*sqrt(1 - tilt^2 c^2) over c in [0, 1].
                const double c2 = h * h / (tilt * tilt * (h * h + r * r));
                if (c2 <= 1.0) return std::hypot(h, r);
                return h * tilt + r * std::sqrt(std::max(0.0, 1.0 - tilt * tilt));
            }
        },
        shape);
}

double ShapePose::vertical_half_extent() const {
    const Mat3 rot = pose.rotation();
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return s.radius;
            } else if constexpr (std::is_same_v<T, Box>) {
                return std::abs(rot(2, 0)) * s.half_extents.x + std::abs(rot(2, 1)) * s.half_extents.y +
                       std::abs(rot(2, 2)) * s.half_extents.z;
            } else {
                const double az = std::abs(rot(2, 2));
                return s.half_height * az + s.radius * std::sqrt(std::max(0.0, 1.0 - az * az));
            }
        },
        shape);
}

void ShapePose::validate() const {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                if (!(s.radius > 0.0)) throw InvariantError("sphere radius must be > 0");
            } else if constexpr (std::is_same_v<T, Box>) {
                if (!(s.half_extents.x > 0.0 && s.half_extents.y > 0.0 && s.half_extents.z > 0.0)) {
                    throw InvariantError("box half extents must be > 0");
                }
            } else {
                if (!(s.radius > 0.0 && s.half_height > 0.0)) {
                    throw InvariantError("cylinder radius and half height must be > 0");
                }
            }
        },
        shape);
    if (std::abs(pose.orientation.norm() - 1.0) > 1e-9) {
        throw InvariantError("orientation quaternion is not unit length");
    }
}

std::string_view to_string(SurfaceKind kind) {
    switch (kind) {
        case SurfaceKind::table: return "table";
        case SurfaceKind::shelf: return "shelf";
        case SurfaceKind::checkout: return "checkout";
    }
    return "table";
}

SurfaceKind surface_kind_from_string(std::string_view s) {
    if (s == "table") return SurfaceKind::table;
    if (s == "shelf") return SurfaceKind::shelf;
    if (s == "checkout") return SurfaceKind::checkout;
    throw ParseError("surfaces[].kind: unknown surface kind '" + std::string(s) + "'");
}

double Surface::horizontal_edge_distance(double x, double y) const {
    const double dx = std::abs(x - center.x) - half_x;
    const double dy = std::abs(y - center.y) - half_y;
    if (dx <= 0.0 && dy <= 0.0) return std::min(-dx, -dy);
    return std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
}

ConvexBody Surface::body() const {
    return ConvexBody::box(center, Mat3::identity(), {half_x, half_y, 0.0});
}

const ObjectInstance& Context::manipulated() const {
    for (const auto& o : objects) {
        if (o.id == manipulated_id) return o;
    }
    throw ReferenceError("manipulated_id '" + manipulated_id + "' does not name an object");
}

const Surface& Context::table() const {
    for (const auto& s : surfaces) {
        if (s.kind == SurfaceKind::table) return s;
    }
    throw InvariantError("context has no table surface");
}

Separation min_collision_distance(const ShapePose& a, const ShapePose& b) {
    return convex_distance(a.body(), b.body());
}

bool is_below(const ObjectInstance& o_k, const ShapePose& bar) {
    const Vec3& a = o_k.shape_pose.pose.position;
    const Vec3& b = bar.pose.position;
    const double planar = std::hypot(a.x - b.x, a.y - b.y);
    if (!(planar < o_k.shape_pose.horizontal_radius() + bar.horizontal_radius())) return false;
    return o_k.shape_pose.top() <= bar.bottom();
}

void validate_context(const Context& ctx) {
    const std::size_t m = ctx.properties.size();
    if (m == 0) throw InvariantError("properties must not be empty");
    std::set<std::string> ids;
    int manipulated = 0;
    for (const auto& o : ctx.objects) {
        if (!ids.insert(o.id).second) throw InvariantError("duplicate object id '" + o.id + "'");
        if (o.attributes.size() != m) {
            throw InvariantError("object '" + o.id + "' has " + std::to_string(o.attributes.size()) +
                                 " attribute labels, expected " + std::to_string(m));
        }
        for (int l : o.attributes.labels) {
            if (l != 0 && l != 1) throw InvariantError("object '" + o.id + "' has a non-binary label");
        }
        if (std::abs(norm(o.vertical_axis) - 1.0) > 1e-9) {
            throw InvariantError("object '" + o.id + "' vertical_axis is not unit length");
        }
        o.shape_pose.validate();
        if (o.id == ctx.manipulated_id) ++manipulated;
    }
    if (manipulated != 1) {
        throw ReferenceError("manipulated_id '" + ctx.manipulated_id + "' does not resolve to an object");
    }
    int tables = 0;
    for (const auto& s : ctx.surfaces) {
        if (!(s.half_x > 0.0 && s.half_y > 0.0)) throw InvariantError("surface half extents must be > 0");
        if (s.kind == SurfaceKind::table) ++tables;
    }
    if (tables != 1) throw InvariantError("context must have exactly one table surface");
    for (const auto& h : ctx.human_regions) {
        if (!std::holds_alternative<Sphere>(h.shape)) throw InvariantError("human regions must be spheres");
        h.validate();
    }
    if (ctx.start_config.empty() || ctx.start_config.size() != ctx.goal_config.size()) {
        throw InvariantError("start_config and goal_config must be non-empty and equally sized");
    }
    if (std::abs(ctx.goal_pose.orientation.norm() - 1.0) > 1e-9 ||
        std::abs(ctx.grasp_transform.orientation.norm() - 1.0) > 1e-9) {
        throw InvariantError("goal_pose/grasp_transform quaternion is not unit length");
    }
}

}  // namespace coactive
