#pragma once

#include "coactive/geometry.hpp"

namespace coactive {

/// A convex core (point, segment, box or cylinder) swept by a sphere of
/// radius `margin`. Spheres are points with a margin, capsules are segments
/// with a margin; boxes and cylinders carry no margin.
struct ConvexBody {
    enum class Core { point, segment, box, cylinder };

    Core core = Core::point;
    Vec3 center;
    Mat3 rotation;
    /// box: half extents; cylinder: (radius, radius, half_height);
    /// segment: (half_length, 0, 0) along the body x axis.
    Vec3 extent;
    double margin = 0.0;

    Vec3 support(const Vec3& dir) const;
    /// Radius of a sphere around `center` containing the whole body.
    double bounding_radius() const;

    static ConvexBody sphere(const Vec3& c, double r);
    static ConvexBody box(const Vec3& c, const Mat3& rot, const Vec3& half_extents);
    static ConvexBody cylinder(const Vec3& c, const Mat3& rot, double radius, double half_height);
    static ConvexBody capsule(const Vec3& a, const Vec3& b, double radius);
};

struct Separation {
    double distance = 0.0;
    /// From the first body's closest point to the second's; zero when touching.
    Vec3 vector;
};

/// Exact minimum separation of two convex bodies (GJK on the cores, margins
/// subtracted afterwards). Curved cores converge to ~1e-12 relative.
Separation convex_distance(const ConvexBody& a, const ConvexBody& b);

/// Cheap bounding-sphere rejection followed by GJK.
bool convex_intersects(const ConvexBody& a, const ConvexBody& b);

}  // namespace coactive
