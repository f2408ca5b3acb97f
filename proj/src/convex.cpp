#include "coactive/convex.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace coactive {

ConvexBody ConvexBody::sphere(const Vec3& c, double r) {
    ConvexBody b;
    b.core = Core::point;
    b.center = c;
    b.margin = r;
    return b;
}

ConvexBody ConvexBody::box(const Vec3& c, const Mat3& rot, const Vec3& half_extents) {
    ConvexBody b;
    b.core = Core::box;
    b.center = c;
    b.rotation = rot;
    b.extent = half_extents;
    return b;
}

ConvexBody ConvexBody::cylinder(const Vec3& c, const Mat3& rot, double radius, double half_height) {
    ConvexBody b;
    b.core = Core::cylinder;
    b.center = c;
    b.rotation = rot;
    b.extent = {radius, radius, half_height};
    return b;
}

ConvexBody ConvexBody::capsule(const Vec3& a, const Vec3& b, double radius) {
    ConvexBody body;
    body.core = Core::segment;
    body.center = (a + b) * 0.5;
    const Vec3 d = b - a;
    const double len = norm(d);
    body.margin = radius;
    body.extent = {0.5 * len, 0.0, 0.0};
    if (len > 0.0) {
        // Only the first column (segment direction) is used by support().
        const Vec3 u = d * (1.0 / len);
        body.rotation.m = {u.x, 0, 0, u.y, 1, 0, u.z, 0, 1};
    }
    return body;
}

Vec3 ConvexBody::support(const Vec3& dir) const {
    switch (core) {
        case Core::point:
            return center;
        case Core::segment: {
            const Vec3 u = rotation.col(0);
            return center + u * (dot(dir, u) >= 0.0 ? extent.x : -extent.x);
        }
        case Core::box: {
            Vec3 p = center;
            for (int i = 0; i < 3; ++i) {
                const Vec3 axis = rotation.col(i);
                p += axis * (dot(dir, axis) >= 0.0 ? extent[i] : -extent[i]);
            }
            return p;
        }
        case Core::cylinder: {
            const Vec3 axis = rotation.col(2);
            const double along = dot(dir, axis);
            const Vec3 radial = dir - axis * along;
            const double rn = norm(radial);
            Vec3 p = center + axis * (along >= 0.0 ? extent.z : -extent.z);
            if (rn > 1e-300) p += radial * (extent.x / rn);
            return p;
        }
    }
    return center;
}

double ConvexBody::bounding_radius() const {
    switch (core) {
        case Core::point:
            return margin;
        case Core::segment:
            return extent.x + margin;
        case Core::box:
            return norm(extent) + margin;
        case Core::cylinder:
            return std::hypot(extent.x, extent.z) + margin;
    }
    return margin;
}

namespace {

struct Vertex {
    Vec3 w;  // a - b
    Vec3 a;
    Vec3 b;
};

struct Simplex {
    std::array<Vertex, 4> v{};
    std::array<double, 4> lambda{};
    int n = 0;
};

// Keeps the listed vertices with the given barycentric weights.
void keep(Simplex& s, std::initializer_list<std::pair<int, double>> items) {
    Simplex out;
    for (const auto& [idx, l] : items) {
        out.v[static_cast<std::size_t>(out.n)] = s.v[static_cast<std::size_t>(idx)];
        out.lambda[static_cast<std::size_t>(out.n)] = l;
        ++out.n;
    }
    s = out;
}

// Closest point to the origin on triangle (ia, ib, ic) of `s`, region-based.
// Writes the reduced sub-simplex into `out` and returns the point.
Vec3 closest_on_triangle(const Simplex& s, int ia, int ib, int ic, Simplex& out) {
    out = s;
    const Vec3& a = s.v[static_cast<std::size_t>(ia)].w;
    const Vec3& b = s.v[static_cast<std::size_t>(ib)].w;
    const Vec3& c = s.v[static_cast<std::size_t>(ic)].w;
    const Vec3 ab = b - a, ac = c - a, ap = -a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        keep(out, {{ia, 1.0}});
        return a;
    }
    const Vec3 bp = -b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) {
        keep(out, {{ib, 1.0}});
        return b;
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double t = d1 / (d1 - d3);
        keep(out, {{ia, 1.0 - t}, {ib, t}});
        return a + ab * t;
    }
    const Vec3 cp = -c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) {
        keep(out, {{ic, 1.0}});
        return c;
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double t = d2 / (d2 - d6);
        keep(out, {{ia, 1.0 - t}, {ic, t}});
        return a + ac * t;
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        keep(out, {{ib, 1.0 - t}, {ic, t}});
        return b + (c - b) * t;
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    keep(out, {{ia, 1.0 - v - w}, {ib, v}, {ic, w}});
    return a + ab * v + ac * w;
}

bool origin_outside_face(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 n = cross(b - a, c - a);
    const double sign_p = dot(-a, n);
    const double sign_d = dot(d - a, n);
    // Flat tetrahedra make every face a candidate.
    if (std::abs(sign_d) < 1e-30) return true;
    return sign_p * sign_d < 0.0;
}

// Reduces `s` to the sub-simplex supporting the closest point to the origin.
// Returns false when the origin lies inside the tetrahedron.
bool reduce(Simplex& s, Vec3& closest) {
    switch (s.n) {
        case 1:
            s.lambda[0] = 1.0;
            closest = s.v[0].w;
            return true;
        case 2: {
            const Vec3& a = s.v[0].w;
            const Vec3 ab = s.v[1].w - a;
            const double len2 = norm2(ab);
            double t = len2 > 0.0 ? -dot(a, ab) / len2 : 0.0;
            if (t <= 0.0) {
                keep(s, {{0, 1.0}});
                closest = s.v[0].w;
            } else if (t >= 1.0) {
                keep(s, {{1, 1.0}});
                closest = s.v[0].w;
            } else {
                s.lambda[0] = 1.0 - t;
                s.lambda[1] = t;
                closest = a + ab * t;
            }
            return true;
        }
        case 3: {
            Simplex out;
            closest = closest_on_triangle(s, 0, 1, 2, out);
            s = out;
            return true;
        }
        default: {
            static constexpr std::array<std::array<int, 4>, 4> faces{
                {{0, 1, 2, 3}, {0, 2, 3, 1}, {0, 3, 1, 2}, {1, 3, 2, 0}}};
            double best = std::numeric_limits<double>::infinity();
            bool any_outside = false;
            Simplex best_simplex;
            Vec3 best_point;
            for (const auto& f : faces) {
                const auto& a = s.v[static_cast<std::size_t>(f[0])].w;
                const auto& b = s.v[static_cast<std::size_t>(f[1])].w;
                const auto& c = s.v[static_cast<std::size_t>(f[2])].w;
                const auto& d = s.v[static_cast<std::size_t>(f[3])].w;
                if (!origin_outside_face(a, b, c, d)) continue;
                any_outside = true;
                Simplex out;
                const Vec3 p = closest_on_triangle(s, f[0], f[1], f[2], out);
                if (norm2(p) < best) {
                    best = norm2(p);
                    best_simplex = out;
                    best_point = p;
                }
            }
            if (!any_outside) return false;
            s = best_simplex;
            closest = best_point;
            return true;
        }
    }
}

Vertex support_vertex(const ConvexBody& a, const ConvexBody& b, const Vec3& dir) {
    Vertex v;
    v.a = a.support(dir);
    v.b = b.support(-dir);
    v.w = v.a - v.b;
    return v;
}

}  // namespace

Separation convex_distance(const ConvexBody& a, const ConvexBody& b) {
    Simplex s;
    Vec3 dir = a.center - b.center;
    if (norm2(dir) == 0.0) dir = {1.0, 0.0, 0.0};
    s.v[0] = support_vertex(a, b, -dir);
    s.lambda[0] = 1.0;
    s.n = 1;
    Vec3 v = s.v[0].w;
    bool intersecting = false;

    constexpr int kMaxIterations = 128;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const double vv = norm2(v);
        if (vv <= 1e-26) {
            intersecting = true;
            break;
        }
        const Vertex w = support_vertex(a, b, -v);
        // Duality gap between |v| and the support plane bound.
        if (vv - dot(v, w.w) <= 1e-13 * vv) break;
        bool duplicate = false;
        for (int i = 0; i < s.n; ++i) {
            if (norm2(s.v[static_cast<std::size_t>(i)].w - w.w) <= 1e-28) duplicate = true;
        }
        if (duplicate) break;

        Simplex next = s;
        next.v[static_cast<std::size_t>(next.n++)] = w;
        Vec3 closest;
        if (!reduce(next, closest)) {
            intersecting = true;
            break;
        }
        if (norm2(closest) >= vv) break;  // no progress
        s = next;
        v = closest;
    }

    Separation out;
    if (intersecting) return out;

    Vec3 pa, pb;
    for (int i = 0; i < s.n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        pa += s.v[k].a * s.lambda[k];
        pb += s.v[k].b * s.lambda[k];
    }
    const Vec3 ab = pb - pa;
    const double core_distance = norm(ab);
    const double d = core_distance - a.margin - b.margin;
    if (d <= 0.0 || core_distance <= 0.0) return out;
    out.distance = d;
    out.vector = ab * (d / core_distance);
    return out;
}

bool convex_intersects(const ConvexBody& a, const ConvexBody& b) {
    const double reach = a.bounding_radius() + b.bounding_radius();
    if (norm2(a.center - b.center) > reach * reach) return false;
    return convex_distance(a, b).distance <= 0.0;
}

}  // namespace coactive
