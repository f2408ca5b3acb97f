#include "coactive/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <limits>

#include "coactive/errors.hpp"

namespace coactive {

SweptGeometry sweep(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    SweptGeometry g;
    const ObjectInstance& held = ctx.manipulated();
    g.object_vertical_axis = held.vertical_axis;
    g.frames.reserve(y.size());
    g.object_poses.reserve(y.size());
    g.held.reserve(y.size());
    for (const auto& q : y.waypoints) {
        g.frames.push_back(forward_kinematics(arm, q));
        g.object_poses.push_back(end_effector_pose(g.frames.back()).compose(ctx.grasp_transform));
        g.held.push_back({held.shape_pose.shape, g.object_poses.back()});
    }
    return g;
}

std::array<std::pair<std::size_t, std::size_t>, 3> time_thirds(std::size_t n) {
    const std::size_t a = n / 3, b = (2 * n) / 3;
    return {{{0, a}, {a, b}, {b, n}}};
}

InteractionGraph interaction_graph(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg) {
    InteractionGraph graph;
    for (std::size_t j = 0; j < g.size(); ++j) {
        for (std::size_t k = 0; k < ctx.objects.size(); ++k) {
            const ObjectInstance& o = ctx.objects[k];
            if (o.id == ctx.manipulated_id) continue;
            // Vector points from o_k toward the held object.
            const Separation sep = min_collision_distance(o.shape_pose, g.held[j]);
            const bool below = is_below(o, g.held[j]);
            if (sep.distance < cfg.edge_threshold || below) {
                graph.edges.push_back({static_cast<int>(j), k,
                                       {sep.vector.x, sep.vector.y, sep.vector.z, below ? 1.0 : 0.0}});
            }
        }
    }
    return graph;
}

std::vector<double> phi_O(const Context& ctx, const InteractionGraph& graph) {
    const std::size_t m = ctx.property_count();
    std::vector<double> out(object_feature_dims(m), 0.0);
    const AttributeVector& bar = ctx.manipulated().attributes;
    for (const auto& e : graph.edges) {
        const AttributeVector& lk = ctx.objects[e.object].attributes;
        for (std::size_t p = 0; p < m; ++p) {
            if (lk[p] == 0) continue;
            for (std::size_t q = 0; q < m; ++q) {
                if (bar[q] == 0) continue;
                const std::size_t off = 4 * (p * m + q);
                for (std::size_t c = 0; c < 4; ++c) out[off + c] += e.phi_oo[c];
            }
        }
    }
    return out;
}

std::vector<double> phi_O(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg) {
    return phi_O(ctx, interaction_graph(ctx, g, cfg));
}

namespace {

// Unwraps angles so consecutive samples differ by at most π, starting on the
// branch nearest `anchor`.
std::vector<double> unwrap(const std::vector<double>& raw, double anchor) {
    std::vector<double> out(raw.size());
    if (raw.empty()) return out;
    out[0] = anchor + wrap_angle(raw[0] - anchor);
    for (std::size_t i = 1; i < raw.size(); ++i) out[i] = out[i - 1] + wrap_angle(raw[i] - raw[i - 1]);
    return out;
}

struct CylSeries {
    std::vector<double> r, theta, z;
};

CylSeries series(const std::vector<CylindricalCoord>& c, std::size_t b, std::size_t e, double anchor) {
    CylSeries s;
    std::vector<double> raw;
    for (std::size_t i = b; i < e; ++i) {
        s.r.push_back(c[i].r);
        raw.push_back(c[i].theta);
        s.z.push_back(c[i].z);
    }
    s.theta = unwrap(raw, anchor);
    return s;
}

std::size_t argmax_first(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::array<double, kRobotDims> phi_robot(const SweptGeometry& g) {
    if (g.size() < kMinWaypoints) throw ContractError("phi_robot needs at least 9 waypoints");
    std::vector<CylindricalCoord> elbow, wrist, ee;
    for (const auto& f : g.frames) {
        elbow.push_back(cylindrical(f.elbow, f.shoulder));
        wrist.push_back(cylindrical(f.wrist, f.shoulder));
        ee.push_back(cylindrical(f.end_effector, f.shoulder));
    }
    std::array<double, kRobotDims> out{};
    std::size_t k = 0;
    for (const auto& [b, e] : time_thirds(g.size())) {
        const CylSeries se = series(elbow, b, e, elbow[b].theta);
        const CylSeries sw = series(wrist, b, e, se.theta.front());
        const CylSeries sx = series(ee, b, e, se.theta.front());
        auto extrema = [&](const std::vector<double>& a, const std::vector<double>& c) {
            const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
            const auto [cmin, cmax] = std::minmax_element(c.begin(), c.end());
            return std::pair{std::max(*amax, *cmax), std::min(*amin, *cmin)};
        };
        for (auto member : {&CylSeries::r, &CylSeries::theta, &CylSeries::z}) {
            const auto [hi, lo] = extrema(se.*member, sw.*member);
            out[k++] = hi;
            out[k++] = lo;
        }
        out[k++] = se.r[argmax_first(sx.r)];
        out[k++] = se.theta[argmax_first(sx.theta)];
        out[k++] = se.z[argmax_first(sx.z)];
    }
    return out;
}

std::array<double, kRobotDims> phi_robot(const ArmModel& arm, const Trajectory& y) {
    SweptGeometry g;
    for (const auto& q : y.waypoints) g.frames.push_back(forward_kinematics(arm, q));
    g.object_poses.resize(g.frames.size());
    return phi_robot(g);
}

BandPower psd_band(std::span<const double> signal) {
    if (signal.size() < 2) throw ContractError("psd_band needs at least 2 samples");
    std::array<double, kPsdLength> x{};
    const double scale = static_cast<double>(signal.size() - 1) / static_cast<double>(kPsdLength - 1);
    for (std::size_t i = 0; i < kPsdLength; ++i) {
        const double pos = static_cast<double>(i) * scale;
        const auto lo = std::min(static_cast<std::size_t>(pos), signal.size() - 2);
        const double t = pos - static_cast<double>(lo);
        x[i] = signal[lo] + (signal[lo + 1] - signal[lo]) * t;
    }
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(kPsdLength);
    for (double& v : x) v -= mean;

    BandPower out;
    for (std::size_t f = 1; f <= kPsdLength / 2; ++f) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t n = 0; n < kPsdLength; ++n) {
            const double ang = -2.0 * kPi * static_cast<double>(f * n % kPsdLength) / static_cast<double>(kPsdLength);
            acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        (f <= 8 ? out.low : out.high) += std::norm(acc);
    }
    out.low /= 8.0;
    out.high /= 8.0;
    return out;
}

std::vector<double> vertical_deviation(const Context& ctx, const SweptGeometry& g) {
    const Vec3 goal_up = ctx.goal_pose.rotation() * g.object_vertical_axis;
    std::vector<double> out;
    out.reserve(g.size());
    for (const auto& p : g.object_poses) {
        const Vec3 up = p.rotation() * g.object_vertical_axis;
        out.push_back(std::acos(std::clamp(dot(up, goal_up), -1.0, 1.0)));
    }
    return out;
}

std::array<double, kObjDims> phi_obj(const Context& ctx, const SweptGeometry& g) {
    if (g.size() < kMinWaypoints) throw ContractError("phi_obj needs at least 9 waypoints");
    const std::vector<double> dev = vertical_deviation(ctx, g);
    std::array<double, kObjDims> out{};
    std::size_t k = 0;
    for (const auto& [b, e] : time_thirds(g.size())) {
        const double max_dev = *std::max_element(dev.begin() + static_cast<std::ptrdiff_t>(b),
                                                 dev.begin() + static_cast<std::ptrdiff_t>(e));
        out[k++] = std::cos(max_dev);
        std::array<std::vector<double>, 4> signals;
        for (std::size_t j = b; j < e; ++j) {
            const Vec3& p = g.object_poses[j].position;
            signals[0].push_back(p.x);
            signals[1].push_back(p.y);
            signals[2].push_back(p.z);
            signals[3].push_back(dev[j]);
        }
        for (const auto& s : signals) {
            const BandPower bp = psd_band(s);
            out[k++] = bp.low;
            out[k++] = bp.high;
        }
    }
    out[k] = std::cos(*std::max_element(dev.begin(), dev.end()));
    return out;
}

std::array<double, kObjDims> phi_obj(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    return phi_obj(ctx, sweep(arm, ctx, y));
}

SurfaceDistances surface_distances(const Context& ctx, const SweptGeometry& g) {
    SurfaceDistances d;
    const Surface& table = ctx.table();
    const ConvexBody table_body = table.body();
    for (std::size_t j = 0; j < g.size(); ++j) {
        const ShapePose& held = g.held[j];
        const Vec3& c = held.pose.position;
        const double bottom = held.bottom();

        double support = 0.0;  // floor
        double horizontal = std::numeric_limits<double>::infinity();
        for (const auto& s : ctx.surfaces) {
            if (s.contains_xy(c.x, c.y) && s.center.z <= bottom) support = std::max(support, s.center.z);
            horizontal = std::min(horizontal, s.horizontal_edge_distance(c.x, c.y));
        }
        d.vertical.push_back(std::max(0.0, bottom - support));
        d.horizontal.push_back(std::isfinite(horizontal) ? horizontal : 0.0);
        d.table.push_back(convex_distance(held.body(), table_body).distance);
        d.goal.push_back(norm(c - ctx.goal_pose.position));
    }
    return d;
}

std::array<double, kObjEnvDims> phi_obj_env(const Context& ctx, const SweptGeometry& g) {
    if (g.size() < kMinWaypoints) throw ContractError("phi_obj_env needs at least 9 waypoints");
    const SurfaceDistances d = surface_distances(ctx, g);
    std::array<double, kObjEnvDims> out{};
    std::size_t k = 0;
    const auto thirds = time_thirds(g.size());
    auto min_in = [](const std::vector<double>& v, std::size_t b, std::size_t e) {
        return *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(b), v.begin() + static_cast<std::ptrdiff_t>(e));
    };
    for (const auto& [b, e] : thirds) {
        out[k++] = min_in(d.vertical, b, e);
        out[k++] = min_in(d.horizontal, b, e);
        out[k++] = min_in(d.table, b, e);
        out[k++] = min_in(d.goal, b, e);
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    out[k++] = mean(d.vertical);
    out[k++] = mean(d.horizontal);
    for (const auto& [b, e] : thirds) {
        const BandPower bp = psd_band(std::span<const double>(d.vertical).subspan(b, e - b));
        out[k++] = bp.low;
        out[k++] = bp.high;
    }
    return out;
}

std::array<double, kObjEnvDims> phi_obj_env(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    return phi_obj_env(ctx, sweep(arm, ctx, y));
}

std::array<double, kEnvDims> phi_E(const Context& ctx, const SweptGeometry& g) {
    std::array<double, kEnvDims> out{};
    const auto env = phi_obj_env(ctx, g);
    const auto obj = phi_obj(ctx, g);
    const auto robot = phi_robot(g);
    std::copy(env.begin(), env.end(), out.begin() + kObjEnvOffset);
    std::copy(obj.begin(), obj.end(), out.begin() + kObjOffset);
    std::copy(robot.begin(), robot.end(), out.begin() + kRobotOffset);
    return out;
}

std::array<double, kEnvDims> phi_E(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    return phi_E(ctx, sweep(arm, ctx, y));
}

std::vector<double> FeatureVector::flat() const {
    std::vector<double> out(phi_O);
    out.insert(out.end(), phi_E.begin(), phi_E.end());
    return out;
}

FeatureVector FeatureVector::from_flat(std::span<const double> flat, std::size_t m) {
    const std::size_t no = object_feature_dims(m);
    if (flat.size() != no + kEnvDims) throw ContractError("feature vector length does not match 4M²+75");
    FeatureVector f;
    f.phi_O.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(no));
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(no), flat.end(), f.phi_E.begin());
    return f;
}

FeatureVector compute_features(const Context& ctx, const SweptGeometry& g, const FeatureConfig& cfg) {
    FeatureVector f;
    f.phi_O = phi_O(ctx, g, cfg);
    f.phi_E = phi_E(ctx, g);
    return f;
}

FeatureVector compute_features(const ArmModel& arm, const Context& ctx, const Trajectory& y, const FeatureConfig& cfg) {
    return compute_features(ctx, sweep(arm, ctx, y), cfg);
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string feature_csv_header(std::size_t m) {
    std::string out = "context_id,trajectory_id";
    const std::size_t n = object_feature_dims(m) + kEnvDims;
    for (std::size_t i = 0; i < n; ++i) out += ",phi" + std::to_string(i);
    return out;
}

std::string feature_csv_row(const std::string& context_id, int trajectory_id, const FeatureVector& f) {
    std::string out = context_id + "," + std::to_string(trajectory_id);
    for (double v : f.flat()) out += "," + format_double(v);
    return out;
}

}  // namespace coactive
