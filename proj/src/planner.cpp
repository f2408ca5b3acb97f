#include "coactive/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "coactive/errors.hpp"
#include "coactive/random.hpp"

namespace coactive {

void PlannerConfig::validate() const {
    if (n_samples < 1) throw ConfigError("planner.n_samples must be >= 1");
    if (waypoint_count < static_cast<int>(kMinWaypoints)) throw ConfigError("planner.waypoint_count must be >= 9");
    if (!(step_size > 0.0)) throw ConfigError("planner.step_size must be > 0");
    if (max_iterations < 1) throw ConfigError("planner.max_iterations must be >= 1");
    if (!(edge_resolution > 0.0)) throw ConfigError("planner.edge_resolution must be > 0");
    if (max_via_points < 0) throw ConfigError("planner.max_via_points must be >= 0");
}

CollisionWorld::CollisionWorld(const Context& ctx, const ArmModel& arm)
    : ctx_(&ctx), arm_(&arm), held_shape_(ctx.manipulated().shape_pose.shape) {
    for (const auto& o : ctx.objects) {
        if (o.id != ctx.manipulated_id) obstacles_.push_back(o.shape_pose.body());
    }
    for (const auto& h : ctx.human_regions) obstacles_.push_back(h.body());
    for (const auto& s : ctx.surfaces) surfaces_.push_back(s.body());
}

namespace {

bool near_config(const JointVector& a, const JointVector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > 1e-9) return false;
    }
    return true;
}

double distance(const JointVector& a, const JointVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

JointVector lerp(const JointVector& a, const JointVector& b, double t) {
    JointVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + (b[i] - a[i]) * t;
    return out;
}

}  // namespace

bool CollisionWorld::is_collision_free(const JointVector& q) const {
    const ArmFrames f = forward_kinematics(*arm_, q);
    const ShapePose held{held_shape_, end_effector_pose(f).compose(ctx_->grasp_transform)};
    const std::array<ConvexBody, 4> moving{
        ConvexBody::capsule(f.shoulder, f.elbow, arm_->link_radius),
        ConvexBody::capsule(f.elbow, f.wrist, arm_->link_radius),
        ConvexBody::capsule(f.wrist, f.end_effector, arm_->link_radius),
        held.body(),
    };
    for (const auto& body : moving) {
        for (const auto& obstacle : obstacles_) {
            if (convex_intersects(body, obstacle)) return false;
        }
    }
    // Resting contact with a surface is allowed at the task endpoints.
    const bool resting = near_config(q, ctx_->start_config) || near_config(q, ctx_->goal_config);
    if (!resting) {
        for (const auto& body : moving) {
            for (const auto& s : surfaces_) {
                if (convex_intersects(body, s)) return false;
            }
        }
    }
    return true;
}

bool CollisionWorld::is_motion_free(const JointVector& a, const JointVector& b, double resolution) const {
    const double len = distance(a, b);
    const int steps = static_cast<int>(std::ceil(len / resolution));
    for (int i = 1; i < steps; ++i) {
        if (!is_collision_free(lerp(a, b, static_cast<double>(i) / steps))) return false;
    }
    return true;
}

bool is_collision_free(const JointVector& q, const Context& ctx, const ArmModel& arm) {
    return CollisionWorld(ctx, arm).is_collision_free(q);
}

namespace {

struct Tree {
    std::vector<JointVector> nodes;
    std::vector<int> parent;

    int nearest(const JointVector& q) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double d = distance(nodes[i], q);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        return best;
    }

    int add(JointVector q, int p) {
        nodes.push_back(std::move(q));
        parent.push_back(p);
        return static_cast<int>(nodes.size()) - 1;
    }

    std::vector<JointVector> path_to_root(int idx) const {
        std::vector<JointVector> out;
        for (int i = idx; i >= 0; i = parent[static_cast<std::size_t>(i)]) out.push_back(nodes[static_cast<std::size_t>(i)]);
        return out;
    }
};

enum class Extend { trapped, advanced, reached };

class Planner {
public:
    Planner(const CollisionWorld& world, const PlannerConfig& cfg, Rng& rng)
        : world_(world), cfg_(cfg), rng_(rng), limits_(world.arm().joint_limits) {}

    JointVector random_config() {
        JointVector q(limits_.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            q[i] = std::uniform_real_distribution<double>(limits_[i].first, limits_[i].second)(rng_);
        }
        return q;
    }

    Extend extend(Tree& tree, const JointVector& target, int& new_index) {
        const int near = tree.nearest(target);
        const JointVector& from = tree.nodes[static_cast<std::size_t>(near)];
        const double d = distance(from, target);
        JointVector to = d <= cfg_.step_size ? target : lerp(from, target, cfg_.step_size / d);
        if (!world_.is_collision_free(to) || !world_.is_motion_free(from, to, cfg_.edge_resolution)) {
            return Extend::trapped;
        }
        new_index = tree.add(std::move(to), near);
        return d <= cfg_.step_size ? Extend::reached : Extend::advanced;
    }

    Extend connect(Tree& tree, const JointVector& target, int& new_index) {
        Extend e = Extend::advanced;
        while (e == Extend::advanced) e = extend(tree, target, new_index);
        return e;
    }

    /// Returns a polyline from a to b, or nullopt when the budget runs out.
    std::optional<std::vector<JointVector>> query(const JointVector& a, const JointVector& b, int& budget) {
        if (world_.is_motion_free(a, b, cfg_.edge_resolution)) return std::vector<JointVector>{a, b};
        return cfg_.algorithm == PlannerAlgorithm::birrt ? birrt(a, b, budget) : rrt(a, b, budget);
    }

    std::optional<std::vector<JointVector>> birrt(const JointVector& a, const JointVector& b, int& budget) {
        Tree ta, tb;
        ta.add(a, -1);
        tb.add(b, -1);
        bool a_is_start = true;
        while (budget-- > 0) {
            const JointVector q_rand = random_config();
            int new_a = -1;
            if (extend(ta, q_rand, new_a) != Extend::trapped) {
                int new_b = -1;
                if (connect(tb, ta.nodes[static_cast<std::size_t>(new_a)], new_b) == Extend::reached) {
                    auto pa = ta.path_to_root(new_a);
                    auto pb = tb.path_to_root(new_b);
                    std::reverse(pa.begin(), pa.end());
                    pa.insert(pa.end(), pb.begin() + 1, pb.end());
                    if (!a_is_start) std::reverse(pa.begin(), pa.end());
                    return pa;
                }
            }
            std::swap(ta, tb);
            a_is_start = !a_is_start;
        }
        return std::nullopt;
    }

    std::optional<std::vector<JointVector>> rrt(const JointVector& a, const JointVector& b, int& budget) {
        Tree tree;
        tree.add(a, -1);
        constexpr double kGoalBias = 0.1;
        while (budget-- > 0) {
            const JointVector target = uniform01(rng_) < kGoalBias ? b : random_config();
            int idx = -1;
            if (extend(tree, target, idx) == Extend::trapped) continue;
            const JointVector& q = tree.nodes[static_cast<std::size_t>(idx)];
            if (distance(q, b) <= cfg_.step_size && world_.is_motion_free(q, b, cfg_.edge_resolution)) {
                auto path = tree.path_to_root(idx);
                std::reverse(path.begin(), path.end());
                if (!near_config(path.back(), b)) path.push_back(b);
                return path;
            }
        }
        return std::nullopt;
    }

    std::vector<JointVector> densify(const std::vector<JointVector>& path) const {
        std::vector<JointVector> out{path.front()};
        for (std::size_t i = 1; i < path.size(); ++i) {
            const int steps = std::max(1, static_cast<int>(std::ceil(distance(path[i - 1], path[i]) / cfg_.step_size)));
            for (int k = 1; k <= steps; ++k) out.push_back(lerp(path[i - 1], path[i], static_cast<double>(k) / steps));
        }
        return out;
    }

    void shortcut(std::vector<JointVector>& path, double accept) {
        for (int pass = 0; pass < cfg_.shortcut_passes && path.size() > 2; ++pass) {
            const auto n = static_cast<int>(path.size());
            int i = std::uniform_int_distribution<int>(0, n - 1)(rng_);
            int j = std::uniform_int_distribution<int>(0, n - 1)(rng_);
            if (i > j) std::swap(i, j);
            if (j - i < 2) continue;
            const bool take = uniform01(rng_) < accept;
            if (!take) continue;
            if (!world_.is_motion_free(path[static_cast<std::size_t>(i)], path[static_cast<std::size_t>(j)],
                                       cfg_.edge_resolution)) {
                continue;
            }
            path.erase(path.begin() + i + 1, path.begin() + j);
        }
    }

    JointVector random_via(const JointVector& a, const JointVector& b) {
        const double t = std::uniform_real_distribution<double>(0.2, 0.8)(rng_);
        JointVector q = lerp(a, b, t);
        for (std::size_t i = 0; i < q.size(); ++i) {
            q[i] += std::uniform_real_distribution<double>(-cfg_.via_spread, cfg_.via_spread)(rng_);
            q[i] = std::clamp(q[i], limits_[i].first, limits_[i].second);
        }
        return q;
    }

private:
    const CollisionWorld& world_;
    const PlannerConfig& cfg_;
    Rng& rng_;
    const std::vector<std::pair<double, double>>& limits_;
};

std::optional<Trajectory> attempt(const CollisionWorld& world, const PlannerConfig& cfg, Rng& rng, int via_cap,
                                  double accept, int& budget) {
    const Context& ctx = world.context();
    Planner planner(world, cfg, rng);

    std::vector<JointVector> anchors{ctx.start_config};
    const int vias = via_cap > 0 ? std::uniform_int_distribution<int>(1, via_cap)(rng) : 0;
    for (int v = 0; v < vias; ++v) {
        const double lo = static_cast<double>(v) / vias, hi = static_cast<double>(v + 1) / vias;
        const JointVector base_a = lerp(ctx.start_config, ctx.goal_config, lo);
        const JointVector base_b = lerp(ctx.start_config, ctx.goal_config, hi);
        // A few draws; a colliding via is simply skipped.
        for (int tries = 0; tries < 20; ++tries) {
            JointVector q = planner.random_via(base_a, base_b);
            if (world.is_collision_free(q)) {
                anchors.push_back(std::move(q));
                break;
            }
        }
    }
    anchors.push_back(ctx.goal_config);

    std::vector<JointVector> path{anchors.front()};
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        auto leg = planner.query(anchors[i - 1], anchors[i], budget);
        if (!leg) return std::nullopt;
        path.insert(path.end(), leg->begin() + 1, leg->end());
    }
    path = planner.densify(path);
    planner.shortcut(path, accept);

    Trajectory y;
    y.context_id = ctx.id;
    y.waypoints = resample_path(path, cfg.waypoint_count);
    y.waypoints.front() = ctx.start_config;
    y.waypoints.back() = ctx.goal_config;
    for (std::size_t i = 1; i + 1 < y.waypoints.size(); ++i) {
        if (!world.is_collision_free(y.waypoints[i])) return std::nullopt;
    }
    return y;
}

Trajectory plan_slot(const CollisionWorld& world, const PlannerConfig& cfg, std::uint64_t seed, int index, int via_cap,
                     double accept) {
    constexpr int kAttempts = 8;
    int budget = cfg.max_iterations;
    for (int a = 0; a < kAttempts && budget > 0; ++a) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index) * 64 + static_cast<std::uint64_t>(a)));
        if (auto y = attempt(world, cfg, rng, via_cap, accept, budget)) return *y;
    }
    throw PlannerError("planner: iteration budget exhausted for sample " + std::to_string(index), index);
}

}  // namespace

std::vector<JointVector> resample_path(const std::vector<JointVector>& path, int count) {
    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < path.size(); ++i) cum.push_back(cum.back() + distance(path[i - 1], path[i]));
    const double total = cum.back();
    std::vector<JointVector> out;
    out.reserve(static_cast<std::size_t>(count));
    std::size_t seg = 1;
    for (int k = 0; k < count; ++k) {
        if (total <= 0.0 || path.size() == 1) {
            out.push_back(path.front());
            continue;
        }
        const double s = total * k / (count - 1);
        while (seg + 1 < path.size() && cum[seg] < s) ++seg;
        const double len = cum[seg] - cum[seg - 1];
        const double t = len > 0.0 ? std::clamp((s - cum[seg - 1]) / len, 0.0, 1.0) : 0.0;
        out.push_back(lerp(path[seg - 1], path[seg], t));
    }
    return out;
}

Trajectory sample_trajectory(const CollisionWorld& world, const PlannerConfig& cfg, int index) {
    return plan_slot(world, cfg, cfg.seed, index, cfg.max_via_points, cfg.shortcut_accept);
}

std::vector<Trajectory> sample_trajectories(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm) {
    cfg.validate();
    const CollisionWorld world(ctx, arm);
    if (!world.is_collision_free(ctx.start_config) || !world.is_collision_free(ctx.goal_config)) {
        throw PlannerError("planner: start or goal configuration is in collision", -1);
    }
    std::vector<Trajectory> out;
    out.reserve(static_cast<std::size_t>(cfg.n_samples));
    for (int i = 0; i < cfg.n_samples; ++i) out.push_back(sample_trajectory(world, cfg, i));
    return out;
}

Trajectory plan_geometric(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm) {
    cfg.validate();
    const CollisionWorld world(ctx, arm);
    PlannerConfig full = cfg;
    full.shortcut_passes = std::max(cfg.shortcut_passes, 50);
    return plan_slot(world, full, derive_seed(cfg.seed, 0x6e0ULL), 0, 0, 1.0);
}

}  // namespace coactive
