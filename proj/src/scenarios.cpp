#include "coactive/scenarios.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "coactive/errors.hpp"

namespace coactive {

namespace {

constexpr double kTableTop = 0.75;
constexpr double kRestGap = 0.015;  // object bottom above the table at start/goal
constexpr double kGraspGap = 0.03;  // ee to object top

// heavy, fragile, sharp, hot, liquid, electronic
using Labels = std::array<int, 6>;

struct Item {
    const char* name;
    Shape shape;
    Labels labels;
};

double half_height(const Shape& s) {
    if (const auto* sp = std::get_if<Sphere>(&s)) return sp->radius;
    if (const auto* b = std::get_if<Box>(&s)) return b->half_extents.z;
    return std::get<Cylinder>(s).half_height;
}

const Item& manipulated_item(Family f, int o) {
    static const std::array<std::array<Item, kObjectVariants>, 3> items{{
        {{
            {"cereal_box", Box{{0.035, 0.07, 0.10}}, {1, 0, 0, 0, 0, 0}},
            {"peach", Sphere{0.045}, {0, 1, 0, 0, 0, 0}},
            {"soup_can", Cylinder{0.04, 0.055}, {1, 0, 0, 0, 1, 0}},
        }},
        {{
            {"egg_carton", Box{{0.08, 0.05, 0.035}}, {0, 1, 0, 0, 0, 0}},
            {"wine_glass", Cylinder{0.04, 0.09}, {0, 1, 0, 0, 1, 0}},
            {"flower_vase", Cylinder{0.05, 0.11}, {1, 1, 0, 0, 1, 0}},
        }},
        {{
            {"knife", Box{{0.10, 0.015, 0.012}}, {0, 0, 1, 0, 0, 0}},
            {"scissors", Box{{0.07, 0.035, 0.012}}, {0, 0, 1, 0, 0, 0}},
            {"hot_coffee", Cylinder{0.045, 0.06}, {0, 0, 0, 1, 1, 0}},
        }},
    }};
    return items[static_cast<std::size_t>(f)][static_cast<std::size_t>(o)];
}

struct Placed {
    Item item;
    double x, y, yaw;
};

std::vector<Placed> clutter(int e) {
    switch (e) {
        case 0:
            return {
                {{"laptop", Box{{0.12, 0.09, 0.012}}, {0, 1, 0, 0, 0, 1}}, 0.45, 0.02, 0.1},
                {{"water_bottle", Cylinder{0.035, 0.11}, {0, 0, 0, 0, 1, 0}}, 0.66, 0.12, 0.0},
                {{"bread", Box{{0.09, 0.05, 0.045}}, {0, 0, 0, 0, 0, 0}}, 0.27, -0.10, 0.4},
            };
        case 1:
            return {
                {{"glass_bowl", Cylinder{0.08, 0.035}, {0, 1, 0, 0, 0, 0}}, 0.40, 0.04, 0.0},
                {{"skillet", Box{{0.11, 0.11, 0.02}}, {1, 0, 0, 1, 0, 0}}, 0.62, -0.08, 0.3},
                {{"olive_oil", Cylinder{0.03, 0.12}, {0, 1, 0, 0, 1, 0}}, 0.30, 0.14, 0.0},
            };
        default:
            return {
                {{"tablet", Box{{0.10, 0.07, 0.008}}, {0, 1, 0, 0, 0, 1}}, 0.52, -0.04, -0.2},
                {{"knife_block", Box{{0.05, 0.04, 0.10}}, {1, 0, 1, 0, 0, 0}}, 0.33, 0.06, 0.2},
                {{"teapot", Cylinder{0.07, 0.07}, {0, 1, 0, 1, 1, 0}}, 0.68, 0.10, 0.0},
            };
    }
}

// Start/goal object positions in the table plane for each environment variant.
struct Placement {
    double sx, sy, gx, gy;
};

Placement placement(int e) {
    static const std::array<Placement, kEnvVariants> p{{
        {0.42, 0.34, 0.46, -0.32},
        {0.50, 0.33, 0.40, -0.34},
        {0.40, 0.36, 0.50, -0.30},
    }};
    return p[static_cast<std::size_t>(e)];
}

ObjectInstance make_object(const Item& item, const Vec3& position, double yaw, std::string id) {
    ObjectInstance o;
    o.id = std::move(id);
    o.shape_pose.shape = item.shape;
    o.shape_pose.pose.position = position;
    o.shape_pose.pose.orientation = Quaternion::from_matrix(Mat3::rot_z(yaw));
    o.attributes.labels.assign(item.labels.begin(), item.labels.end());
    return o;
}

std::vector<ShapePose> humans(Family f, int e) {
    if (f != Family::human) return {};
    ShapePose torso;
    torso.shape = Sphere{0.22};
    const double dy = e == 0 ? -0.05 : e == 1 ? 0.05 : -0.15;
    torso.pose.position = {0.98, dy, 1.05};
    return {torso};
}

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
        case Family::manipulation: return "manipulation";
        case Family::environment: return "environment";
        case Family::human: return "human";
    }
    return "?";
}

Family family_from_string(std::string_view s) {
    if (s == "manipulation") return Family::manipulation;
    if (s == "environment") return Family::environment;
    if (s == "human") return Family::human;
    throw ConfigError("unknown activity family '" + std::string(s) + "'");
}

std::string TaskKey::id() const {
    return std::string(to_string(family)) + "-o" + std::to_string(object_variant) + "-e" + std::to_string(env_variant);
}

ArmModel scenario_arm() { return ArmModel::standard({0.0, 0.0, 1.05}); }

JointVector upright_ik(const ArmModel& arm, const Vec3& ee, bool elbow_up) {
    const Vec3 rel = ee - arm.shoulder;
    const double q0 = std::atan2(rel.y, rel.x);
    const double rho = std::hypot(rel.x, rel.y) - arm.ee_offset;
    const double h = rel.z;
    const double l1 = arm.upper_arm, l2 = arm.forearm;
    const double d = (rho * rho + h * h - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if (d < -1.0 || d > 1.0) throw DomainError("upright_ik: target out of reach");
    // With the pitch convention used here a negative elbow angle bends the elbow upward.
    const double q2 = elbow_up ? -std::acos(d) : std::acos(d);
    const double q1 = std::atan2(h, rho) - std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
    JointVector q{q0, q1, q2, 0.0, -(q1 + q2), 0.0};
    if (!arm.within_limits(q)) throw DomainError("upright_ik: solution violates joint limits");
    return q;
}

Context make_task(const TaskKey& key, const ArmModel& arm) {
    if (key.object_variant < 0 || key.object_variant >= kObjectVariants || key.env_variant < 0 ||
        key.env_variant >= kEnvVariants) {
        throw ConfigError("task variant out of range: " + key.id());
    }
    Context ctx;
    ctx.id = key.id();
    ctx.properties = default_property_names();

    ctx.surfaces.push_back({{0.50, 0.0, kTableTop}, 0.40, 0.75, SurfaceKind::table});
    ctx.surfaces.push_back({{0.45, 0.98, 0.70}, 0.30, 0.22, SurfaceKind::checkout});
    if (key.env_variant == 2) ctx.surfaces.push_back({{0.30, -0.95, 0.95}, 0.15, 0.18, SurfaceKind::shelf});

    const Item& held = manipulated_item(key.family, key.object_variant);
    const double hh = half_height(held.shape);
    const double z_obj = kTableTop + kRestGap + hh;
    const Placement pl = placement(key.env_variant);

    ctx.grasp_transform.position = {0.0, 0.0, -(hh + kGraspGap)};
    ctx.start_config = upright_ik(arm, {pl.sx, pl.sy, z_obj + hh + kGraspGap});
    ctx.goal_config = upright_ik(arm, {pl.gx, pl.gy, z_obj + hh + kGraspGap});

    const Pose start_pose = object_pose_at(arm, ctx.start_config, ctx);
    ctx.goal_pose = object_pose_at(arm, ctx.goal_config, ctx);

    ObjectInstance m;
    m.id = held.name;
    m.shape_pose.shape = held.shape;
    m.shape_pose.pose = start_pose;
    m.attributes.labels.assign(held.labels.begin(), held.labels.end());
    ctx.manipulated_id = m.id;
    ctx.objects.push_back(std::move(m));

    for (const Placed& p : clutter(key.env_variant)) {
        const double z = kTableTop + half_height(p.item.shape);
        ctx.objects.push_back(make_object(p.item, {p.x, p.y, z}, p.yaw, p.item.name));
    }
    ctx.human_regions = humans(key.family, key.env_variant);
    validate_context(ctx);
    return ctx;
}

std::optional<TaskKey> parse_task_id(std::string_view id) {
    if (id == "grocery_knife") return TaskKey{Family::human, 0, 0};
    const auto dash = id.find("-o");
    if (dash == std::string_view::npos) return std::nullopt;
    const auto e_pos = id.find("-e", dash + 2);
    if (e_pos == std::string_view::npos) return std::nullopt;
    TaskKey key;
    try {
        key.family = family_from_string(id.substr(0, dash));
    } catch (const ConfigError&) {
        return std::nullopt;
    }
    const auto o_str = id.substr(dash + 2, e_pos - dash - 2);
    const auto e_str = id.substr(e_pos + 2);
    auto parse = [](std::string_view s, int& out) {
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
    };
    if (!parse(o_str, key.object_variant) || !parse(e_str, key.env_variant)) return std::nullopt;
    if (key.object_variant < 0 || key.object_variant >= kObjectVariants) return std::nullopt;
    if (key.env_variant < 0 || key.env_variant >= kEnvVariants) return std::nullopt;
    return key;
}

Context make_task(std::string_view id, const ArmModel& arm) {
    if (id == "grocery_knife") return grocery_knife(arm);
    const auto key = parse_task_id(id);
    if (!key) throw ConfigError("unknown task id '" + std::string(id) + "'");
    return make_task(*key, arm);
}

Context grocery_knife(const ArmModel& arm) {
    Context ctx = make_task(TaskKey{Family::human, 0, 0}, arm);
    ctx.id = "grocery_knife";
    return ctx;
}

std::vector<std::string> task_ids() {
    std::vector<std::string> out;
    for (Family f : {Family::manipulation, Family::environment, Family::human}) {
        for (int o = 0; o < kObjectVariants; ++o) {
            for (int e = 0; e < kEnvVariants; ++e) out.push_back(TaskKey{f, o, e}.id());
        }
    }
    out.push_back("grocery_knife");
    return out;
}

std::vector<TaskKey> default_dataset_tasks() {
    return {
        {Family::manipulation, 0, 0}, {Family::manipulation, 1, 1}, {Family::manipulation, 2, 2},
        {Family::manipulation, 0, 2},

        {Family::environment, 0, 0},  {Family::environment, 1, 1},  {Family::environment, 2, 2},
        {Family::environment, 1, 0},

        {Family::human, 0, 0},        {Family::human, 1, 1},        {Family::human, 2, 2},
        {Family::human, 0, 1},        {Family::human, 2, 0},
    };
}

ScenarioSplit scenario_split(std::string_view name) {
    const auto colon = name.find(':');
    const std::string_view fam = name.substr(0, colon);
    const std::string_view kind = colon == std::string_view::npos ? "all" : name.substr(colon + 1);
    ScenarioSplit s;
    s.name = std::string(name);
    s.family = family_from_string(fam);
    auto add = [&](std::vector<TaskKey>& v, int o, int e) { v.push_back({s.family, o, e}); };
    if (kind == "new_object") {
        for (int o = 0; o < 2; ++o)
            for (int e = 0; e < 2; ++e) add(s.source, o, e);
        for (int e = 0; e < 2; ++e) add(s.target, 2, e);
    } else if (kind == "new_environment") {
        for (int o = 0; o < 2; ++o)
            for (int e = 0; e < 2; ++e) add(s.source, o, e);
        for (int o = 0; o < 2; ++o) add(s.target, o, 2);
    } else if (kind == "both") {
        for (int o = 0; o < 2; ++o)
            for (int e = 0; e < 2; ++e) add(s.source, o, e);
        add(s.target, 2, 2);
    } else if (kind == "all") {
        for (int o = 0; o < 2; ++o)
            for (int e = 0; e < 2; ++e) add(s.source, o, e);
        for (int o = 0; o < kObjectVariants; ++o)
            for (int e = 0; e < kEnvVariants; ++e)
                if (o == 2 || e == 2) add(s.target, o, e);
    } else {
        throw ConfigError("unknown scenario split '" + std::string(kind) + "'");
    }
    return s;
}

RuleSet expert_rules(Family f) {
    // Same rule family as the manual baseline, different emphasis: these users
    // care about things the hand-coded rules ignore (clearance, smoothness,
    // spills, lifting heavy items high).
    RuleSet r;
    r.hazard_human = 0.0;
    r.fragile_low = 0.0;
    r.path_length = 0.0;
    switch (f) {
        case Family::manipulation:
            r.upright = 0.5;
            r.liquid_upright = 2.0;
            r.fragile_low = 3.0;
            r.clearance = 10.0;
            r.clearance_cap = 0.1;
            r.contortion = 0.3;
            r.roughness = 12.0;
            r.height_cap = 0.12;
            r.height_penalty = 1.0;
            break;
        case Family::environment:
            r.upright = 0.5;
            r.fragile_low = 3.0;
            r.clearance = 8.0;
            r.clearance_cap = 0.12;
            r.contortion = 0.2;
            r.path_length = 0.05;
            r.height_cap = 0.2;
            r.height_penalty = 1.0;
            break;
        case Family::human:
            r.upright = 0.3;
            r.liquid_upright = 1.0;
            r.hazard_human = 1.5;
            r.human_scale = 0.06;
            r.clearance = 6.0;
            r.clearance_cap = 0.1;
            r.contortion = 1.5;
            r.roughness = 10.0;
            break;
    }
    return r;
}

}  // namespace coactive
