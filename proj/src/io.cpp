#include "coactive/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "coactive/errors.hpp"

namespace coactive {
namespace {

const Json& field(const Json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + (path.empty() ? "" : ".") + key + ": missing field");
    return *it;
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

double number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ParseError(path + ": expected a number");
    return j.get<double>();
}

std::vector<double> numbers(const Json& j, const std::string& path, std::size_t expected = 0) {
    if (!j.is_array()) throw ParseError(path + ": expected an array of numbers");
    if (expected != 0 && j.size() != expected) {
        throw ParseError(path + ": expected " + std::to_string(expected) + " entries");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

Vec3 vec3(const Json& j, const std::string& path) {
    const auto v = numbers(j, path, 3);
    return {v[0], v[1], v[2]};
}

std::string string_field(const Json& obj, const char* key, const std::string& path) {
    const Json& j = field(obj, key, path);
    if (!j.is_string()) throw ParseError(join(path, key) + ": expected a string");
    return j.get<std::string>();
}

Json vec3_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

Json shape_to_json(const Shape& shape) {
    return std::visit(
        [](const auto& s) -> Json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return {{"type", "sphere"}, {"radius", s.radius}};
            } else if constexpr (std::is_same_v<T, Box>) {
                return {{"type", "box"}, {"half_extents", vec3_json(s.half_extents)}};
            } else {
                return {{"type", "cylinder"}, {"radius", s.radius}, {"half_height", s.half_height}};
            }
        },
        shape);
}

Shape shape_from_json(const Json& j, const std::string& path) {
    const std::string type = string_field(j, "type", path);
    if (type == "sphere") return Sphere{number(field(j, "radius", path), join(path, "radius"))};
    if (type == "box") return Box{vec3(field(j, "half_extents", path), join(path, "half_extents"))};
    if (type == "cylinder") {
        return Cylinder{number(field(j, "radius", path), join(path, "radius")),
                        number(field(j, "half_height", path), join(path, "half_height"))};
    }
    throw ParseError(join(path, "type") + ": unknown shape type '" + type + "'");
}

Json shape_pose_to_json(const ShapePose& sp) { return {{"shape", shape_to_json(sp.shape)}, {"pose", pose_to_json(sp.pose)}}; }

ShapePose shape_pose_from_json(const Json& j, const std::string& path) {
    ShapePose sp;
    sp.shape = shape_from_json(field(j, "shape", path), join(path, "shape"));
    sp.pose = pose_from_json(field(j, "pose", path), join(path, "pose"));
    return sp;
}

std::vector<std::string> canonical_order(const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& d : default_property_names()) {
        if (std::find(names.begin(), names.end(), d) != names.end()) out.push_back(d);
    }
    std::vector<std::string> extra;
    for (const auto& n : names) {
        if (std::find(out.begin(), out.end(), n) == out.end()) extra.push_back(n);
    }
    std::sort(extra.begin(), extra.end());
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

}  // namespace

Json pose_to_json(const Pose& p) {
    const auto& q = p.orientation;
    return {{"position", vec3_json(p.position)}, {"orientation", Json::array({q.w, q.x, q.y, q.z})}};
}

Pose pose_from_json(const Json& j, const std::string& path) {
    Pose p;
    p.position = vec3(field(j, "position", path), join(path, "position"));
    const auto q = numbers(field(j, "orientation", path), join(path, "orientation"), 4);
    p.orientation = {q[0], q[1], q[2], q[3]};
    return p;
}

Context context_from_json(const Json& doc) {
    if (!doc.is_object()) throw ParseError("document: expected a JSON object");
    if (auto it = doc.find("schema"); it != doc.end() && *it != kContextSchema) {
        throw ParseError("schema: expected 'context.v1'");
    }
    Context ctx;
    ctx.id = string_field(doc, "id", "");

    const Json& props = field(doc, "properties", "");
    if (!props.is_array()) throw ParseError("properties: expected an array of names");
    std::vector<std::string> names;
    for (const auto& p : props) {
        if (!p.is_string()) throw ParseError("properties: expected an array of names");
        names.push_back(p.get<std::string>());
    }
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size()) {
        throw InvariantError("properties: duplicate property name");
    }
    ctx.properties = canonical_order(names);
    std::vector<std::size_t> source_index;
    for (const auto& n : ctx.properties) {
        source_index.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin()));
    }

    const Json& objects = field(doc, "objects", "");
    if (!objects.is_array()) throw ParseError("objects: expected an array");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const std::string path = "objects[" + std::to_string(i) + "]";
        const Json& o = objects[i];
        ObjectInstance obj;
        obj.id = string_field(o, "id", path);
        obj.shape_pose.shape = shape_from_json(field(o, "shape", path), join(path, "shape"));
        obj.shape_pose.pose = pose_from_json(field(o, "pose", path), join(path, "pose"));
        const auto labels = numbers(field(o, "attributes", path), join(path, "attributes"));
        if (labels.size() != names.size()) {
            throw InvariantError(join(path, "attributes") + ": has " + std::to_string(labels.size()) +
                                 " labels, expected " + std::to_string(names.size()));
        }
        for (std::size_t k : source_index) obj.attributes.labels.push_back(static_cast<int>(labels[k]));
        for (std::size_t k = 0; k < labels.size(); ++k) {
            if (labels[k] != 0.0 && labels[k] != 1.0) throw InvariantError(join(path, "attributes") + ": labels must be 0 or 1");
        }
        if (auto it = o.find("vertical_axis"); it != o.end()) obj.vertical_axis = vec3(*it, join(path, "vertical_axis"));
        ctx.objects.push_back(std::move(obj));
    }

    const Json& surfaces = field(doc, "surfaces", "");
    if (!surfaces.is_array()) throw ParseError("surfaces: expected an array");
    for (std::size_t i = 0; i < surfaces.size(); ++i) {
        const std::string path = "surfaces[" + std::to_string(i) + "]";
        Surface s;
        s.kind = surface_kind_from_string(string_field(surfaces[i], "kind", path));
        s.center = vec3(field(surfaces[i], "center", path), join(path, "center"));
        const auto he = numbers(field(surfaces[i], "half_extents", path), join(path, "half_extents"), 2);
        s.half_x = he[0];
        s.half_y = he[1];
        ctx.surfaces.push_back(s);
    }

    const Json& humans = field(doc, "human_regions", "");
    if (!humans.is_array()) throw ParseError("human_regions: expected an array");
    for (std::size_t i = 0; i < humans.size(); ++i) {
        ctx.human_regions.push_back(shape_pose_from_json(humans[i], "human_regions[" + std::to_string(i) + "]"));
    }

    ctx.manipulated_id = string_field(doc, "manipulated_id", "");
    ctx.start_config = numbers(field(doc, "start_config", ""), "start_config");
    ctx.goal_config = numbers(field(doc, "goal_config", ""), "goal_config");
    ctx.goal_pose = pose_from_json(field(doc, "goal_pose", ""), "goal_pose");
    ctx.grasp_transform = pose_from_json(field(doc, "grasp_transform", ""), "grasp_transform");

    validate_context(ctx);
    return ctx;
}

Context load_context(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("document: invalid JSON: ") + e.what());
    }
    return context_from_json(doc);
}

Json context_to_json(const Context& ctx) {
    Json objects = Json::array();
    for (const auto& o : ctx.objects) {
        objects.push_back({{"id", o.id},
                           {"shape", shape_to_json(o.shape_pose.shape)},
                           {"pose", pose_to_json(o.shape_pose.pose)},
                           {"attributes", o.attributes.labels},
                           {"vertical_axis", vec3_json(o.vertical_axis)}});
    }
    Json surfaces = Json::array();
    for (const auto& s : ctx.surfaces) {
        surfaces.push_back({{"kind", std::string(to_string(s.kind))},
                            {"center", vec3_json(s.center)},
                            {"half_extents", Json::array({s.half_x, s.half_y})}});
    }
    Json humans = Json::array();
    for (const auto& h : ctx.human_regions) humans.push_back(shape_pose_to_json(h));
    return {{"schema", std::string(kContextSchema)},
            {"id", ctx.id},
            {"properties", ctx.properties},
            {"objects", objects},
            {"surfaces", surfaces},
            {"human_regions", humans},
            {"manipulated_id", ctx.manipulated_id},
            {"start_config", ctx.start_config},
            {"goal_config", ctx.goal_config},
            {"goal_pose", pose_to_json(ctx.goal_pose)},
            {"grasp_transform", pose_to_json(ctx.grasp_transform)}};
}

std::string serialize_context(const Context& ctx) { return context_to_json(ctx).dump(2); }

Trajectory trajectory_from_json(const Json& doc) {
    if (!doc.is_object()) throw ParseError("document: expected a JSON object");
    if (auto it = doc.find("schema"); it != doc.end() && *it != kTrajectorySchema) {
        throw ParseError("schema: expected 'trajectory.v1'");
    }
    Trajectory y;
    y.context_id = string_field(doc, "context_id", "");
    const Json& wps = field(doc, "waypoints", "");
    if (!wps.is_array()) throw ParseError("waypoints: expected an array of joint vectors");
    for (std::size_t i = 0; i < wps.size(); ++i) {
        y.waypoints.push_back(numbers(wps[i], "waypoints[" + std::to_string(i) + "]"));
    }
    return y;
}

Trajectory load_trajectory(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("document: invalid JSON: ") + e.what());
    }
    return trajectory_from_json(doc);
}

Json trajectory_to_json(const Trajectory& y) {
    return {{"schema", std::string(kTrajectorySchema)}, {"context_id", y.context_id}, {"waypoints", y.waypoints}};
}

std::string serialize_trajectory(const Trajectory& y) { return trajectory_to_json(y).dump(); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace coactive
