#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "coactive/kinematics.hpp"
#include "coactive/world.hpp"

namespace coactive {

using Json = nlohmann::json;

inline constexpr std::string_view kContextSchema = "context.v1";
inline constexpr std::string_view kTrajectorySchema = "trajectory.v1";

/// Parses a `context.v1` document. Attribute labels are reordered so that
/// `properties` follows the canonical order (default names first, then any
/// extra names alphabetically).
Context load_context(std::string_view text);
Context context_from_json(const Json& doc);
Json context_to_json(const Context& ctx);
std::string serialize_context(const Context& ctx);

Trajectory load_trajectory(std::string_view text);
Trajectory trajectory_from_json(const Json& doc);
Json trajectory_to_json(const Trajectory& y);
std::string serialize_trajectory(const Trajectory& y);

Json pose_to_json(const Pose& p);
Pose pose_from_json(const Json& j, const std::string& field);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace coactive
