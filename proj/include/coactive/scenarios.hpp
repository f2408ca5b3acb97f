#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coactive/kinematics.hpp"
#include "coactive/learning.hpp"
#include "coactive/world.hpp"

namespace coactive {

/// Activity classes: what the user's preferences mostly concern.
enum class Family { manipulation, environment, human };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

struct TaskKey {
    Family family = Family::manipulation;
    int object_variant = 0;  // which item is manipulated
    int env_variant = 0;     // surrounding arrangement and start/goal placement

    std::string id() const;
    friend bool operator==(const TaskKey&, const TaskKey&) = default;
};

inline constexpr int kObjectVariants = 3;
inline constexpr int kEnvVariants = 3;

/// Shoulder location used by every bundled task.
ArmModel scenario_arm();

/// Builds a grocery-checkout task. Start and goal hold the object upright
/// just above the table; goal_pose is derived from the goal configuration.
Context make_task(const TaskKey& key, const ArmModel& arm);

/// Resolves "family-oN-eM" ids and "grocery_knife".
std::optional<TaskKey> parse_task_id(std::string_view id);
Context make_task(std::string_view id, const ArmModel& arm);

/// Knife carried past a person, three items on the table (K = 4).
Context grocery_knife(const ArmModel& arm);

/// Every bundled task id, in a stable order.
std::vector<std::string> task_ids();

/// 13 tasks used for the default labeled dataset (4 + 4 + 5 across families).
std::vector<TaskKey> default_dataset_tasks();

/// Source tasks for pre-training and target tasks for evaluation. Source is
/// always objects/environments {0, 1}. Targets: `<family>` every task with a
/// new object or environment (5), `<family>:new_object` (o2, e0–1),
/// `<family>:new_environment` (o0–1, e2), `<family>:both` (o2-e2).
struct ScenarioSplit {
    std::string name;
    Family family = Family::manipulation;
    std::vector<TaskKey> source;
    std::vector<TaskKey> target;
};

ScenarioSplit scenario_split(std::string_view name);

/// Closed-form joint vector holding the end effector at `ee` with the held
/// object upright (pitch sum zero, no roll) and the hand pointing radially.
JointVector upright_ik(const ArmModel& arm, const Vec3& ee, bool elbow_up = true);

/// Rule constants of the simulated expert for an activity class.
RuleSet expert_rules(Family f);

}  // namespace coactive
