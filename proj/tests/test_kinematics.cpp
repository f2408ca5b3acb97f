#include <doctest.h>

#include "coactive/errors.hpp"
#include "coactive/kinematics.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

void check_close(const Vec3& a, const Vec3& b, double tol) {
    CHECK(std::abs(a.x - b.x) < tol);
    CHECK(std::abs(a.y - b.y) < tol);
    CHECK(std::abs(a.z - b.z) < tol);
}

}  // namespace

TEST_CASE("straight chain at zero") {
    const ArmModel arm = ArmModel::standard();
    const auto f = forward_kinematics(arm, {0, 0, 0, 0, 0, 0});
    check_close(f.elbow, {0.35, 0, 0}, 1e-15);
    check_close(f.wrist, {0.65, 0, 0}, 1e-15);
    check_close(f.end_effector, {0.75, 0, 0}, 1e-15);
}

TEST_CASE("shoulder pitch raises the upper arm") {
    ArmModel arm = ArmModel::standard();
    arm.joint_limits[1] = {-2.0, 2.0};
    const auto f = forward_kinematics(arm, {0, kPi / 2, 0, 0, 0, 0});
    check_close(f.elbow, {0, 0, 0.35}, 1e-12);
}

TEST_CASE("FK agrees with composed homogeneous transforms") {
    const ArmModel arm = ArmModel::standard({0.1, -0.2, 1.05});
    {
        const JointVector q{kPi / 2, 0, kPi / 2, 0, 0, 0};
        const auto f = forward_kinematics(arm, q);
        const auto o = fk_homogeneous(arm, q);
        check_close(f.wrist, o.wrist, 1e-9);
    }
    std::mt19937_64 rng(17);
    for (int i = 0; i < 500; ++i) {
        const JointVector q = random_q(arm, rng);
        const auto f = forward_kinematics(arm, q);
        const auto o = fk_homogeneous(arm, q);
        check_close(f.elbow, o.elbow, 1e-9);
        check_close(f.wrist, o.wrist, 1e-9);
        check_close(f.end_effector, o.ee, 1e-9);
        CHECK(norm(f.elbow - f.shoulder) == doctest::Approx(arm.upper_arm).epsilon(1e-12));
        CHECK(norm(f.wrist - f.elbow) == doctest::Approx(arm.forearm).epsilon(1e-12));
    }
}

TEST_CASE("FK rejects bad joint vectors") {
    const ArmModel arm = ArmModel::standard();
    CHECK_THROWS_AS(forward_kinematics(arm, {0, 0, 0}), DomainError);
    CHECK_THROWS_AS(forward_kinematics(arm, {0, 3.0, 0, 0, 0, 0}), DomainError);
}

TEST_CASE("cylindrical coordinates") {
    auto c = cylindrical({1, 0, 0}, {});
    CHECK(c.r == 1.0);
    CHECK(c.theta == 0.0);
    c = cylindrical({0, 2, 3}, {});
    CHECK(c.r == doctest::Approx(2));
    CHECK(c.theta == doctest::Approx(kPi / 2));
    CHECK(c.z == 3.0);
    c = cylindrical({-1, -1, 0.5}, {});
    CHECK(c.r == doctest::Approx(std::sqrt(2.0)));
    CHECK(c.theta == doctest::Approx(-3 * kPi / 4));
    CHECK(cylindrical({0, 0, 4}, {}).theta == 0.0);

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p{u(rng), u(rng), u(rng)}, o{u(rng), u(rng), u(rng)};
        const auto cc = cylindrical(p, o);
        check_close({cc.r * std::cos(cc.theta) + o.x, cc.r * std::sin(cc.theta) + o.y, cc.z + o.z}, p, 1e-12);
    }
}

TEST_CASE("object poses compose the grasp transform") {
    const ArmModel arm = scenario_arm();
    Context ctx = grocery_knife(arm);
    std::mt19937_64 rng(4);
    Trajectory y{ctx.id, {}};
    for (int i = 0; i < 9; ++i) y.waypoints.push_back(random_q(arm, rng, 0.5));

    SUBCASE("identity grasp") {
        ctx.grasp_transform = Pose{};
        const auto poses = object_poses(arm, y, ctx);
        REQUIRE(poses.size() == 9);
        for (std::size_t j = 0; j < 9; ++j) check_close(poses[j].position, forward_kinematics(arm, y.waypoints[j]).end_effector, 1e-15);
    }
    SUBCASE("pure translation grasp") {
        ctx.grasp_transform = Pose{{0, 0, -0.1}, {}};
        const auto poses = object_poses(arm, y, ctx);
        for (std::size_t j = 0; j < 9; ++j) {
            const auto f = forward_kinematics(arm, y.waypoints[j]);
            check_close(poses[j].position, f.end_effector + f.wrist_rotation * Vec3{0, 0, -0.1}, 1e-12);
        }
    }
}

TEST_CASE("bundled tasks: goal pose is the object pose at the goal configuration") {
    const ArmModel arm = scenario_arm();
    for (const auto& id : task_ids()) {
        const Context ctx = make_task(id, arm);
        const Pose p = object_pose_at(arm, ctx.goal_config, ctx);
        check_close(p.position, ctx.goal_pose.position, 1e-6);
        const Vec3 up = p.rotation() * ctx.manipulated().vertical_axis;
        const Vec3 goal_up = ctx.goal_pose.rotation() * ctx.manipulated().vertical_axis;
        CHECK(dot(up, goal_up) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("trajectory validation") {
    const ArmModel arm = scenario_arm();
    const Context ctx = grocery_knife(arm);
    Trajectory y{ctx.id, std::vector<JointVector>(9, ctx.start_config)};
    y.waypoints.back() = ctx.goal_config;
    CHECK_NOTHROW(validate_trajectory(arm, ctx, y));
    y.waypoints.pop_back();
    CHECK_THROWS_AS(validate_trajectory(arm, ctx, y), InvariantError);
    y.waypoints.push_back(ctx.start_config);
    CHECK_THROWS_AS(validate_trajectory(arm, ctx, y), InvariantError);
}
