#include <doctest.h>

#include "coactive/errors.hpp"
#include "coactive/features.hpp"
#include "coactive/scenarios.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

Trajectory constant_trajectory(const JointVector& q, std::size_t n = 9) { return {"fixture", std::vector<JointVector>(n, q)}; }

Context random_fixture(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-0.7, 0.7), size(0.03, 0.15);
    std::bernoulli_distribution bit(0.5);
    std::vector<ObjectInstance> extra;
    const int k = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < k; ++i) {
        auto o = make_object("o" + std::to_string(i), Box{{size(rng), size(rng), size(rng)}}, {pos(rng), pos(rng), pos(rng)}, {});
        for (auto& l : o.attributes.labels) l = bit(rng) ? 1 : 0;
        extra.push_back(o);
    }
    Context ctx = bare_context(extra);
    for (auto& l : ctx.objects[0].attributes.labels) l = bit(rng) ? 1 : 0;
    return ctx;
}

}  // namespace

TEST_CASE("feature dimensions") {
    CHECK(kObjEnvDims == 20);
    CHECK(kObjDims == 28);
    CHECK(kRobotDims == 27);
    CHECK(kEnvDims == 75);
    CHECK(object_feature_dims(6) == 144);
    const ArmModel arm = scenario_arm();
    const Context ctx = grocery_knife(arm);
    Trajectory y{ctx.id, std::vector<JointVector>(9, ctx.start_config)};
    y.waypoints.back() = ctx.goal_config;
    const auto f = compute_features(arm, ctx, y);
    CHECK(f.phi_O.size() == 144);
    CHECK(f.size() == 219);
    CHECK(FeatureVector::from_flat(f.flat(), 6) == f);
    CHECK_THROWS_AS(FeatureVector::from_flat(std::vector<double>(10), 6), ContractError);
}

TEST_CASE("w_O·phi_O equals the explicit edge/attribute double sum") {
    const ArmModel arm = ArmModel::standard();
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    FeatureConfig cfg;
    cfg.edge_threshold = 0.5;
    int nonzero = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Context ctx = random_fixture(rng);
        const std::size_t m = ctx.property_count();
        Trajectory y{"fixture", {}};
        for (int j = 0; j < 9; ++j) y.waypoints.push_back(random_q(arm, rng, 0.5));
        std::vector<double> w(object_feature_dims(m));
        for (double& v : w) v = n01(rng);

        const auto phi = phi_O(ctx, sweep(arm, ctx, y), cfg);
        double lhs = 0;
        for (std::size_t i = 0; i < w.size(); ++i) lhs += w[i] * phi[i];

        double rhs = 0;
        const auto& bar = ctx.manipulated();
        for (const auto& q : y.waypoints) {
            const ShapePose held{bar.shape_pose.shape, object_pose_at(arm, q, ctx)};
            for (const auto& o : ctx.objects) {
                if (o.id == ctx.manipulated_id) continue;
                const auto sep = min_collision_distance(o.shape_pose, held);
                const bool below = is_below(o, held);
                if (!(sep.distance < cfg.edge_threshold || below)) continue;
                const double e[4] = {sep.vector.x, sep.vector.y, sep.vector.z, below ? 1.0 : 0.0};
                for (std::size_t p = 0; p < m; ++p) {
                    for (std::size_t r = 0; r < m; ++r) {
                        double wd = 0;
                        for (int c = 0; c < 4; ++c) wd += w[4 * (p * m + r) + c] * e[c];
                        rhs += o.attributes[p] * bar.attributes[r] * wd;
                    }
                }
            }
        }
        if (rhs != 0.0) ++nonzero;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
    CHECK(nonzero > 20);
}

TEST_CASE("edge above a box lands in the (p, q) block") {
    const ArmModel arm = ArmModel::standard();
    // Held box bottom at z = -0.03 over a box whose top sits 0.05 lower.
    Context ctx = bare_context({make_object("crate", Box{{0.1, 0.1, 0.1}}, {0.75, 0, -0.18}, {"heavy"})}, {"fragile"});
    const auto g = sweep(arm, ctx, constant_trajectory({0, 0, 0, 0, 0, 0}));
    const auto graph = interaction_graph(ctx, g);
    REQUIRE(graph.edges.size() == 9);
    const auto& e = graph.edges[0].phi_oo;
    CHECK(std::abs(e[0]) < 1e-9);
    CHECK(std::abs(e[1]) < 1e-9);
    CHECK(e[2] == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(e[3] == 1.0);

    const auto phi = phi_O(ctx, graph);
    const std::size_t off = 4 * (0 * 6 + 1);  // heavy (o_k) × fragile (held)
    CHECK(phi[off + 2] == doctest::Approx(9 * 0.05));
    CHECK(phi[off + 3] == doctest::Approx(9.0));
    double rest = 0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        if (i < off || i >= off + 4) rest += std::abs(phi[i]);
    }
    CHECK(rest == 0.0);

    SUBCASE("two edges add") {
        Context two = ctx;
        auto other = make_object("crate2", Box{{0.02, 0.02, 0.02}}, {0.75, 0.08, 0}, {"heavy"});
        two.objects.push_back(other);
        const auto g2 = interaction_graph(two, g);
        CHECK(g2.edges.size() == 18);
        const auto phi2 = phi_O(two, g2);
        CHECK(phi2[off + 3] == doctest::Approx(9.0));  // the side object is not below
        CHECK(phi2[off + 1] != 0.0);
    }
    SUBCASE("no edges, no attributes: all zero") {
        const Context empty = bare_context();
        const auto phi0 = phi_O(empty, sweep(arm, empty, constant_trajectory({0, 0, 0, 0, 0, 0})));
        CHECK(std::all_of(phi0.begin(), phi0.end(), [](double v) { return v == 0.0; }));
        Context unlabeled = ctx;
        for (auto& l : unlabeled.objects[0].attributes.labels) l = 0;
        const auto phiu = phi_O(unlabeled, g);
        CHECK(std::all_of(phiu.begin(), phiu.end(), [](double v) { return v == 0.0; }));
    }
}

TEST_CASE("psd_band matches a naive DFT") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> s(2 + rng() % 60);
        for (double& v : s) v = n01(rng);
        const auto bp = psd_band(s);
        const auto [lo, hi] = dft_bands(s);
        CHECK(bp.low == doctest::Approx(lo).epsilon(1e-9));
        CHECK(bp.high == doctest::Approx(hi).epsilon(1e-9));
    }
    CHECK_THROWS_AS(psd_band(std::vector<double>{1.0}), ContractError);
}

TEST_CASE("psd_band spectral properties") {
    SUBCASE("low-frequency sinusoid has no high band") {
        std::vector<double> s(32);
        for (int n = 0; n < 32; ++n) s[n] = std::sin(2 * M_PI * 3 * n / 32.0);
        const auto bp = psd_band(s);
        CHECK(bp.low == doctest::Approx(32.0 * 32.0 / 4.0 / 8.0));
        CHECK(bp.high < 1e-20);
    }
    SUBCASE("white noise spreads evenly") {
        // E|X_f|² = N σ² for f ≠ 0.
        double lo = 0, hi = 0;
        for (int seed = 0; seed < 1000; ++seed) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> n01;
            std::vector<double> s(32);
            for (double& v : s) v = n01(rng);
            const auto bp = psd_band(s);
            lo += bp.low / 1000.0;
            hi += bp.high / 1000.0;
        }
        CHECK(std::abs(lo - 32.0) < 3.2);
        CHECK(std::abs(hi - 32.0) < 3.2);
    }
    SUBCASE("constant signal") {
        const auto bp = psd_band(std::vector<double>(17, 2.5));
        CHECK(bp.low < 1e-25);
        CHECK(bp.high < 1e-25);
    }
}

TEST_CASE("robot features of a pure shoulder-yaw sweep") {
    const ArmModel arm = ArmModel::standard();
    Trajectory y{"fixture", {}};
    std::vector<double> theta;
    for (int j = 0; j < 30; ++j) {
        theta.push_back(0.9 * j / 29.0);
        y.waypoints.push_back({theta.back(), 0.3, -0.2, 0, 0, 0});
    }
    const auto r = phi_robot(arm, y);
    const double re = 0.35 * std::cos(0.3), ze = 0.35 * std::sin(0.3);
    const double rw = re + 0.3 * std::cos(0.1), zw = ze + 0.3 * std::sin(0.1);
    const std::size_t bounds[4] = {0, 10, 20, 30};
    for (int t = 0; t < 3; ++t) {
        const double* o = r.data() + 9 * t;
        CHECK(o[0] == doctest::Approx(rw));
        CHECK(o[1] == doctest::Approx(re));
        CHECK(o[2] == doctest::Approx(theta[bounds[t + 1] - 1]));
        CHECK(o[3] == doctest::Approx(theta[bounds[t]]));
        CHECK(o[4] == doctest::Approx(zw));
        CHECK(o[5] == doctest::Approx(ze));
        CHECK(o[6] == doctest::Approx(re));                         // elbow r where the ee is farthest out
        CHECK(o[7] == doctest::Approx(theta[bounds[t + 1] - 1]));  // elbow θ where the ee θ peaks
        CHECK(o[8] == doctest::Approx(ze));
    }
}

TEST_CASE("elbow-up and elbow-down paths differ only in the robot block") {
    const ArmModel arm = scenario_arm();
    const Context ctx = make_task("manipulation-o0-e0", arm);
    Trajectory up{ctx.id, {}}, down{ctx.id, {}};
    for (int j = 0; j < 12; ++j) {
        const double s = j / 11.0;
        const Vec3 ee{0.45 + 0.05 * s, -0.2 + 0.4 * s, 0.95 + 0.1 * std::sin(kPi * s)};
        up.waypoints.push_back(upright_ik(arm, ee, true));
        down.waypoints.push_back(upright_ik(arm, ee, false));
    }
    REQUIRE(arm.within_limits(up.waypoints[0]));
    REQUIRE(arm.within_limits(down.waypoints[0]));
    const auto a = phi_E(arm, ctx, up), b = phi_E(arm, ctx, down);
    for (std::size_t i = 0; i < kRobotOffset; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9).scale(1e-9));
    bool robot_differs = false;
    for (std::size_t i = kRobotOffset; i < kEnvDims; ++i) robot_differs |= std::abs(a[i] - b[i]) > 1e-6;
    CHECK(robot_differs);
}

TEST_CASE("static trajectory has zero spectral power") {
    const ArmModel arm = scenario_arm();
    const Context ctx = grocery_knife(arm);
    const auto f = phi_E(arm, ctx, constant_trajectory(ctx.start_config, 30));
    for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t i = 1; i <= 8; ++i) CHECK(f[kObjOffset + 9 * t + i] < 1e-20);
    }
    for (std::size_t i = 14; i < 20; ++i) CHECK(f[kObjEnvOffset + i] < 1e-20);
    CHECK(f[kObjOffset + 27] == doctest::Approx(1.0));  // upright throughout
}

TEST_CASE("features are deterministic and reject short trajectories") {
    const ArmModel arm = scenario_arm();
    const Context ctx = grocery_knife(arm);
    std::mt19937_64 rng(8);
    Trajectory y{ctx.id, {}};
    for (int j = 0; j < 15; ++j) y.waypoints.push_back(random_q(arm, rng, 0.4));
    CHECK(compute_features(arm, ctx, y) == compute_features(arm, ctx, y));
    CHECK(feature_csv_row("c", 3, compute_features(arm, ctx, y)) == feature_csv_row("c", 3, compute_features(arm, ctx, y)));
    y.waypoints.resize(8);
    CHECK_THROWS_AS(compute_features(arm, ctx, y), ContractError);
}

TEST_CASE("feature csv header") {
    const auto h = feature_csv_header(6);
    CHECK(h.rfind("context_id,trajectory_id,phi0,", 0) == 0);
    CHECK(h.substr(h.size() - 7) == ",phi218");
}
