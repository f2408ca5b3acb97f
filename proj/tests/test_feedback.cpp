#include <doctest.h>

#include "coactive/errors.hpp"
#include "coactive/feedback.hpp"
#include "coactive/scenarios.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

RankedList identity_ranking(std::size_t n) {
    RankedList r;
    for (std::size_t i = 0; i < n; ++i) r.ids.push_back(static_cast<int>(i)), r.scores.push_back(-static_cast<double>(i));
    return r;
}

FeatureVector random_phi(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    FeatureVector f;
    f.phi_O.resize(144);
    for (double& v : f.phi_O) v = n(rng);
    for (double& v : f.phi_E) v = n(rng);
    return f;
}

}  // namespace

TEST_CASE("rerank strategies") {
    Rng rng(1);
    SUBCASE("first strictly better trajectory") {
        const std::vector<double> s{1, 3, 2};
        CHECK(simulate_rerank(identity_ranking(3), s, FeedbackKind::rerank_top, rng) == 1);
        CHECK(simulate_rerank(identity_ranking(3), s, FeedbackKind::optimal, rng) == 1);
        const std::vector<double> s2{1, 1, 2, 5, 0, 9};
        CHECK(simulate_rerank(identity_ranking(6), s2, FeedbackKind::rerank_top, rng) == 2);
        CHECK(simulate_rerank(identity_ranking(6), s2, FeedbackKind::rerank_top5, rng) == 3);
        CHECK(simulate_rerank(identity_ranking(6), s2, FeedbackKind::optimal, rng) == 5);
    }
    SUBCASE("a top that is already optimal is kept") {
        const std::vector<double> s{5, 4, 3, 2, 1, 0, -1};
        for (auto k : {FeedbackKind::rerank_top, FeedbackKind::rerank_top5, FeedbackKind::approx_argmax,
                       FeedbackKind::optimal, FeedbackKind::alpha}) {
            CHECK(simulate_rerank(identity_ranking(7), s, k, rng) == 0);
        }
    }
    SUBCASE("approx argmax: best of five sampled, never below the top") {
        std::mt19937_64 gen(2);
        std::normal_distribution<double> n;
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> s(20);
            for (double& v : s) v = n(gen);
            Rng a(trial), b(trial);
            const std::size_t got = simulate_rerank(identity_ranking(20), s, FeedbackKind::approx_argmax, a);
            std::vector<std::size_t> all(20), pick;
            std::iota(all.begin(), all.end(), 0);
            std::sample(all.begin(), all.end(), std::back_inserter(pick), 5, b);
            double best = -1e300;
            for (std::size_t p : pick) best = std::max(best, s[p]);
            CHECK(s[got] == (best > s[0] ? best : s[0]));
            CHECK(s[got] >= s[0]);
        }
    }
    SUBCASE("alpha: least improvement reaching the target fraction") {
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> u(0, 10);
        RerankOptions opts;
        opts.alpha_mean = 0.5;
        opts.alpha_sigma = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> s(15);
            for (double& v : s) v = u(gen);
            const std::size_t got = simulate_rerank(identity_ranking(15), s, FeedbackKind::alpha, rng, opts);
            const double best = *std::max_element(s.begin(), s.end());
            double want = 1e300;
            for (double v : s) {
                if (best > s[0] && (v - s[0]) >= 0.5 * (best - s[0])) want = std::min(want, v);
            }
            if (best > s[0]) CHECK(s[got] == want);
            else CHECK(got == 0);
        }
    }
    SUBCASE("noise-free noisy rerank equals rerank_top") {
        RerankOptions opts;
        opts.noise = 0.0;
        std::mt19937_64 gen(4);
        std::normal_distribution<double> n;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> s(10);
            for (double& v : s) v = n(gen);
            CHECK(simulate_rerank(identity_ranking(10), s, FeedbackKind::noisy_rerank, rng, opts) ==
                  simulate_rerank(identity_ranking(10), s, FeedbackKind::rerank_top, rng));
        }
    }
    SUBCASE("contract violations") {
        CHECK_THROWS_AS(simulate_rerank(identity_ranking(3), std::vector<double>{1, 2}, FeedbackKind::optimal, rng), ContractError);
        CHECK_THROWS_AS(simulate_rerank(identity_ranking(2), std::vector<double>{1, 2}, FeedbackKind::zero_g, rng), ContractError);
    }
}

TEST_CASE("feedback kind names round trip") {
    for (auto k : {FeedbackKind::rerank_top, FeedbackKind::rerank_top5, FeedbackKind::approx_argmax, FeedbackKind::zero_g,
                   FeedbackKind::optimal, FeedbackKind::alpha, FeedbackKind::noisy_rerank}) {
        CHECK(feedback_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS(feedback_kind_from_string("telepathy"));
}

TEST_CASE("zero-G correction") {
    const ArmModel arm = scenario_arm();
    const Context ctx = make_task("manipulation-o0-e0", arm);
    PlannerConfig pc;
    pc.n_samples = 1;
    pc.waypoint_count = 12;
    pc.seed = 5;
    const auto y = sample_trajectories(ctx, pc, arm).front();
    const auto scaler = FeatureScaler::identity(219);
    const Candidate c = make_candidate(arm, ctx, scaler, 4, y);
    const CollisionWorld world(ctx, arm);
    const auto expert = ExpertModel::from_rules(expert_rules(Family::manipulation));

    SUBCASE("sigma 0 returns the input") {
        Rng rng(1);
        const auto out = simulate_zero_g(c, ctx, world, scaler, expert, {5, 0.0}, rng);
        CHECK(out.trajectory == c.trajectory);
    }
    SUBCASE("best valid single-waypoint perturbation (exhaustive replay)") {
        const ZeroGConfig zc{4, 0.2};
        Rng rng(9), replay(9);
        const auto out = simulate_zero_g(c, ctx, world, scaler, expert, zc, rng);
        CHECK(out.id == c.id);
        const double s_in = expert.score(ctx, c), s_out = expert.score(ctx, out);
        CHECK(s_out >= s_in);

        // Re-draw the same perturbations and score every admissible one.
        std::normal_distribution<double> noise(0.0, zc.sigma);
        double best = s_in;
        const auto& wp = y.waypoints;
        for (std::size_t j = 1; j + 1 < wp.size(); ++j) {
            for (int k = 0; k < zc.perturbations; ++k) {
                JointVector q = wp[j];
                for (double& v : q) v += noise(replay);
                if (!arm.within_limits(q) || !world.is_collision_free(q) || !world.is_motion_free(wp[j - 1], q, 0.04) ||
                    !world.is_motion_free(q, wp[j + 1], 0.04)) {
                    continue;
                }
                Trajectory t = y;
                t.waypoints[j] = q;
                best = std::max(best, rule_score(ctx, rule_terms(arm, ctx, t), expert.rules));
            }
        }
        CHECK(s_out == doctest::Approx(best).epsilon(1e-12));

        int changed = 0;
        for (std::size_t j = 0; j < wp.size(); ++j) changed += out.trajectory.waypoints[j] != wp[j];
        CHECK(changed <= 1);
        CHECK(out.trajectory.waypoints.front() == wp.front());
        CHECK(out.trajectory.waypoints.back() == wp.back());
    }
}

TEST_CASE("informativeness") {
    auto i = informativeness(0.0, 0.5, 1.0, 0.8);
    CHECK(i.realized_alpha == doctest::Approx(0.5));
    CHECK(i.xi == doctest::Approx(0.3));
    i = informativeness(1.0, 3.0, 3.0, 1.0);
    CHECK(i.realized_alpha == doctest::Approx(1.0));
    CHECK(i.xi == 0.0);
    i = informativeness(2.0, 2.0, 2.0, 0.5);  // top already best
    CHECK(i.realized_alpha == 1.0);
    CHECK(i.xi == 0.0);
    i = informativeness(0.0, -1.0, 2.0, 0.5);  // worse feedback
    CHECK(i.realized_alpha == doctest::Approx(-0.5));
    CHECK(i.xi == doctest::Approx(2.0));
}

TEST_CASE("event log round trip and replay") {
    std::mt19937_64 rng(7);
    std::vector<FeedbackEvent> events;
    for (int r = 1; r <= 12; ++r) {
        FeedbackEvent e;
        e.round = r;
        e.context_id = "human-o0-e1";
        e.kind = r % 3 == 0 ? FeedbackKind::zero_g : FeedbackKind::rerank_top;
        e.presented_id = r;
        e.feedback_id = r + 7;
        e.improved = r % 2 == 0;
        e.realized_alpha = 1.0 / 3.0 * r;
        e.xi = 0.1 * r;
        e.alpha = 0.7;
        e.s_presented = -0.25 * r;
        e.s_feedback = 1e-17 * r;
        e.s_best = 3.0;
        e.phi_presented = random_phi(rng);
        e.phi_feedback = random_phi(rng);
        if (e.kind == FeedbackKind::zero_g) e.corrected = Trajectory{"human-o0-e1", {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}}};
        events.push_back(e);
    }
    const std::string text = events_to_jsonl(events);
    CHECK(std::count(text.begin(), text.end(), '\n') == 12);
    const auto back = events_from_jsonl(text);
    REQUIRE(back.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(back[i].phi_presented == events[i].phi_presented);
        CHECK(back[i].phi_feedback == events[i].phi_feedback);
        CHECK(back[i].realized_alpha == events[i].realized_alpha);
        CHECK(back[i].corrected == events[i].corrected);
        CHECK(back[i].kind == events[i].kind);
        CHECK(back[i].regret() == events[i].regret());
    }
    CHECK(events_to_jsonl(back) == text);

    // Replay equals the explicit sum of feature differences, bit for bit.
    const auto w = replay_events(back, WeightState::zeros(6));
    std::vector<double> sum(219, 0.0);
    for (const auto& e : events) {
        const auto p = e.phi_presented.flat(), f = e.phi_feedback.flat();
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += f[i] - p[i];
    }
    CHECK(w.flat() == sum);
    CHECK(w.t == 13);

    CHECK_THROWS_WITH_AS(events_from_jsonl(text + "{broken\n"), doctest::Contains("line 13"), ParseError);
    CHECK_THROWS_AS(events_from_jsonl(R"({"round":1})"), ParseError);
}

TEST_CASE("experts") {
    const auto a = random_linear_expert(6, 11), b = random_linear_expert(6, 11);
    CHECK(a.w_star == b.w_star);
    double n2 = 0;
    for (double v : a.w_star.flat()) n2 += v * v;
    CHECK(n2 == doctest::Approx(1.0));
    CHECK(ExpertModel::from_json(a.to_json()).w_star == a.w_star);
    const auto r = ExpertModel::from_rules(expert_rules(Family::human));
    CHECK(ExpertModel::from_json(r.to_json()).rules.to_json() == r.rules.to_json());
}
