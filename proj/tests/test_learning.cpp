#include <doctest.h>

#include "coactive/errors.hpp"
#include "coactive/learning.hpp"
#include "coactive/scenarios.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

FeatureVector random_phi(std::mt19937_64& rng, std::size_t m = 6, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    FeatureVector f;
    f.phi_O.resize(object_feature_dims(m));
    for (double& v : f.phi_O) v = n(rng);
    for (double& v : f.phi_E) v = n(rng);
    return f;
}

WeightState random_weights(std::mt19937_64& rng, std::size_t m = 6) {
    WeightState w = WeightState::zeros(m);
    std::normal_distribution<double> n;
    for (double& v : w.w_O) v = n(rng);
    for (double& v : w.w_E) v = n(rng);
    return w;
}

double explicit_score(const FeatureVector& f, const WeightState& w) {
    double s = 0;
    for (std::size_t i = 0; i < f.phi_O.size(); ++i) s += f.phi_O[i] * w.w_O[i];
    for (std::size_t i = 0; i < f.phi_E.size(); ++i) s += f.phi_E[i] * w.w_E[i];
    return s;
}

double norm2_flat(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return s;
}

std::vector<Candidate> random_candidates(std::mt19937_64& rng, int n) {
    std::vector<Candidate> out;
    for (int i = 0; i < n; ++i) {
        Candidate c;
        c.id = i;
        c.phi = random_phi(rng);
        out.push_back(c);
    }
    return out;
}

}  // namespace

TEST_CASE("score is the plain inner product") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const auto f = random_phi(rng);
        const auto w = random_weights(rng);
        CHECK(score(f, w) == doctest::Approx(explicit_score(f, w)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(score(random_phi(rng, 5), WeightState::zeros(6)), ContractError);
}

TEST_CASE("rank agrees with a brute-force sort") {
    std::mt19937_64 rng(2);
    const auto cands = random_candidates(rng, 100);
    const auto w = random_weights(rng);
    const auto r = rank(cands, w);
    REQUIRE(r.size() == 100);
    std::vector<std::pair<double, int>> ref;
    for (const auto& c : cands) ref.emplace_back(-explicit_score(c.phi, w), c.id);
    std::sort(ref.begin(), ref.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(r.ids[i] == ref[i].second);
    CHECK(r.top() == ref[0].second);

    SUBCASE("positive scaling of w leaves the order alone") {
        WeightState w3 = w;
        for (double& v : w3.w_O) v *= 3.5;
        for (double& v : w3.w_E) v *= 3.5;
        CHECK(rank(cands, w3).ids == r.ids);
    }
    SUBCASE("ties resolve by ascending id") {
        const std::vector<int> ids{7, 2, 9, 4};
        const std::vector<double> s{1.0, 2.0, 1.0, 2.0};
        CHECK(rank_by_scores(ids, s).ids == std::vector<int>{2, 4, 7, 9});
    }
    SUBCASE("empty set") { CHECK_THROWS_AS(rank(std::span<const Candidate>{}, w), ContractError); }
}

TEST_CASE("perceptron update") {
    std::mt19937_64 rng(3);
    const auto top = random_phi(rng), fb = random_phi(rng);
    const auto w = random_weights(rng);
    const auto w1 = tpp_update(w, top, fb);
    CHECK(w1.t == w.t + 1);
    // Score gain of the update on (fb − top) equals ‖fb − top‖².
    double gain = 0, dn = 0;
    const auto a = top.flat(), b = fb.flat(), wf = w.flat(), w1f = w1.flat();
    for (std::size_t i = 0; i < a.size(); ++i) {
        gain += (w1f[i] - wf[i]) * (b[i] - a[i]);
        dn += (b[i] - a[i]) * (b[i] - a[i]);
    }
    CHECK(gain == doctest::Approx(dn).epsilon(1e-12));

    SUBCASE("telescoping sum") {
        WeightState acc = WeightState::zeros(6);
        std::vector<double> sum(acc.size(), 0.0);
        for (int t = 0; t < 20; ++t) {
            const auto p = random_phi(rng), q = random_phi(rng);
            acc = tpp_update(acc, p, q);
            const auto pf = p.flat(), qf = q.flat();
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += qf[i] - pf[i];
        }
        CHECK(acc.t == 21);
        const auto af = acc.flat();
        for (std::size_t i = 0; i < sum.size(); ++i) CHECK(af[i] == doctest::Approx(sum[i]).epsilon(1e-12));
    }
    SUBCASE("feedback equal to the top is a no-op on w") {
        const auto same = tpp_update(w, top, top);
        CHECK(same.w_O == w.w_O);
        CHECK(same.w_E == w.w_E);
    }
}

TEST_CASE("max-margin planning") {
    std::mt19937_64 rng(4);
    SUBCASE("already satisfied margins leave the weights untouched") {
        const auto fb = random_phi(rng);
        auto other = random_phi(rng);
        WeightState init = WeightState::zeros(6);
        // w = 10·(fb − other): margin 10‖Δ‖² far exceeds the ‖Δ‖ loss.
        const auto a = fb.flat(), b = other.flat();
        std::vector<double> wf(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) wf[i] = 10.0 * (a[i] - b[i]);
        init.set_flat(wf);
        MmpOnline mmp(6, {0.0, 10, 0.05}, init);
        mmp.add_example({fb, other}, fb);
        const auto& w = mmp.retrain();
        CHECK(w.flat() == wf);
        CHECK(mmp.objective(w) == 0.0);
    }
    SUBCASE("contradictory examples never reach zero loss") {
        const auto a = random_phi(rng), b = random_phi(rng);
        double d = 0;
        const auto af = a.flat(), bf = b.flat();
        for (std::size_t i = 0; i < af.size(); ++i) d += (af[i] - bf[i]) * (af[i] - bf[i]);
        d = std::sqrt(d);
        MmpOnline mmp(6, {0.0, 30, 0.05});
        mmp.add_example({a, b}, a);
        mmp.add_example({a, b}, b);
        mmp.retrain();
        CHECK(mmp.example_count() == 2);
        CHECK(mmp.epoch_trace().size() == 30);
        // The two hinge terms sum to at least 2‖a − b‖ for every w.
        for (const auto& wf : mmp.epoch_trace()) {
            WeightState w = WeightState::zeros(6);
            w.set_flat(wf);
            CHECK(mmp.objective(w) >= 2 * d - 1e-9);
        }
    }
    SUBCASE("a single example pulls the feedback to the top") {
        std::vector<FeatureVector> cands;
        for (int i = 0; i < 6; ++i) cands.push_back(random_phi(rng));
        MmpOnline mmp(6, {1.0, 100, 0.01});
        mmp.add_example(cands, cands[3]);
        const auto& w = mmp.retrain();
        double best = -1e300;
        int arg = -1;
        for (int i = 0; i < 6; ++i) {
            if (score(cands[i], w) > best) best = score(cands[i], w), arg = i;
        }
        CHECK(arg == 3);
        CHECK(mmp.objective(w) < mmp.objective(WeightState::zeros(6)));
    }
}

TEST_CASE("oracle ranker") {
    SUBCASE("pair counting") {
        std::vector<LabeledRow> rows(3);
        rows[0].rating = 5;
        rows[1].rating = 4;
        rows[2].rating = 4;
        for (auto& r : rows) r.group = "g";
        CHECK(rank_pairs(rows).size() == 2);
        rows[2].group = "h";
        CHECK(rank_pairs(rows).size() == 1);
    }
    SUBCASE("no preference pairs") {
        std::mt19937_64 rng(5);
        std::vector<LabeledRow> rows(4);
        for (auto& r : rows) r.group = "g", r.rating = 3, r.phi = random_phi(rng);
        CHECK_THROWS_AS(train_oracle_rank(rows, {}), TrainingError);
        CHECK_THROWS_AS(train_oracle_rank(std::span<const LabeledRow>{}, {}), TrainingError);
    }
    SUBCASE("recovers the preference order of a linear scorer") {
        for (int seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(100 + seed);
            std::normal_distribution<double> n;
            std::array<double, 5> w_star{};
            for (double& v : w_star) v = n(rng);
            std::vector<LabeledRow> rows;
            for (int g = 0; g < 2; ++g) {
                std::vector<std::pair<double, std::size_t>> s;
                for (int i = 0; i < 40; ++i) {
                    LabeledRow r;
                    r.group = "g" + std::to_string(g);
                    r.trajectory_id = i;
                    r.phi.phi_O.assign(object_feature_dims(6), 0.0);
                    double v = 0;
                    for (std::size_t d = 0; d < 5; ++d) v += w_star[d] * (r.phi.phi_E[d] = n(rng));
                    s.emplace_back(v, rows.size());
                    rows.push_back(r);
                }
                std::sort(s.begin(), s.end());
                for (std::size_t k = 0; k < s.size(); ++k) rows[s[k].second].rating = 1 + static_cast<int>(k * 5 / s.size());
            }
            const auto w = train_oracle_rank(rows, {});
            const auto pairs = rank_pairs(rows);
            std::size_t ok = 0;
            for (const auto& [i, j] : pairs) ok += score(rows[i].phi, w) > score(rows[j].phi, w);
            // Kendall τ restricted to preference pairs.
            const double tau = 2.0 * static_cast<double>(ok) / static_cast<double>(pairs.size()) - 1.0;
            CHECK(tau >= 0.9);
        }
    }
}

TEST_CASE("manual rules") {
    const ArmModel arm = scenario_arm();
    const Context ctx = grocery_knife(arm);
    const Trajectory upright{ctx.id, std::vector<JointVector>(9, ctx.start_config)};

    SUBCASE("upright beats tilted") {
        Trajectory tilted = upright;
        for (std::size_t j = 1; j + 1 < tilted.size(); ++j) { auto& p = tilted.waypoints[j][4]; p += p > 0 ? -0.9 : 0.9; }
        const auto tu = rule_terms(arm, ctx, upright), tt = rule_terms(arm, ctx, tilted);
        CHECK(tu.min_upright == doctest::Approx(1.0));
        CHECK(tt.min_upright < 0.8);
        CHECK(manual_score(ctx, tu) > manual_score(ctx, tt));
    }
    SUBCASE("far from the person beats near for a sharp object") {
        const Pose held = object_pose_at(arm, ctx.start_config, ctx);
        Context near = ctx, far = ctx;
        near.human_regions = {{Sphere{0.1}, Pose{held.position + Vec3{0, 0.25, 0}, {}}}};
        far.human_regions = {{Sphere{0.1}, Pose{held.position + Vec3{0, 0.9, 0}, {}}}};
        const auto tn = rule_terms(arm, near, upright), tf = rule_terms(arm, far, upright);
        CHECK(tn.min_human_distance < tf.min_human_distance);
        CHECK(manual_score(near, tn) > -1e9);
        CHECK(manual_score(far, tf) > manual_score(near, tn));
    }
    SUBCASE("shipped rule file matches the built-in defaults") {
        CHECK(manual_rules().to_json() == RuleSet::manual_default().to_json());
    }
}

TEST_CASE("feature scaler") {
    std::vector<FeatureVector> sample;
    std::vector<int> groups;
    for (int i = 0; i < 4; ++i) {
        FeatureVector f;
        f.phi_O.assign(4, 0.0);  // M = 1
        f.phi_E[0] = i < 2 ? (i == 0 ? 1.0 : 3.0) : (i == 2 ? 10.0 : 14.0);  // within-group sd 1 and 2
        f.phi_E[1] = 5.0;
        sample.push_back(f);
        groups.push_back(i / 2);
    }
    const auto global = FeatureScaler::fit(sample);
    // Population sd of {1, 3, 10, 14}: mean 7, var (36 + 16 + 9 + 49)/4.
    CHECK(global.scale[4] == doctest::Approx(std::sqrt(110.0 / 4.0)));
    CHECK(global.scale[5] == 1.0);
    const auto within = FeatureScaler::fit(sample, groups);
    CHECK(within.scale[4] == doctest::Approx(std::sqrt((1.0 + 4.0) / 2.0)));
    CHECK(within.scale[0] == 1.0);
    const auto scaled = within.apply(sample[3]);
    CHECK(scaled.phi_E[0] == doctest::Approx(14.0 / std::sqrt(2.5)));
    CHECK(FeatureScaler::identity(79).apply(sample[0]) == sample[0]);
    CHECK_THROWS_AS(FeatureScaler::fit(std::span<const FeatureVector>{}), ContractError);
    CHECK_THROWS_AS(FeatureScaler::identity(3).apply(sample[0]), ContractError);
}

TEST_CASE("weights json round trip") {
    std::mt19937_64 rng(6);
    auto w = random_weights(rng);
    w.t = 17;
    w.standardization.assign(w.size(), 2.0);
    CHECK(weights_from_json(weights_to_json(w)) == w);
    auto j = weights_to_json(w);
    j["w_E"].erase(0);
    CHECK_THROWS_AS(weights_from_json(j), ParseError);
    CHECK(norm2_flat(WeightState::zeros(6).flat()) == 0.0);
}
