#include <doctest.h>

#include <fstream>

#include "coactive/errors.hpp"
#include "coactive/eval.hpp"
#include "coactive/io.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

RankedList ranked(std::size_t n) {
    RankedList r;
    for (std::size_t i = 0; i < n; ++i) r.ids.push_back(static_cast<int>(i)), r.scores.push_back(0);
    return r;
}

std::map<int, int> labels_from(const std::vector<int>& ratings) {
    std::map<int, int> m;
    for (std::size_t i = 0; i < ratings.size(); ++i) m[static_cast<int>(i)] = ratings[i];
    return m;
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.rounds = 6;
    c.seeds = {1, 2};
    c.scenario = "human";
    c.pool_size = 12;
    c.candidates_per_round = 8;
    c.eval_size = 8;
    c.workers = 1;
    return c;
}

std::vector<double> column(const std::vector<MetricsRow>& rows, std::uint64_t seed, double MetricsRow::*col) {
    std::vector<double> out;
    for (const auto& r : rows) {
        if (r.seed == seed) out.push_back(r.*col);
    }
    return out;
}

}  // namespace

TEST_CASE("nDCG against the direct formula") {
    CHECK(ndcg_at_k(ranked(3), labels_from({3, 5, 4}), 3) == doctest::Approx(0.7747).epsilon(1e-4));
    CHECK(ndcg_at_k(ranked(3), labels_from({5, 4, 3}), 3) == 1.0);
    CHECK(ndcg_at_k(ranked(3), labels_from({2, 2, 2}), 1) == 1.0);

    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> rating(1, 5);
    for (int f = 0; f < 20; ++f) {
        std::vector<int> r(3 + rng() % 20);
        for (int& v : r) v = rating(rng);
        for (int k : {1, 3, 5}) {
            const double got = ndcg_at_k(ranked(r.size()), labels_from(r), k);
            CHECK(got == doctest::Approx(ndcg_reference(r, k)).epsilon(1e-12));
            CHECK(got <= 1.0 + 1e-12);
            CHECK(got > 0.0);
        }
    }
    CHECK_THROWS_AS(ndcg_at_k(ranked(3), labels_from({1, 2}), 3), ContractError);
    CHECK_THROWS_AS(ndcg_at_k(ranked(2), labels_from({1, 2}), 0), ContractError);
}

TEST_CASE("quintile ratings") {
    std::vector<double> s(100);
    std::iota(s.begin(), s.end(), 0.0);
    std::shuffle(s.begin(), s.end(), std::mt19937_64(2));
    const auto r = quintile_ratings(s);
    std::map<int, int> count;
    for (int v : r) ++count[v];
    for (int q = 1; q <= 5; ++q) CHECK(count[q] == 20);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(r[i] == 1 + static_cast<int>(s[i]) / 20);
    CHECK(quintile_ratings(std::vector<double>(7, 1.5)) == std::vector<int>(7, 3));
    CHECK(quintile_ratings(std::vector<double>{}).empty());
}

TEST_CASE("regret curves") {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> e(2.0);
    std::vector<double> inst(50);
    for (double& v : inst) v = e(rng);
    const auto c = regret_curve(inst);
    for (std::size_t t = 0; t < inst.size(); ++t) {
        double s = 0;
        for (std::size_t i = 0; i <= t; ++i) s += inst[i];
        CHECK(c.average[t] == doctest::Approx(s / (t + 1)).epsilon(1e-12));
    }

    SUBCASE("recomputed from candidate sets") {
        const auto expert = random_linear_expert(6, 4);
        std::normal_distribution<double> n;
        std::vector<FeedbackEvent> events;
        std::vector<Context> contexts;
        std::vector<std::vector<Candidate>> sets;
        std::vector<double> want;
        for (int t = 0; t < 5; ++t) {
            std::vector<Candidate> set;
            double best = -1e300;
            for (int i = 0; i < 6; ++i) {
                Candidate cand;
                cand.id = 10 * t + i;
                cand.phi.phi_O.resize(144);
                for (double& v : cand.phi.phi_O) v = n(rng);
                for (double& v : cand.phi.phi_E) v = n(rng);
                double s = 0;
                const auto f = cand.phi.flat(), w = expert.w_star.flat();
                for (std::size_t d = 0; d < f.size(); ++d) s += f[d] * w[d];
                best = std::max(best, s);
                set.push_back(cand);
            }
            FeedbackEvent ev;
            ev.presented_id = 10 * t + 2;
            const auto f = set[2].phi.flat(), w = expert.w_star.flat();
            double s2 = 0;
            for (std::size_t d = 0; d < f.size(); ++d) s2 += f[d] * w[d];
            want.push_back(best - s2);
            events.push_back(ev);
            contexts.push_back(bare_context());
            sets.push_back(set);
        }
        const auto got = regret_curve(events, expert, contexts, sets);
        for (std::size_t t = 0; t < want.size(); ++t) CHECK(got.instantaneous[t] == doctest::Approx(want[t]).epsilon(1e-12));
        events[0].presented_id = 999;
        CHECK_THROWS_AS(regret_curve(events, expert, contexts, sets), ContractError);
    }
    SUBCASE("log-log slope of a power law") {
        std::vector<double> reg;
        for (int t = 1; t <= 40; ++t) reg.push_back(3.0 * std::pow(t, -0.5));
        CHECK(loglog_slope(reg, 5, 40) == doctest::Approx(-0.5).epsilon(1e-12));
    }
}

TEST_CASE("experiment config parsing is strict") {
    const auto ok = ExperimentConfig::from_json({{"algorithm", "mmp_online"}, {"T", 7}, {"seeds", 3}, {"scenario", "environment:both"}});
    CHECK(ok.algorithm == Algorithm::mmp_online);
    CHECK(ok.rounds == 7);
    CHECK(ok.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(ExperimentConfig::from_json(ok.to_json()).to_json() == ok.to_json());

    CHECK_THROWS_AS(ExperimentConfig::from_json({{"rounds", 5}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"T", "five"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"planner", {{"speed", 1}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"scenario", "kitchen"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"algorithm", "oracle_svm"}, {"setting", "untrained"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::array()), ConfigError);
    CHECK_NOTHROW(ExperimentConfig::from_json({{"algorithm", "oracle_svm"}, {"setting", "pretrained"}}));
}

TEST_CASE("scenario splits") {
    for (const char* fam : {"manipulation", "environment", "human"}) {
        const auto all = scenario_split(fam);
        CHECK(all.source.size() == 4);
        CHECK(all.target.size() == 5);
        CHECK(scenario_split(std::string(fam) + ":new_object").target.size() == 2);
        CHECK(scenario_split(std::string(fam) + ":new_environment").target.size() == 2);
        CHECK(scenario_split(std::string(fam) + ":both").target.size() == 1);
        for (const auto& t : all.target) {
            for (const auto& s : all.source) CHECK_FALSE(t == s);
        }
    }
    CHECK(default_dataset_tasks().size() == 13);
    CHECK(task_ids().size() == 28);  // 27 family tasks + grocery_knife
}

TEST_CASE("small experiment") {
    const auto cfg = small_config();
    const auto a = run_experiment(cfg);
    REQUIRE(a.runs.size() == 2);
    const auto rows = a.rows();
    CHECK(rows.size() == 12);
    for (const auto& r : rows) {
        CHECK(r.ndcg1 > 0.0);
        CHECK(r.ndcg3 <= 1.0 + 1e-12);
        CHECK(r.regret >= 0.0);
    }
    for (const auto& run : a.runs) {
        // Logged regrets feed the curve; TPP weights equal the replayed updates.
        const auto curve = regret_curve(run.events);
        CHECK(curve.instantaneous == column(rows, run.seed, &MetricsRow::regret));
        const auto w = replay_events(run.events, run.initial);
        CHECK(w.flat() == run.final_weights.flat());
    }

    SUBCASE("deterministic across runs and worker counts") {
        auto cfg2 = cfg;
        cfg2.workers = 2;
        CHECK(metrics_csv(run_experiment(cfg2)) == metrics_csv(a));
    }
    SUBCASE("metrics file layout") {
        const auto dir = temp_dir("metrics");
        write_metrics(a, dir / "m.csv");
        std::ifstream in(dir / "m.csv");
        std::string first, second;
        std::getline(in, first);
        std::getline(in, second);
        CHECK(first.rfind("# gain=exponential", 0) == 0);
        CHECK(second == "round,seed,scenario,algo,ndcg1,ndcg3,regret,realized_alpha,xi");
        std::filesystem::remove_all(dir);
    }
    SUBCASE("geometric baseline never learns") {
        auto g = cfg;
        g.algorithm = Algorithm::geometric;
        const auto rows_g = run_experiment(g).rows();
        for (std::uint64_t seed : {1, 2}) {
            const auto n3 = column(rows_g, seed, &MetricsRow::ndcg3);
            for (double v : n3) CHECK(v == n3.front());
        }
    }
    SUBCASE("events are written per seed") {
        auto e = cfg;
        const auto dir = temp_dir("events");
        e.events_dir = dir;
        e.scenario = "human:both";
        run_experiment(e);
        CHECK(std::filesystem::exists(dir / "tpp_human_both_seed1.jsonl"));
        CHECK(events_from_jsonl(read_file(dir / "tpp_human_both_seed2.jsonl")).size() == 6);
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("labeled dataset ratings follow the expert") {
    const ArmModel arm = scenario_arm();
    PlannerConfig pc;
    const auto scaler = calibration_scaler(arm, pc, 5);
    std::vector<std::shared_ptr<const TaskPool>> pools;
    for (const char* id : {"human-o0-e0", "environment-o1-e2"}) pools.push_back(task_pool(*parse_task_id(id), arm, pc, scaler, 25));
    const auto data = generate_labeled_dataset(pools, 25);
    REQUIRE(data.rows.size() == 50);
    for (std::size_t g = 0; g < 2; ++g) {
        for (std::size_t i = 25 * g; i < 25 * (g + 1); ++i) {
            for (std::size_t j = 25 * g; j < 25 * (g + 1); ++j) {
                // Monotone: a strictly higher expert score never gets a lower rating.
                if (data.expert_scores[i] > data.expert_scores[j]) CHECK(data.rows[i].rating >= data.rows[j].rating);
            }
        }
    }
    const auto dir = temp_dir("dataset");
    write_labeled_dataset(data, dir);
    const std::string labels = read_file(dir / "labels.csv");
    CHECK(std::count(labels.begin(), labels.end(), '\n') == 51);
    CHECK(std::filesystem::exists(dir / "features.csv"));
    CHECK(std::filesystem::exists(dir / "trajectories" / "human-o0-e0.jsonl"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("enum names") {
    for (auto a : {Algorithm::tpp, Algorithm::mmp_online, Algorithm::oracle_svm, Algorithm::geometric, Algorithm::manual}) {
        CHECK(algorithm_from_string(to_string(a)) == a);
    }
    CHECK(setting_from_string("pretrained") == Setting::pretrained);
    CHECK_THROWS_AS(algorithm_from_string("svm"), ConfigError);
}
