#include "coactive/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "coactive/errors.hpp"
#include "coactive/io.hpp"

namespace coactive {

double ndcg_at_k(const RankedList& ranking, const std::map<int, int>& labels, int k) {
    if (k < 1) throw ContractError("ndcg_at_k: k must be >= 1");
    std::vector<int> got;
    got.reserve(ranking.ids.size());
    for (int id : ranking.ids) {
        const auto it = labels.find(id);
        if (it == labels.end()) throw ContractError("ndcg_at_k: no label for trajectory " + std::to_string(id));
        got.push_back(it->second);
    }
    std::vector<int> ideal = got;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    auto dcg = [k](const std::vector<int>& r) {
        double s = 0.0;
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), r.size());
        for (std::size_t i = 0; i < n; ++i) s += (std::exp2(r[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
        return s;
    };
    const double best = dcg(ideal);
    if (best <= 0.0) return 1.0;
    return dcg(got) / best;
}

RegretCurve regret_curve(std::span<const double> instantaneous) {
    RegretCurve c;
    c.instantaneous.assign(instantaneous.begin(), instantaneous.end());
    double sum = 0.0;
    for (std::size_t t = 0; t < instantaneous.size(); ++t) {
        sum += instantaneous[t];
        c.average.push_back(sum / static_cast<double>(t + 1));
    }
    return c;
}

RegretCurve regret_curve(std::span<const FeedbackEvent> events) {
    std::vector<double> r;
    for (const auto& e : events) r.push_back(e.regret());
    return regret_curve(r);
}

RegretCurve regret_curve(std::span<const FeedbackEvent> events, const ExpertModel& expert,
                         std::span<const Context> contexts, std::span<const std::vector<Candidate>> candidate_sets) {
    if (contexts.size() != events.size() || candidate_sets.size() != events.size()) {
        throw ContractError("regret_curve: one context and candidate set per event required");
    }
    std::vector<double> r;
    for (std::size_t t = 0; t < events.size(); ++t) {
        const auto& set = candidate_sets[t];
        if (set.empty()) throw ContractError("regret_curve: empty candidate set");
        double best = -std::numeric_limits<double>::infinity();
        std::optional<double> presented;
        for (const auto& c : set) {
            const double s = expert.score(contexts[t], c);
            best = std::max(best, s);
            if (c.id == events[t].presented_id) presented = s;
        }
        if (!presented) throw ContractError("regret_curve: presented trajectory missing from its candidate set");
        r.push_back(best - *presented);
    }
    return regret_curve(r);
}

std::vector<int> quintile_ratings(std::span<const double> scores) {
    const std::size_t n = scores.size();
    std::vector<int> out(n, 3);
    if (n == 0) return out;
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*lo == *hi) return out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    for (std::size_t r = 0; r < n; ++r) out[order[r]] = 1 + static_cast<int>((5 * r) / n);
    return out;
}

namespace {

std::string planner_key(const PlannerConfig& p) {
    std::ostringstream s;
    s << p.seed << '/' << p.step_size << '/' << p.max_iterations << '/' << p.shortcut_passes << '/' << p.shortcut_accept
      << '/' << p.waypoint_count << '/' << static_cast<int>(p.algorithm) << '/' << p.max_via_points << '/'
      << p.via_spread << '/' << p.edge_resolution;
    return s.str();
}

std::string scaler_key(const FeatureScaler& s) {
    // FNV-1a over the raw bytes; the memo only needs to tell scalers apart.
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : s.scale) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        for (unsigned char b : bytes) h = (h ^ b) * 1099511628211ULL;
    }
    return std::to_string(h);
}

std::mutex g_memo_mutex;
std::map<std::string, std::shared_ptr<const TaskPool>> g_pools;
std::map<std::string, FeatureScaler> g_scalers;

}  // namespace

FeatureScaler calibration_scaler(const ArmModel& arm, const PlannerConfig& planner, int per_task) {
    const std::string key = planner_key(planner) + "#" + std::to_string(per_task);
    {
        std::lock_guard lock(g_memo_mutex);
        if (auto it = g_scalers.find(key); it != g_scalers.end()) return it->second;
    }
    PlannerConfig cfg = planner;
    cfg.n_samples = per_task;
    cfg.seed = derive_seed(planner.seed, 0xCA11B);
    std::vector<FeatureVector> sample;
    std::vector<int> groups;
    int group = 0;
    for (const auto& id : task_ids()) {
        if (id == "grocery_knife") continue;
        const Context ctx = make_task(id, arm);
        for (const auto& y : sample_trajectories(ctx, cfg, arm)) {
            sample.push_back(compute_features(arm, ctx, y));
            groups.push_back(group);
        }
        ++group;
    }
    FeatureScaler s = FeatureScaler::fit(sample, groups);
    std::lock_guard lock(g_memo_mutex);
    g_scalers.emplace(key, s);
    return s;
}

std::shared_ptr<const TaskPool> task_pool(const TaskKey& key, const ArmModel& arm, const PlannerConfig& planner,
                                          const FeatureScaler& scaler, int size) {
    const std::string memo = key.id() + "#" + planner_key(planner) + "#" + scaler_key(scaler) + "#" + std::to_string(size);
    {
        std::lock_guard lock(g_memo_mutex);
        if (auto it = g_pools.find(memo); it != g_pools.end()) return it->second;
    }
    auto pool = std::make_shared<TaskPool>();
    pool->ctx = make_task(key, arm);
    pool->family = key.family;
    PlannerConfig cfg = planner;
    cfg.n_samples = size;
    auto trajectories = sample_trajectories(pool->ctx, cfg, arm);
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        pool->candidates.push_back(make_candidate(arm, pool->ctx, scaler, static_cast<int>(i), std::move(trajectories[i])));
    }
    std::lock_guard lock(g_memo_mutex);
    return g_pools.emplace(memo, std::move(pool)).first->second;
}

ExpertModel family_expert(Family f) { return ExpertModel::from_rules(expert_rules(f)); }

LabeledDataset generate_labeled_dataset(std::span<const std::shared_ptr<const TaskPool>> pools, int per_context,
                                        const ExpertModel* expert) {
    LabeledDataset out;
    for (const auto& pool : pools) {
        const ExpertModel e = expert ? *expert : family_expert(pool->family);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(per_context), pool->candidates.size());
        std::vector<double> s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(e.score(pool->ctx, pool->candidates[i]));
        const auto ratings = quintile_ratings(s);
        for (std::size_t i = 0; i < n; ++i) {
            const Candidate& c = pool->candidates[i];
            out.rows.push_back({pool->ctx.id, c.id, c.phi, ratings[i]});
            out.expert_scores.push_back(s[i]);
            out.trajectories.push_back(c.trajectory);
        }
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

void write_labeled_dataset(const LabeledDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "trajectories");
    std::string labels = "context_id,trajectory_id,rating,expert_score\n";
    std::string features;
    std::map<std::string, std::string> jsonl;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        const auto& r = data.rows[i];
        labels += r.group + "," + std::to_string(r.trajectory_id) + "," + std::to_string(r.rating) + "," +
                  fmt(data.expert_scores[i]) + "\n";
        if (features.empty()) {
            const std::size_t m = static_cast<std::size_t>(std::lround(std::sqrt(r.phi.phi_O.size() / 4.0)));
            features = feature_csv_header(m) + "\n";
        }
        features += feature_csv_row(r.group, r.trajectory_id, r.phi) + "\n";
        jsonl[r.group] += trajectory_to_json(data.trajectories[i]).dump() + "\n";
    }
    write_file_atomic(dir / "labels.csv", labels);
    write_file_atomic(dir / "features.csv", features);
    for (const auto& [ctx, text] : jsonl) write_file_atomic(dir / "trajectories" / (ctx + ".jsonl"), text);
}

std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::tpp: return "tpp";
        case Algorithm::mmp_online: return "mmp_online";
        case Algorithm::oracle_svm: return "oracle_svm";
        case Algorithm::geometric: return "geometric";
        case Algorithm::manual: return "manual";
    }
    return "?";
}

Algorithm algorithm_from_string(std::string_view s) {
    for (auto a : {Algorithm::tpp, Algorithm::mmp_online, Algorithm::oracle_svm, Algorithm::geometric,
                   Algorithm::manual}) {
        if (to_string(a) == s) return a;
    }
    throw ConfigError("unknown algorithm '" + std::string(s) +
                      "' (valid: tpp, mmp_online, oracle_svm, geometric, manual)");
}

std::string_view to_string(Setting s) { return s == Setting::untrained ? "untrained" : "pretrained"; }

Setting setting_from_string(std::string_view s) {
    if (s == "untrained") return Setting::untrained;
    if (s == "pretrained") return Setting::pretrained;
    throw ConfigError("unknown setting '" + std::string(s) + "' (valid: untrained, pretrained)");
}

void ExperimentConfig::validate() const {
    if (algorithm == Algorithm::oracle_svm && setting == Setting::untrained) {
        throw ConfigError("oracle_svm is a batch learner and is only defined for the pretrained setting");
    }
    if (rounds < 1) throw ConfigError("T must be >= 1");
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (pool_size < 1) throw ConfigError("pool_size must be >= 1");
    if (candidates_per_round < 1 || candidates_per_round > pool_size) {
        throw ConfigError("candidates_per_round must be in [1, pool_size]");
    }
    if (eval_size < 1 || eval_size > pool_size) throw ConfigError("eval_size must be in [1, pool_size]");
    if (expert != "rules" && expert != "linear") throw ConfigError("expert must be 'rules' or 'linear'");
    if (!(xi_alpha > 0.0 && xi_alpha <= 1.0)) throw ConfigError("xi_alpha must be in (0, 1]");
    if (!(object_weight >= 0.0)) throw ConfigError("object_weight must be >= 0");
    if (pretrain_rounds < 0) throw ConfigError("pretrain_rounds must be >= 0");
    if (zero_g.perturbations < 0 || zero_g.sigma < 0.0) throw ConfigError("zero_g settings must be non-negative");
    if (mmp.epochs < 1 || mmp.step <= 0.0) throw ConfigError("mmp epochs/step must be positive");
    if (oracle.epochs < 1 || oracle.lambda <= 0.0) throw ConfigError("oracle epochs/lambda must be positive");
    scenario_split(scenario);
    planner.validate();
}

namespace {

template <class T>
T get_field(const nlohmann::json& j, const char* key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config field '" + path + key + "' has the wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& path) {
    for (const auto& [k, v] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
            throw ConfigError("unknown config field '" + path + k + "'");
        }
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown(j,
                   {"schema", "algorithm", "setting", "feedback", "T", "seeds", "scenario", "expert", "alpha_mean",
                    "alpha_sigma", "noise", "xi_alpha", "object_weight", "candidates_per_round", "pool_size", "eval_size", "pretrain_rounds",
                    "planner", "mmp", "oracle", "zero_g", "paths", "workers", "evaluate_ndcg"},
                   "");
    if (j.contains("schema") && j.at("schema") != "experiment.v1") throw ConfigError("schema must be 'experiment.v1'");
    ExperimentConfig c;
    c.algorithm = algorithm_from_string(get_field<std::string>(j, "algorithm", "", "tpp"));
    c.setting = setting_from_string(get_field<std::string>(j, "setting", "", "untrained"));
    c.feedback = feedback_kind_from_string(get_field<std::string>(j, "feedback", "", "rerank_top"));
    c.rounds = get_field<int>(j, "T", "", c.rounds);
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        if (s.is_number_integer()) {
            const int n = s.get<int>();
            if (n < 1) throw ConfigError("seeds count must be >= 1");
            c.seeds.clear();
            for (int i = 1; i <= n; ++i) c.seeds.push_back(static_cast<std::uint64_t>(i));
        } else {
            c.seeds = get_field<std::vector<std::uint64_t>>(j, "seeds", "", {});
        }
    }
    c.scenario = get_field<std::string>(j, "scenario", "", c.scenario);
    c.expert = get_field<std::string>(j, "expert", "", c.expert);
    c.rerank.alpha_mean = get_field<double>(j, "alpha_mean", "", c.rerank.alpha_mean);
    c.rerank.alpha_sigma = get_field<double>(j, "alpha_sigma", "", c.rerank.alpha_sigma);
    c.rerank.noise = get_field<double>(j, "noise", "", c.rerank.noise);
    c.xi_alpha = get_field<double>(j, "xi_alpha", "", c.xi_alpha);
    c.object_weight = get_field<double>(j, "object_weight", "", c.object_weight);
    c.candidates_per_round = get_field<int>(j, "candidates_per_round", "", c.candidates_per_round);
    c.pool_size = get_field<int>(j, "pool_size", "", c.pool_size);
    c.eval_size = get_field<int>(j, "eval_size", "", c.eval_size);
    c.pretrain_rounds = get_field<int>(j, "pretrain_rounds", "", c.pretrain_rounds);
    c.workers = get_field<int>(j, "workers", "", c.workers);
    c.evaluate_ndcg = get_field<bool>(j, "evaluate_ndcg", "", c.evaluate_ndcg);
    if (j.contains("planner")) {
        const auto& p = j.at("planner");
        reject_unknown(p,
                       {"step_size", "max_iterations", "shortcut_passes", "shortcut_accept", "waypoint_count", "seed",
                        "algorithm", "max_via_points", "via_spread", "edge_resolution"},
                       "planner.");
        auto& q = c.planner;
        q.step_size = get_field<double>(p, "step_size", "planner.", q.step_size);
        q.max_iterations = get_field<int>(p, "max_iterations", "planner.", q.max_iterations);
        q.shortcut_passes = get_field<int>(p, "shortcut_passes", "planner.", q.shortcut_passes);
        q.shortcut_accept = get_field<double>(p, "shortcut_accept", "planner.", q.shortcut_accept);
        q.waypoint_count = get_field<int>(p, "waypoint_count", "planner.", q.waypoint_count);
        q.seed = get_field<std::uint64_t>(p, "seed", "planner.", q.seed);
        const auto algo = get_field<std::string>(p, "algorithm", "planner.", "birrt");
        if (algo == "birrt") q.algorithm = PlannerAlgorithm::birrt;
        else if (algo == "rrt") q.algorithm = PlannerAlgorithm::rrt;
        else throw ConfigError("planner.algorithm must be 'birrt' or 'rrt'");
        q.max_via_points = get_field<int>(p, "max_via_points", "planner.", q.max_via_points);
        q.via_spread = get_field<double>(p, "via_spread", "planner.", q.via_spread);
        q.edge_resolution = get_field<double>(p, "edge_resolution", "planner.", q.edge_resolution);
    }
    if (j.contains("mmp")) {
        const auto& m = j.at("mmp");
        reject_unknown(m, {"c", "epochs", "step"}, "mmp.");
        c.mmp.c = get_field<double>(m, "c", "mmp.", c.mmp.c);
        c.mmp.epochs = get_field<int>(m, "epochs", "mmp.", c.mmp.epochs);
        c.mmp.step = get_field<double>(m, "step", "mmp.", c.mmp.step);
    }
    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        reject_unknown(o, {"lambda", "epochs", "seed"}, "oracle.");
        c.oracle.lambda = get_field<double>(o, "lambda", "oracle.", c.oracle.lambda);
        c.oracle.epochs = get_field<int>(o, "epochs", "oracle.", c.oracle.epochs);
        c.oracle.seed = get_field<std::uint64_t>(o, "seed", "oracle.", c.oracle.seed);
    }
    if (j.contains("zero_g")) {
        const auto& z = j.at("zero_g");
        reject_unknown(z, {"perturbations", "sigma"}, "zero_g.");
        c.zero_g.perturbations = get_field<int>(z, "perturbations", "zero_g.", c.zero_g.perturbations);
        c.zero_g.sigma = get_field<double>(z, "sigma", "zero_g.", c.zero_g.sigma);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        reject_unknown(p, {"checkpoint", "events_dir"}, "paths.");
        if (p.contains("checkpoint")) c.checkpoint = get_field<std::string>(p, "checkpoint", "paths.", "");
        if (p.contains("events_dir")) c.events_dir = get_field<std::string>(p, "events_dir", "paths.", "");
    }
    c.validate();
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j{{"schema", "experiment.v1"},
                     {"algorithm", std::string(to_string(algorithm))},
                     {"setting", std::string(to_string(setting))},
                     {"feedback", std::string(to_string(feedback))},
                     {"T", rounds},
                     {"seeds", seeds},
                     {"scenario", scenario},
                     {"expert", expert},
                     {"alpha_mean", rerank.alpha_mean},
                     {"alpha_sigma", rerank.alpha_sigma},
                     {"noise", rerank.noise},
                     {"xi_alpha", xi_alpha},
                     {"object_weight", object_weight},
                     {"candidates_per_round", candidates_per_round},
                     {"pool_size", pool_size},
                     {"eval_size", eval_size},
                     {"pretrain_rounds", pretrain_rounds},
                     {"workers", workers},
                     {"evaluate_ndcg", evaluate_ndcg}};
    j["planner"] = {{"step_size", planner.step_size},
                    {"max_iterations", planner.max_iterations},
                    {"shortcut_passes", planner.shortcut_passes},
                    {"shortcut_accept", planner.shortcut_accept},
                    {"waypoint_count", planner.waypoint_count},
                    {"seed", planner.seed},
                    {"algorithm", planner.algorithm == PlannerAlgorithm::birrt ? "birrt" : "rrt"},
                    {"max_via_points", planner.max_via_points},
                    {"via_spread", planner.via_spread},
                    {"edge_resolution", planner.edge_resolution}};
    j["mmp"] = {{"c", mmp.c}, {"epochs", mmp.epochs}, {"step", mmp.step}};
    j["oracle"] = {{"lambda", oracle.lambda}, {"epochs", oracle.epochs}, {"seed", oracle.seed}};
    j["zero_g"] = {{"perturbations", zero_g.perturbations}, {"sigma", zero_g.sigma}};
    nlohmann::json paths = nlohmann::json::object();
    if (checkpoint) paths["checkpoint"] = checkpoint->string();
    if (events_dir) paths["events_dir"] = events_dir->string();
    j["paths"] = paths;
    return j;
}

std::vector<MetricsRow> ExperimentResult::rows() const {
    std::vector<MetricsRow> out;
    for (const auto& r : runs) out.insert(out.end(), r.rows.begin(), r.rows.end());
    return out;
}

std::vector<double> ExperimentResult::mean_curve(double MetricsRow::*column) const {
    std::vector<double> out;
    if (runs.empty()) return out;
    const std::size_t n = runs.front().rows.size();
    out.assign(n, 0.0);
    for (const auto& r : runs) {
        for (std::size_t t = 0; t < n; ++t) out[t] += r.rows[t].*column;
    }
    for (double& v : out) v /= static_cast<double>(runs.size());
    return out;
}

namespace {

// Stream ids for derive_seed; one generator per concern keeps runs comparable
// across algorithms (same contexts and candidate subsets for the same seed).
enum Stream : std::uint64_t { kOrder = 1, kSubsample = 2, kFeedback = 3, kExpert = 4, kPretrain = 5 };

struct Workspace {
    ArmModel arm;
    FeatureScaler scaler;
    ScenarioSplit split;
    std::vector<std::shared_ptr<const TaskPool>> source;
    std::vector<std::shared_ptr<const TaskPool>> target;
};

Workspace make_workspace(const ExperimentConfig& cfg, const std::optional<WeightState>& checkpoint) {
    Workspace ws;
    ws.arm = scenario_arm();
    const std::size_t dims = object_feature_dims(default_property_names().size()) + kEnvDims;
    if (checkpoint && checkpoint->standardization.size() == dims) {
        ws.scaler.scale = checkpoint->standardization;
    } else {
        ws.scaler = calibration_scaler(ws.arm, cfg.planner);
    }
    ws.split = scenario_split(cfg.scenario);
    for (const auto& k : ws.split.source) ws.source.push_back(task_pool(k, ws.arm, cfg.planner, ws.scaler, cfg.pool_size));
    for (const auto& k : ws.split.target) ws.target.push_back(task_pool(k, ws.arm, cfg.planner, ws.scaler, cfg.pool_size));
    return ws;
}

ExpertModel seed_expert(const ExperimentConfig& cfg, std::uint64_t seed, Family f) {
    if (cfg.expert == "linear") {
        return random_linear_expert(default_property_names().size(), derive_seed(seed, kExpert), cfg.object_weight);
    }
    return family_expert(f);
}

/// Scorer for one algorithm: either learned weights or a fixed rule.
struct Ranker {
    Algorithm algo;
    const WeightState* w = nullptr;

    RankedList operator()(const Context& ctx, std::span<const Candidate> cands) const {
        if (algo == Algorithm::tpp || algo == Algorithm::mmp_online || algo == Algorithm::oracle_svm) {
            return rank(cands, *w);
        }
        std::vector<int> ids;
        std::vector<double> s;
        for (const auto& c : cands) {
            ids.push_back(c.id);
            s.push_back(algo == Algorithm::geometric ? -c.terms.path_length : manual_score(ctx, c.terms));
        }
        return rank_by_scores(ids, s);
    }
};

struct EvalSet {
    const TaskPool* pool;
    std::vector<Candidate> candidates;
    std::map<int, int> labels;
};

std::vector<EvalSet> eval_sets(const Workspace& ws, const ExperimentConfig& cfg, std::uint64_t seed) {
    std::vector<EvalSet> out;
    for (const auto& pool : ws.target) {
        EvalSet e;
        e.pool = pool.get();
        const ExpertModel expert = seed_expert(cfg, seed, pool->family);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.eval_size), pool->candidates.size());
        std::vector<double> s;
        for (std::size_t i = 0; i < n; ++i) {
            e.candidates.push_back(pool->candidates[i]);
            s.push_back(expert.score(pool->ctx, pool->candidates[i]));
        }
        const auto ratings = quintile_ratings(s);
        for (std::size_t i = 0; i < n; ++i) e.labels[e.candidates[i].id] = ratings[i];
        out.push_back(std::move(e));
    }
    return out;
}

/// Context order: every pass visits each task once, in a freshly shuffled order.
std::vector<std::size_t> context_order(std::size_t tasks, int rounds, Rng& rng) {
    std::vector<std::size_t> out;
    while (static_cast<int>(out.size()) < rounds) {
        std::vector<std::size_t> pass(tasks);
        std::iota(pass.begin(), pass.end(), 0);
        std::shuffle(pass.begin(), pass.end(), rng);
        out.insert(out.end(), pass.begin(), pass.end());
    }
    out.resize(static_cast<std::size_t>(rounds));
    return out;
}

struct RoundOutcome {
    FeedbackEvent event;
    std::vector<Candidate> sample;
    Candidate presented;
    Candidate feedback;
};

/// One loop iteration: subsample, rank, simulate the user's feedback.
RoundOutcome play_round(const ExperimentConfig& cfg, const TaskPool& pool, const ExpertModel& expert,
                        const Ranker& ranker, const CollisionWorld& world, const FeatureScaler& scaler, Rng& sub_rng,
                        Rng& fb_rng, int round) {
    RoundOutcome out;
    std::sample(pool.candidates.begin(), pool.candidates.end(), std::back_inserter(out.sample),
                static_cast<std::size_t>(cfg.candidates_per_round), sub_rng);
    const RankedList ranked = ranker(pool.ctx, out.sample);

    std::map<int, std::size_t> by_id;
    for (std::size_t i = 0; i < out.sample.size(); ++i) by_id[out.sample[i].id] = i;
    std::vector<double> s_ranked;
    for (int id : ranked.ids) s_ranked.push_back(expert.score(pool.ctx, out.sample[by_id[id]]));
    const double s_best = *std::max_element(s_ranked.begin(), s_ranked.end());

    out.presented = out.sample[by_id[ranked.top()]];
    FeedbackEvent& e = out.event;
    e.round = round;
    e.context_id = pool.ctx.id;
    e.kind = cfg.feedback;
    e.presented_id = out.presented.id;
    e.s_presented = s_ranked.front();
    e.s_best = s_best;
    if (cfg.feedback == FeedbackKind::zero_g) {
        out.feedback = simulate_zero_g(out.presented, pool.ctx, world, scaler, expert, cfg.zero_g, fb_rng,
                                       cfg.planner.edge_resolution);
        e.feedback_id = out.presented.id;
        e.s_feedback = expert.score(pool.ctx, out.feedback);
        if (out.feedback.trajectory != out.presented.trajectory) e.corrected = out.feedback.trajectory;
    } else {
        const std::size_t pos = simulate_rerank(ranked, s_ranked, cfg.feedback, fb_rng, cfg.rerank);
        out.feedback = out.sample[by_id[ranked.ids[pos]]];
        e.feedback_id = out.feedback.id;
        e.s_feedback = s_ranked[pos];
    }
    e.improved = e.s_feedback > e.s_presented;
    const Informativeness info = informativeness(e.s_presented, e.s_feedback, e.s_best, cfg.xi_alpha);
    e.realized_alpha = info.realized_alpha;
    e.xi = info.xi;
    e.alpha = cfg.xi_alpha;
    e.phi_presented = out.presented.phi;
    e.phi_feedback = out.feedback.phi;
    return out;
}

double mean_ndcg(const std::vector<EvalSet>& sets, const Ranker& ranker, int k) {
    double s = 0.0;
    for (const auto& e : sets) s += ndcg_at_k(ranker(e.pool->ctx, e.candidates), e.labels, k);
    return s / static_cast<double>(sets.size());
}

WeightState pretrain_on(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
    const std::size_t m = default_property_names().size();
    WeightState w = WeightState::zeros(m);
    w.standardization = ws.scaler.scale;
    if (ws.source.empty() || cfg.pretrain_rounds == 0) return w;
    Rng order_rng(derive_seed(seed, kPretrain * 16 + kOrder));
    Rng sub_rng(derive_seed(seed, kPretrain * 16 + kSubsample));
    Rng fb_rng(derive_seed(seed, kPretrain * 16 + kFeedback));
    const auto order = context_order(ws.source.size(), cfg.pretrain_rounds, order_rng);
    for (int t = 0; t < cfg.pretrain_rounds; ++t) {
        const TaskPool& pool = *ws.source[order[static_cast<std::size_t>(t)]];
        const ExpertModel expert = seed_expert(cfg, seed, pool.family);
        const CollisionWorld world(pool.ctx, ws.arm);
        const Ranker ranker{Algorithm::tpp, &w};
        const RoundOutcome r = play_round(cfg, pool, expert, ranker, world, ws.scaler, sub_rng, fb_rng, t + 1);
        w = tpp_update(w, r.presented.phi, r.feedback.phi);
    }
    // The pre-trained state counts as round one of the target run.
    w.t = 1;
    return w;
}

WeightState train_oracle(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed) {
    std::vector<LabeledRow> rows;
    for (const auto& pool : ws.source) {
        const ExpertModel expert = seed_expert(cfg, seed, pool->family);
        const std::span<const std::shared_ptr<const TaskPool>> one(&pool, 1);
        auto data = generate_labeled_dataset(one, cfg.eval_size, &expert);
        rows.insert(rows.end(), data.rows.begin(), data.rows.end());
    }
    WeightState w = train_oracle_rank(rows, cfg.oracle);
    w.standardization = ws.scaler.scale;
    return w;
}

SeedRun run_seed(const ExperimentConfig& cfg, const Workspace& ws, std::uint64_t seed,
                 const std::optional<WeightState>& checkpoint) {
    SeedRun run;
    run.seed = seed;
    const std::size_t m = default_property_names().size();

    WeightState w = WeightState::zeros(m);
    w.standardization = ws.scaler.scale;
    if (cfg.algorithm == Algorithm::oracle_svm) {
        w = train_oracle(cfg, ws, seed);
    } else if (cfg.setting == Setting::pretrained &&
               (cfg.algorithm == Algorithm::tpp || cfg.algorithm == Algorithm::mmp_online)) {
        w = checkpoint ? *checkpoint : pretrain_on(cfg, ws, seed);
    }
    run.initial = w;

    std::optional<MmpOnline> mmp;
    if (cfg.algorithm == Algorithm::mmp_online) {
        mmp.emplace(m, cfg.mmp, cfg.setting == Setting::pretrained ? std::optional<WeightState>(w) : std::nullopt);
    }

    const std::vector<EvalSet> evals = cfg.evaluate_ndcg ? eval_sets(ws, cfg, seed) : std::vector<EvalSet>{};
    Rng order_rng(derive_seed(seed, kOrder));
    Rng sub_rng(derive_seed(seed, kSubsample));
    Rng fb_rng(derive_seed(seed, kFeedback));
    const auto order = context_order(ws.target.size(), cfg.rounds, order_rng);
    std::map<const TaskPool*, std::unique_ptr<CollisionWorld>> worlds;

    for (int t = 1; t <= cfg.rounds; ++t) {
        const TaskPool& pool = *ws.target[order[static_cast<std::size_t>(t - 1)]];
        auto& world = worlds[&pool];
        if (!world) world = std::make_unique<CollisionWorld>(pool.ctx, ws.arm);
        const ExpertModel expert = seed_expert(cfg, seed, pool.family);
        const Ranker ranker{cfg.algorithm, &w};

        MetricsRow row;
        row.round = t;
        row.seed = seed;
        row.scenario = cfg.scenario;
        row.algorithm = cfg.algorithm;
        if (!evals.empty()) {
            row.ndcg1 = mean_ndcg(evals, ranker, 1);
            row.ndcg3 = mean_ndcg(evals, ranker, 3);
        }

        RoundOutcome r = play_round(cfg, pool, expert, ranker, *world, ws.scaler, sub_rng, fb_rng, t);
        row.regret = r.event.regret();
        row.realized_alpha = r.event.realized_alpha;
        row.xi = r.event.xi;

        switch (cfg.algorithm) {
            case Algorithm::tpp:
                w = tpp_update(w, r.presented.phi, r.feedback.phi);
                break;
            case Algorithm::mmp_online: {
                std::vector<FeatureVector> phis;
                for (const auto& c : r.sample) phis.push_back(c.phi);
                if (r.event.corrected) phis.push_back(r.feedback.phi);
                mmp->add_example(std::move(phis), r.feedback.phi);
                const std::vector<double> std_scale = w.standardization;
                w = mmp->retrain();
                w.standardization = std_scale;
                break;
            }
            default:
                w.t += 1;  // frozen or rule-based rankers
                break;
        }
        run.rows.push_back(std::move(row));
        run.events.push_back(std::move(r.event));
    }
    run.final_weights = w;
    return run;
}

}  // namespace

WeightState pretrain_weights(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Workspace ws = make_workspace(cfg, std::nullopt);
    return pretrain_on(cfg, ws, seed);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::optional<WeightState> checkpoint;
    if (cfg.setting == Setting::pretrained && cfg.checkpoint) {
        checkpoint = weights_from_json(nlohmann::json::parse(read_file(*cfg.checkpoint)));
        if (checkpoint->m != default_property_names().size()) {
            throw ConfigError("checkpoint M does not match the bundled tasks");
        }
    }
    const Workspace ws = make_workspace(cfg, checkpoint);

    ExperimentResult result;
    result.config = cfg;
    std::vector<std::uint64_t> seeds = cfg.seeds;
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    result.runs.resize(seeds.size());

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers =
        std::min<std::size_t>(seeds.size(), cfg.workers > 0 ? static_cast<std::size_t>(cfg.workers) : hw);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i; (i = next++) < seeds.size();) {
            try {
                result.runs[i] = run_seed(cfg, ws, seeds[i], checkpoint);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    if (cfg.events_dir) {
        std::filesystem::create_directories(*cfg.events_dir);
        std::string tag = cfg.scenario;
        std::replace(tag.begin(), tag.end(), ':', '_');
        for (const auto& run : result.runs) {
            const auto name = std::string(to_string(cfg.algorithm)) + "_" + tag + "_seed" + std::to_string(run.seed) + ".jsonl";
            write_file_atomic(*cfg.events_dir / name, events_to_jsonl(run.events));
        }
    }
    return result;
}

std::string metrics_csv_header() { return "round,seed,scenario,algo,ndcg1,ndcg3,regret,realized_alpha,xi"; }

std::string metrics_csv(const ExperimentResult& r) {
    std::string out = metrics_csv_header() + "\n";
    for (const auto& row : r.rows()) {
        out += std::to_string(row.round) + "," + std::to_string(row.seed) + "," + row.scenario + "," +
               std::string(to_string(row.algorithm)) + "," + fmt(row.ndcg1) + "," + fmt(row.ndcg3) + "," +
               fmt(row.regret) + "," + fmt(row.realized_alpha) + "," + fmt(row.xi) + "\n";
    }
    return out;
}

void write_metrics(const ExperimentResult& r, const std::filesystem::path& path) {
    const auto& c = r.config;
    std::string text = "# gain=" + std::string(kNdcgGain) + " ndcg_k=1,3 candidates_per_round=" +
                       std::to_string(c.candidates_per_round) + " eval_size=" + std::to_string(c.eval_size) +
                       " feedback=" + std::string(to_string(c.feedback)) + " setting=" +
                       std::string(to_string(c.setting)) + " expert=" + c.expert + "\n";
    text += metrics_csv(r);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

SweepResult sweep_mmp_c(const ExperimentConfig& base, std::span<const double> c_values) {
    if (c_values.empty()) throw ConfigError("sweep needs at least one C value");
    SweepResult out;
    double best = -1.0;
    for (double c : c_values) {
        ExperimentConfig cfg = base;
        cfg.algorithm = Algorithm::mmp_online;
        cfg.mmp.c = c;
        ExperimentResult r = run_experiment(cfg);
        const auto rows = r.rows();
        double mean = 0.0;
        for (const auto& row : rows) mean += row.ndcg3;
        mean /= static_cast<double>(rows.size());
        out.c_values.push_back(c);
        out.mean_ndcg3.push_back(mean);
        if (mean > best) {
            best = mean;
            out.best_c = c;
        }
        out.results.push_back(std::move(r));
    }
    return out;
}

double loglog_slope(std::span<const double> reg, int t_lo, int t_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int t = t_lo; t <= t_hi && t <= static_cast<int>(reg.size()); ++t) {
        const double r = reg[static_cast<std::size_t>(t - 1)];
        if (r <= 0.0) return -std::numeric_limits<double>::infinity();
        const double x = std::log(static_cast<double>(t)), y = std::log(r);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) throw ContractError("loglog_slope: need at least two points");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace coactive
