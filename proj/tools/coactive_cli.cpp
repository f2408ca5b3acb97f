// coactive: dataset generation, experiments, pre-training, replay and the session server.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "coactive/errors.hpp"
#include "coactive/eval.hpp"
#include "coactive/feedback.hpp"
#include "coactive/io.hpp"
#include "coactive/scenarios.hpp"
#include "coactive/service.hpp"

using namespace coactive;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

const std::vector<std::string> kAlgorithms{"tpp", "mmp_online", "oracle_svm", "geometric", "manual"};
const std::vector<std::string> kSettings{"untrained", "pretrained"};
const std::vector<std::string> kFeedback{"rerank_top", "rerank_top5", "approx_argmax", "zero_g",
                                         "optimal",    "alpha",       "noisy_rerank"};
const std::vector<std::string> kExperts{"rules", "linear"};

std::vector<std::uint64_t> parse_seeds(const std::string& s) try {
    std::vector<std::uint64_t> out;
    if (s.find(',') == std::string::npos) {
        const long n = std::stol(s);
        if (n < 1) throw ConfigError("--seeds must be a count >= 1 or a comma-separated list");
        for (long i = 1; i <= n; ++i) out.push_back(static_cast<std::uint64_t>(i));
        return out;
    }
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(std::stoull(tok));
    return out;
} catch (const std::logic_error&) {
    throw ConfigError("--seeds must be a count >= 1 or a comma-separated list");
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + tok + "'");
        }
    }
    return out;
}

json load_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

double last_round_mean(const ExperimentResult& r, double MetricsRow::*col) {
    const auto curve = r.mean_curve(col);
    return curve.empty() ? 0.0 : curve.back();
}

struct RunArgs {
    std::string config;
    std::string algo, setting, feedback, scenario, expert, seeds, sweep_c, events_dir, checkpoint;
    std::string out = "metrics.csv";
    int rounds = 0;
    int workers = -1;
    int candidates = 0;
};

ExperimentConfig build_config(const RunArgs& a) {
    ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : ExperimentConfig::from_json(load_json_file(a.config));
    if (!a.algo.empty()) cfg.algorithm = algorithm_from_string(a.algo);
    if (!a.setting.empty()) cfg.setting = setting_from_string(a.setting);
    if (!a.feedback.empty()) cfg.feedback = feedback_kind_from_string(a.feedback);
    if (!a.scenario.empty()) cfg.scenario = a.scenario;
    if (!a.expert.empty()) cfg.expert = a.expert;
    if (!a.seeds.empty()) cfg.seeds = parse_seeds(a.seeds);
    if (a.rounds > 0) cfg.rounds = a.rounds;
    if (a.workers >= 0) cfg.workers = a.workers;
    if (a.candidates > 0) cfg.candidates_per_round = a.candidates;
    if (!a.events_dir.empty()) cfg.events_dir = a.events_dir;
    if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
    scenario_split(cfg.scenario);  // rejects unknown names early
    cfg.validate();
    return cfg;
}

int cmd_run(const RunArgs& a) {
    ExperimentConfig cfg = build_config(a);
    if (!a.sweep_c.empty()) {
        const auto cs = parse_list(a.sweep_c);
        const SweepResult sweep = sweep_mmp_c(cfg, cs);
        const std::filesystem::path out(a.out);
        for (std::size_t i = 0; i < sweep.results.size(); ++i) {
            std::ostringstream name;
            name << out.stem().string() << "_C" << sweep.c_values[i] << out.extension().string();
            write_metrics(sweep.results[i], out.parent_path() / name.str());
            std::cout << "C=" << sweep.c_values[i] << " mean_ndcg3=" << sweep.mean_ndcg3[i] << "\n";
        }
        std::cout << "best_C=" << sweep.best_c << "\n";
        write_metrics(sweep.results[static_cast<std::size_t>(
                          std::find(sweep.c_values.begin(), sweep.c_values.end(), sweep.best_c) - sweep.c_values.begin())],
                      out);
        return 0;
    }
    const ExperimentResult r = run_experiment(cfg);
    write_metrics(r, a.out);
    std::cout << "rows=" << r.rows().size() << " ndcg3@T=" << last_round_mean(r, &MetricsRow::ndcg3)
              << " regret@T=" << last_round_mean(r, &MetricsRow::regret) << " -> " << a.out << "\n";
    return 0;
}

struct DatasetArgs {
    int contexts = 13;
    int per = 100;
    std::uint64_t seed = 1;
    std::string out = "dataset";
};

int cmd_gen_dataset(const DatasetArgs& a) {
    if (a.contexts < 1 || a.per < 1) throw ConfigError("--contexts and --per must be >= 1");
    std::vector<TaskKey> keys = default_dataset_tasks();
    for (const auto& id : task_ids()) {
        const auto k = parse_task_id(id);
        if (id != "grocery_knife" && std::find(keys.begin(), keys.end(), *k) == keys.end()) keys.push_back(*k);
    }
    if (static_cast<std::size_t>(a.contexts) > keys.size()) {
        throw ConfigError("--contexts at most " + std::to_string(keys.size()));
    }
    keys.resize(static_cast<std::size_t>(a.contexts));
    const ArmModel arm = scenario_arm();
    PlannerConfig planner;
    planner.seed = a.seed;
    const FeatureScaler scaler = calibration_scaler(arm, planner);
    std::vector<std::shared_ptr<const TaskPool>> pools;
    for (const auto& k : keys) pools.push_back(task_pool(k, arm, planner, scaler, a.per));
    const LabeledDataset data = generate_labeled_dataset(pools, a.per);
    write_labeled_dataset(data, a.out);
    std::cout << data.rows.size() << "\n";
    return 0;
}

struct PretrainArgs {
    RunArgs run;
    std::uint64_t seed = 1;
    int rounds = 0;
};

int cmd_pretrain(const PretrainArgs& a) {
    RunArgs r = a.run;
    ExperimentConfig cfg = build_config(r);
    if (a.rounds > 0) cfg.pretrain_rounds = a.rounds;
    const WeightState w = pretrain_weights(cfg, a.seed);
    write_file_atomic(a.run.out, weights_to_json(w).dump(2));
    std::cout << "pretrained " << cfg.pretrain_rounds << " rounds on " << cfg.scenario << " sources -> " << a.run.out
              << "\n";
    return 0;
}

struct ReplayArgs {
    std::string events, init, expect, out;
};

int cmd_replay(const ReplayArgs& a) {
    const auto events = events_from_jsonl(read_file(a.events));
    WeightState init = WeightState::zeros(default_property_names().size());
    if (!a.init.empty()) init = weights_from_json(load_json_file(a.init));
    else if (!events.empty()) {
        const std::size_t m = static_cast<std::size_t>(std::lround(std::sqrt(events.front().phi_presented.phi_O.size() / 4.0)));
        init = WeightState::zeros(m);
    }
    WeightState w = replay_events(events, init);
    if (!a.out.empty()) write_file_atomic(a.out, weights_to_json(w).dump(2));
    std::cout << "events=" << events.size() << " t=" << w.t << "\n";
    if (!a.expect.empty()) {
        WeightState want = weights_from_json(load_json_file(a.expect));
        const bool same = w.w_O == want.w_O && w.w_E == want.w_E && w.t == want.t;
        std::cout << (same ? "match" : "MISMATCH") << "\n";
        return same ? 0 : kExitRuntime;
    }
    return 0;
}

int cmd_export_context(const std::string& task, const std::string& out) {
    if (!parse_task_id(task)) throw ConfigError("unknown task '" + task + "' (see `coactive tasks`)");
    const std::string text = serialize_context(make_task(task, scenario_arm()));
    if (out.empty() || out == "-") std::cout << text << "\n";
    else write_file_atomic(out, text + "\n");
    return 0;
}

struct ServeArgs {
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string data_dir;
    std::string origin = "*";
    int candidates = 20;
};

int cmd_serve(const ServeArgs& a) {
    // Signals are handled on a dedicated thread; the server threads inherit the mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    ServiceConfig sc;
    if (!a.data_dir.empty()) sc.data_dir = a.data_dir;
    sc.cors_origin = a.origin;
    sc.default_candidates = a.candidates;
    SessionService service(sc);
    HttpServer server(service, a.origin);
    const int port = server.bind(a.host, a.port);
    std::cout << "listening on http://" << a.host << ":" << port << std::endl;

    std::atomic<bool> signalled{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        signalled = true;
        server.stop();
    });
    server.serve();
    // Unblock the waiter if serve() returned for another reason.
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

void add_run_flags(CLI::App* c, RunArgs& a) {
    c->add_option("--config", a.config, "experiment.v1 JSON file; flags override it")->check(CLI::ExistingFile);
    c->add_option("--algo", a.algo, "Algorithm")->check(CLI::IsMember(kAlgorithms));
    c->add_option("--setting", a.setting, "Setting")->check(CLI::IsMember(kSettings));
    c->add_option("--feedback", a.feedback, "Simulated feedback")->check(CLI::IsMember(kFeedback));
    c->add_option("--scenario", a.scenario, "Scenario split, e.g. human or environment:new_object");
    c->add_option("--expert", a.expert, "Simulated user")->check(CLI::IsMember(kExperts));
    c->add_option("--seeds", a.seeds, "Seed count or comma-separated list");
    c->add_option("--workers", a.workers, "Worker threads (0 = all cores)");
    c->add_option("--candidates", a.candidates, "Candidates per round");
    c->add_option("--checkpoint", a.checkpoint, "weights.v1 used by the pretrained setting");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-active trajectory preference learning toolkit"};
    app.require_subcommand(1);

    DatasetArgs ds;
    auto* gen = app.add_subcommand("gen-dataset", "Plan candidates and write expert-labeled data");
    gen->add_option("--contexts", ds.contexts, "Number of tasks")->capture_default_str();
    gen->add_option("--per", ds.per, "Trajectories per task")->capture_default_str();
    gen->add_option("--seed", ds.seed, "Planner seed")->capture_default_str();
    gen->add_option("--out", ds.out, "Output directory")->capture_default_str();

    RunArgs run;
    auto* runc = app.add_subcommand("run", "Run an experiment and write the metrics CSV");
    add_run_flags(runc, run);
    runc->add_option("--T", run.rounds, "Feedback rounds");
    runc->add_option("--out", run.out, "Metrics CSV")->capture_default_str();
    runc->add_option("--sweep-c", run.sweep_c, "MMP-online: comma-separated C values");
    runc->add_option("--events-dir", run.events_dir, "Write per-seed event logs here");

    PretrainArgs pre;
    pre.run.out = "weights.json";
    auto* prec = app.add_subcommand("pretrain", "Pre-train TPP weights on a split's source tasks");
    add_run_flags(prec, pre.run);
    prec->add_option("--seed", pre.seed, "Seed")->capture_default_str();
    prec->add_option("--rounds", pre.rounds, "Pre-training rounds");
    prec->add_option("--out", pre.run.out, "weights.v1 output")->capture_default_str();

    ReplayArgs rep;
    auto* repc = app.add_subcommand("replay", "Re-apply a logged event stream to initial weights");
    repc->add_option("--events", rep.events, "Event log (JSONL)")->required()->check(CLI::ExistingFile);
    repc->add_option("--init", rep.init, "Initial weights (default: zeros)")->check(CLI::ExistingFile);
    repc->add_option("--expect", rep.expect, "Compare with these weights; exit 4 on mismatch")->check(CLI::ExistingFile);
    repc->add_option("--out", rep.out, "Write the replayed weights");

    std::string task, ctx_out;
    auto* exp = app.add_subcommand("export-context", "Write a bundled task as context.v1");
    exp->add_option("--task", task, "Task id")->required();
    exp->add_option("--out", ctx_out, "Output file (default: stdout)");

    app.add_subcommand("tasks", "List bundled task ids");

    ServeArgs srv;
    auto* serve = app.add_subcommand("serve", "Start the session service");
    serve->add_option("--port", srv.port, "Port (0 = ephemeral)")->capture_default_str();
    serve->add_option("--host", srv.host, "Bind address")->capture_default_str();
    serve->add_option("--data-dir", srv.data_dir, "Session persistence directory");
    serve->add_option("--origin", srv.origin, "Allowed CORS origin")->capture_default_str();
    serve->add_option("--candidates", srv.candidates, "Default candidates per session")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_dataset(ds);
        if (*runc) return cmd_run(run);
        if (*prec) return cmd_pretrain(pre);
        if (*repc) return cmd_replay(rep);
        if (*exp) return cmd_export_context(task, ctx_out);
        if (app.got_subcommand("tasks")) {
            for (const auto& id : task_ids()) std::cout << id << "\n";
            return 0;
        }
        if (*serve) return cmd_serve(srv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
