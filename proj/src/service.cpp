#include "coactive/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>
#include <sstream>

#include <httplib.h>

#include "coactive/errors.hpp"
#include "coactive/eval.hpp"
#include "coactive/io.hpp"
#include "coactive/random.hpp"
#include "coactive/scenarios.hpp"

namespace coactive {

using nlohmann::json;

namespace {

constexpr std::string_view kSessionSchema = "session.v1";

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_session_id() {
    static std::atomic<std::uint64_t> counter{0};
    static const std::uint64_t salt = std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32);
    const std::uint64_t v = mix_seed(salt + counter.fetch_add(1));
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << v;
    return out.str();
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

template <class T>
T field(const json& body, const char* name) {
    if (!body.is_object() || !body.contains(name)) {
        throw ServiceError(400, "missing_field", std::string("request body needs '") + name + "'", {{"field", name}});
    }
    try {
        return body.at(name).get<T>();
    } catch (const json::exception&) {
        throw ServiceError(400, "invalid_field", std::string("'") + name + "' has the wrong type", {{"field", name}});
    }
}

json candidate_json(const ArmModel& arm, const Context& ctx, const Candidate& c, double s, int rank, bool geometry) {
    json j{{"id", c.id}, {"rank", rank}, {"score", s}};
    if (!geometry) return j;
    j["waypoints"] = c.trajectory.waypoints;
    json frames = json::array();
    json objects = json::array();
    for (const auto& q : c.trajectory.waypoints) {
        const ArmFrames f = forward_kinematics(arm, q);
        frames.push_back({{"shoulder", vec_json(f.shoulder)},
                          {"elbow", vec_json(f.elbow)},
                          {"wrist", vec_json(f.wrist)},
                          {"end_effector", vec_json(f.end_effector)}});
        objects.push_back(pose_to_json(end_effector_pose(f).compose(ctx.grasp_transform)));
    }
    j["frames"] = std::move(frames);
    j["object_poses"] = std::move(objects);
    return j;
}

}  // namespace

const Candidate* Session::find(int candidate_id) const {
    for (const auto& c : candidates) {
        if (c.id == candidate_id) return &c;
    }
    return nullptr;
}

json session_to_json(const Session& s) {
    json cands = json::array();
    for (const auto& c : s.candidates) cands.push_back({{"id", c.id}, {"waypoints", c.trajectory.waypoints}});
    json events = json::array();
    for (const auto& e : s.events) events.push_back(event_to_json(e));
    return {{"schema", kSessionSchema},
            {"id", s.id},
            {"task_id", s.task_id},
            {"seed", s.seed},
            {"n_candidates", s.n_candidates},
            {"context", context_to_json(s.ctx)},
            {"candidates", std::move(cands)},
            {"next_candidate_id", s.next_candidate_id},
            {"resamples", s.resamples},
            {"weights", weights_to_json(s.weights)},
            {"events", std::move(events)},
            {"expert", s.expert ? s.expert->to_json() : json(nullptr)},
            {"created", s.created},
            {"updated", s.updated}};
}

Session session_from_json(const json& j, const ArmModel& arm, const FeatureScaler& scaler) {
    try {
        if (j.at("schema").get<std::string>() != kSessionSchema) throw ParseError("session: unsupported schema");
        Session s;
        s.id = j.at("id").get<std::string>();
        s.task_id = j.at("task_id").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.n_candidates = j.at("n_candidates").get<int>();
        s.ctx = context_from_json(j.at("context"));
        s.weights = weights_from_json(j.at("weights"));
        // Features are recomputed under the scale the session was created with.
        const FeatureScaler own = s.weights.standardization.empty() ? scaler : FeatureScaler{s.weights.standardization};
        for (const auto& c : j.at("candidates")) {
            Trajectory y{s.ctx.id, c.at("waypoints").get<std::vector<JointVector>>()};
            s.candidates.push_back(make_candidate(arm, s.ctx, own, c.at("id").get<int>(), std::move(y)));
        }
        s.next_candidate_id = j.at("next_candidate_id").get<int>();
        s.resamples = j.value("resamples", 0);
        for (const auto& e : j.at("events")) s.events.push_back(event_from_json(e));
        if (!j.at("expert").is_null()) s.expert = ExpertModel::from_json(j.at("expert"));
        s.created = j.value("created", "");
        s.updated = j.value("updated", "");
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("session: ") + e.what());
    }
}

SessionService::SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)), arm_(scenario_arm()) {
    cfg_.planner.validate();
    scaler_ = calibration_scaler(arm_, cfg_.planner);
    if (cfg_.data_dir) {
        std::filesystem::create_directories(*cfg_.data_dir);
        load_all();
    }
}

void SessionService::load_all() {
    for (const auto& entry : std::filesystem::directory_iterator(*cfg_.data_dir)) {
        if (entry.path().extension() != ".json") continue;
        auto slot = std::make_shared<Slot>();
        slot->session = session_from_json(json::parse(read_file(entry.path())), arm_, scaler_);
        sessions_.emplace(slot->session.id, std::move(slot));
    }
}

void SessionService::persist(const Session& s) const {
    if (!cfg_.data_dir) return;
    // Weights and the event log live in one document, swapped in by rename.
    write_file_atomic(*cfg_.data_dir / (s.id + ".json"), session_to_json(s).dump());
}

std::shared_ptr<SessionService::Slot> SessionService::slot(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown_session", "no session '" + id + "'", {{"session", id}});
    return it->second;
}

std::size_t SessionService::session_count() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
}

Session SessionService::snapshot(const std::string& id) const {
    auto s = slot(id);
    std::lock_guard lock(s->mutex);
    return s->session;
}

std::vector<Candidate> SessionService::plan_candidates(const Context& ctx, const FeatureScaler& scaler,
                                                       std::uint64_t seed, int n, int first_id) const {
    PlannerConfig pc = cfg_.planner;
    pc.n_samples = n;
    pc.seed = seed;
    std::vector<Trajectory> ys;
    try {
        ys = sample_trajectories(ctx, pc, arm_);
    } catch (const PlannerError& e) {
        throw ServiceError(500, "planner_failure", e.what(), {{"sample_index", e.sample_index()}});
    }
    std::vector<Candidate> out;
    out.reserve(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
        out.push_back(make_candidate(arm_, ctx, scaler, first_id + static_cast<int>(i), std::move(ys[i])));
    }
    return out;
}

json SessionService::ranking_json(const Session& s, std::size_t k) const {
    const RankedList r = rank(s.candidates, s.weights);
    json out = json::array();
    for (std::size_t i = 0; i < std::min(k, r.size()); ++i) out.push_back({{"id", r.ids[i]}, {"score", r.scores[i]}});
    return out;
}

json SessionService::list_tasks() const {
    json out = json::array();
    for (const auto& id : task_ids()) {
        const auto key = parse_task_id(id);
        const Context ctx = make_task(id, arm_);
        out.push_back({{"id", id},
                       {"family", std::string(to_string(key->family))},
                       {"manipulated", ctx.manipulated_id},
                       {"objects", ctx.objects.size()},
                       {"humans", ctx.human_regions.size()}});
    }
    return {{"tasks", std::move(out)}};
}

json SessionService::create_session(const json& body) {
    if (!body.is_object()) throw ServiceError(400, "invalid_body", "request body must be a JSON object");
    const std::string task_id = field<std::string>(body, "task_id");
    const auto seed = body.contains("seed") ? field<std::uint64_t>(body, "seed") : std::uint64_t{1};
    const int n = body.contains("n_candidates") ? field<int>(body, "n_candidates") : cfg_.default_candidates;
    if (n < 1 || n > cfg_.max_candidates) {
        throw ServiceError(400, "invalid_field", "n_candidates must be in [1, " + std::to_string(cfg_.max_candidates) + "]",
                           {{"field", "n_candidates"}, {"value", n}});
    }
    const auto key = parse_task_id(task_id);
    if (!key) throw ServiceError(404, "unknown_task", "no task '" + task_id + "'", {{"task_id", task_id}});

    Session s;
    s.id = new_session_id();
    s.task_id = task_id;
    s.seed = seed;
    s.n_candidates = n;
    s.ctx = make_task(task_id, arm_);
    s.candidates = plan_candidates(s.ctx, scaler_, derive_seed(seed, 0), n, 0);
    s.next_candidate_id = n;
    s.weights = WeightState::zeros(s.ctx.property_count());
    s.weights.standardization = scaler_.scale;
    s.expert = family_expert(key->family);
    s.created = s.updated = now_iso();
    persist(s);

    json out{{"id", s.id}, {"task_id", s.task_id}, {"seed", s.seed}, {"n_candidates", n},
             {"ranking", ranking_json(s, s.candidates.size())}};
    auto slot = std::make_shared<Slot>();
    slot->session = std::move(s);
    std::unique_lock lock(map_mutex_);
    sessions_.emplace(slot->session.id, std::move(slot));
    return out;
}

json SessionService::get_session(const std::string& id) const {
    const Session s = snapshot(id);
    return {{"id", s.id},
            {"task_id", s.task_id},
            {"seed", s.seed},
            {"n_candidates", s.n_candidates},
            {"context", context_to_json(s.ctx)},
            {"weights", weights_to_json(s.weights)},
            {"event_count", s.events.size()},
            {"created", s.created},
            {"updated", s.updated}};
}

json SessionService::get_candidates(const std::string& id, int k) const {
    if (k < 1) throw ServiceError(400, "invalid_field", "k must be >= 1", {{"field", "k"}, {"value", k}});
    const Session s = snapshot(id);
    const RankedList r = rank(s.candidates, s.weights);
    json items = json::array();
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), r.size());
    for (std::size_t i = 0; i < n; ++i) {
        items.push_back(candidate_json(arm_, s.ctx, *s.find(r.ids[i]), r.scores[i], static_cast<int>(i), true));
    }
    return {{"session", s.id}, {"total", r.size()}, {"candidates", std::move(items)}};
}

json SessionService::post_feedback(const std::string& id, const json& body) {
    if (!body.is_object()) throw ServiceError(400, "invalid_body", "request body must be a JSON object");
    const std::string kind = field<std::string>(body, "kind");
    if (kind != "rerank" && kind != "zero_g") {
        throw ServiceError(400, "invalid_field", "kind must be 'rerank' or 'zero_g'", {{"field", "kind"}, {"value", kind}});
    }
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    Session s = sl->session;  // committed only after persisting

    const RankedList before = rank(s.candidates, s.weights);
    const Candidate& top = *s.find(before.top());
    std::optional<Candidate> added;
    const Candidate* fb = nullptr;

    if (kind == "rerank") {
        const int selected = field<int>(body, "selected");
        fb = s.find(selected);
        if (!fb) throw ServiceError(404, "unknown_candidate", "no candidate " + std::to_string(selected), {{"selected", selected}});
    } else {
        const int traj = field<int>(body, "trajectory");
        const int j = field<int>(body, "waypoint");
        const auto q = field<JointVector>(body, "joints");
        const Candidate* base = s.find(traj);
        if (!base) throw ServiceError(404, "unknown_candidate", "no candidate " + std::to_string(traj), {{"trajectory", traj}});
        const auto& wp = base->trajectory.waypoints;
        auto infeasible = [&](const char* constraint, const std::string& msg) {
            return ServiceError(422, "infeasible_waypoint", msg, {{"constraint", constraint}, {"waypoint", j}});
        };
        if (j < 1 || j + 1 >= static_cast<int>(wp.size())) {
            throw infeasible("interior_waypoint", "waypoint must be interior (1.." + std::to_string(wp.size() - 2) + ")");
        }
        if (q.size() != arm_.dof()) throw infeasible("dimension", "joints must have " + std::to_string(arm_.dof()) + " entries");
        if (!std::all_of(q.begin(), q.end(), [](double v) { return std::isfinite(v); })) {
            throw infeasible("finite", "joints must be finite");
        }
        if (!arm_.within_limits(q)) throw infeasible("joint_limits", "joints outside the arm's limits");
        const CollisionWorld world(s.ctx, arm_);
        if (!world.is_collision_free(q)) throw infeasible("collision", "configuration is in collision");
        if (!world.is_motion_free(wp[j - 1], q, cfg_.planner.edge_resolution) ||
            !world.is_motion_free(q, wp[j + 1], cfg_.planner.edge_resolution)) {
            throw infeasible("motion", "motion to a neighbouring waypoint collides");
        }
        Trajectory y = base->trajectory;
        y.waypoints[j] = q;
        const FeatureScaler own{s.weights.standardization};
        added = make_candidate(arm_, s.ctx, own, s.next_candidate_id, std::move(y));
    }

    FeedbackEvent e;
    e.round = static_cast<int>(s.events.size()) + 1;
    e.context_id = s.ctx.id;
    e.kind = kind == "rerank" ? FeedbackKind::rerank_top : FeedbackKind::zero_g;
    e.presented_id = top.id;
    e.phi_presented = top.phi;
    if (added) {
        e.feedback_id = added->id;
        e.phi_feedback = added->phi;
        e.corrected = added->trajectory;
    } else {
        e.feedback_id = fb->id;
        e.phi_feedback = fb->phi;
    }
    if (s.expert) {
        e.s_presented = s.expert->score(s.ctx, top);
        e.s_feedback = s.expert->score(s.ctx, added ? *added : *fb);
        e.s_best = e.s_feedback;
        for (const auto& c : s.candidates) e.s_best = std::max(e.s_best, s.expert->score(s.ctx, c));
        const Informativeness inf = informativeness(e.s_presented, e.s_feedback, e.s_best, e.alpha);
        e.realized_alpha = inf.realized_alpha;
        e.xi = inf.xi;
        e.improved = e.s_feedback > e.s_presented;
    } else {
        e.improved = e.feedback_id != e.presented_id;
    }

    if (added) {
        s.candidates.push_back(std::move(*added));
        ++s.next_candidate_id;
    }
    s.weights = tpp_update(s.weights, e.phi_presented, e.phi_feedback);
    s.events.push_back(e);
    s.updated = now_iso();
    persist(s);
    sl->session = std::move(s);
    const Session& cur = sl->session;
    return {{"event", event_to_json(e)}, {"ranking", ranking_json(cur, cur.candidates.size())},
            {"weights", weights_to_json(cur.weights)}};
}

json SessionService::resample(const std::string& id, const json& body) {
    if (!body.is_null() && !body.is_object()) throw ServiceError(400, "invalid_body", "request body must be a JSON object");
    auto sl = slot(id);
    std::lock_guard lock(sl->mutex);
    Session s = sl->session;
    const int n = body.is_object() && body.contains("n_candidates") ? field<int>(body, "n_candidates") : s.n_candidates;
    if (n < 1 || n > cfg_.max_candidates) {
        throw ServiceError(400, "invalid_field", "n_candidates must be in [1, " + std::to_string(cfg_.max_candidates) + "]",
                           {{"field", "n_candidates"}, {"value", n}});
    }
    ++s.resamples;
    const std::uint64_t seed = body.is_object() && body.contains("seed") ? field<std::uint64_t>(body, "seed")
                                                                          : derive_seed(s.seed, s.resamples);
    // Ids keep increasing so logged events never alias a new candidate.
    s.candidates = plan_candidates(s.ctx, FeatureScaler{s.weights.standardization}, seed, n, s.next_candidate_id);
    s.next_candidate_id += n;
    s.n_candidates = n;
    s.updated = now_iso();
    persist(s);
    sl->session = std::move(s);
    return {{"id", id}, {"n_candidates", n}, {"ranking", ranking_json(sl->session, static_cast<std::size_t>(n))}};
}

json SessionService::get_metrics(const std::string& id) const {
    const Session s = snapshot(id);
    WeightState w = WeightState::zeros(s.ctx.property_count());
    w.standardization = s.weights.standardization;
    json trace = json::array();
    json alphas = json::array();
    for (const auto& e : s.events) {
        trace.push_back(score(e.phi_presented, w));
        alphas.push_back(s.expert ? json(e.realized_alpha) : json(nullptr));
        w = tpp_update(w, e.phi_presented, e.phi_feedback);
    }
    return {{"session", s.id},
            {"count", s.events.size()},
            {"top_score_trace", std::move(trace)},
            {"realized_alpha", std::move(alphas)},
            {"replay_matches", w == s.weights}};
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
    SessionService& service;
    std::string origin;
    httplib::Server server;

    Impl(SessionService& s, std::string o) : service(s), origin(std::move(o)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json(nullptr);
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ServiceError(400, "invalid_json", "request body is not valid JSON", {{"parse_error", e.what()}});
    }
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, f(req));
        } catch (const ServiceError& e) {
            send_json(res, e.status(), e.body());
        } catch (const std::exception& e) {
            send_json(res, 500, {{"code", "internal"}, {"message", e.what()}, {"detail", nullptr}});
        }
    };
}

}  // namespace

HttpServer::HttpServer(SessionService& service, std::string cors_origin)
    : impl_(std::make_unique<Impl>(service, std::move(cors_origin))) {
    auto& srv = impl_->server;
    SessionService& svc = impl_->service;
    const std::string origin = impl_->origin;

    srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 404 ? "not_found" : "http_error";
        send_json(res, res.status, {{"code", code}, {"message", "no route for " + req.method + " " + req.path}, {"detail", nullptr}});
    });

    srv.Get("/healthz", guarded([](const httplib::Request&) { return json{{"status", "ok"}}; }));
    srv.Get("/api/tasks", guarded([&svc](const httplib::Request&) { return svc.list_tasks(); }));
    srv.Post("/api/sessions", guarded([&svc](const httplib::Request& req) { return svc.create_session(parse_body(req)); }));
    srv.Get(R"(/api/sessions/([A-Za-z0-9_-]+))",
            guarded([&svc](const httplib::Request& req) { return svc.get_session(req.matches[1]); }));
    srv.Get(R"(/api/sessions/([A-Za-z0-9_-]+)/candidates)", guarded([&svc](const httplib::Request& req) {
                int k = 10;
                if (req.has_param("k")) {
                    try {
                        std::size_t pos = 0;
                        const std::string v = req.get_param_value("k");
                        k = std::stoi(v, &pos);
                        if (pos != v.size()) throw std::invalid_argument("k");
                    } catch (const std::exception&) {
                        throw ServiceError(400, "invalid_field", "k must be an integer", {{"field", "k"}});
                    }
                }
                return svc.get_candidates(req.matches[1], k);
            }));
    srv.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/feedback)",
             guarded([&svc](const httplib::Request& req) { return svc.post_feedback(req.matches[1], parse_body(req)); }));
    srv.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/resample)",
             guarded([&svc](const httplib::Request& req) { return svc.resample(req.matches[1], parse_body(req)); }));
    srv.Get(R"(/api/sessions/([A-Za-z0-9_-]+)/metrics)",
            guarded([&svc](const httplib::Request& req) { return svc.get_metrics(req.matches[1]); }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        const int p = srv.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!srv.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    return port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace coactive
