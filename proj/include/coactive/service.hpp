#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coactive/feedback.hpp"
#include "coactive/learning.hpp"
#include "coactive/planner.hpp"

namespace coactive {

/// Maps onto an HTTP status and the `{code, message, detail}` error body.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}

    int status() const { return status_; }
    const std::string& code() const { return code_; }
    const nlohmann::json& detail() const { return detail_; }
    nlohmann::json body() const { return {{"code", code_}, {"message", what()}, {"detail", detail_}}; }

private:
    int status_;
    std::string code_;
    nlohmann::json detail_;
};

struct Session {
    std::string id;
    std::string task_id;
    std::uint64_t seed = 1;
    int n_candidates = 0;
    Context ctx;
    std::vector<Candidate> candidates;
    int next_candidate_id = 0;
    int resamples = 0;
    WeightState weights;
    std::vector<FeedbackEvent> events;
    std::optional<ExpertModel> expert;  // attached for bundled tasks: enables realized α
    std::string created;
    std::string updated;

    const Candidate* find(int candidate_id) const;
};

struct ServiceConfig {
    std::optional<std::filesystem::path> data_dir;  // one JSON document per session
    PlannerConfig planner;
    int default_candidates = 20;
    int max_candidates = 500;
    std::string cors_origin = "*";
};

/// Session logic behind the HTTP routes. Mutations of one session are
/// serialized by its own mutex; reads copy a consistent snapshot.
class SessionService {
public:
    explicit SessionService(ServiceConfig cfg);

    nlohmann::json list_tasks() const;
    nlohmann::json create_session(const nlohmann::json& body);
    nlohmann::json get_session(const std::string& id) const;
    nlohmann::json get_candidates(const std::string& id, int k) const;
    nlohmann::json post_feedback(const std::string& id, const nlohmann::json& body);
    nlohmann::json resample(const std::string& id, const nlohmann::json& body);
    nlohmann::json get_metrics(const std::string& id) const;

    /// Snapshot of a session (for tests and replay checks).
    Session snapshot(const std::string& id) const;
    std::size_t session_count() const;

    const ArmModel& arm() const { return arm_; }
    const FeatureScaler& scaler() const { return scaler_; }

private:
    struct Slot {
        mutable std::mutex mutex;
        Session session;
    };

    std::shared_ptr<Slot> slot(const std::string& id) const;
    void persist(const Session& s) const;
    void load_all();
    std::vector<Candidate> plan_candidates(const Context& ctx, const FeatureScaler& scaler, std::uint64_t seed, int n,
                                           int first_id) const;
    nlohmann::json ranking_json(const Session& s, std::size_t k) const;

    ServiceConfig cfg_;
    ArmModel arm_;
    FeatureScaler scaler_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
};

nlohmann::json session_to_json(const Session& s);
/// Rebuilds candidates (features recomputed from the stored trajectories).
Session session_from_json(const nlohmann::json& j, const ArmModel& arm, const FeatureScaler& scaler);

/// Binds every route onto a cpp-httplib server and serves until stop().
class HttpServer {
public:
    HttpServer(SessionService& service, std::string cors_origin = "*");
    ~HttpServer();

    /// Binds to host:port (port 0 = ephemeral) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void serve();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace coactive
