#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coactive/learning.hpp"
#include "coactive/planner.hpp"
#include "coactive/random.hpp"

namespace coactive {

/// Simulated user scoring function s*(x, y).
struct ExpertModel {
    enum class Kind { linear, rules };

    Kind kind = Kind::rules;
    WeightState w_star;  // linear: over the same (scaled) features the learners see
    RuleSet rules;       // rules: nonlinear rule family evaluated on RuleTerms

    static ExpertModel linear(WeightState w);
    static ExpertModel from_rules(RuleSet r);

    double score(const Context& ctx, const Candidate& c) const;

    nlohmann::json to_json() const;
    static ExpertModel from_json(const nlohmann::json& j);
};

/// Gaussian w* with unit norm; the object-interaction block is drawn with
/// `object_weight` times the std of the rest. Deterministic in `seed`.
ExpertModel random_linear_expert(std::size_t m, std::uint64_t seed, double object_weight = 1.0);

enum class FeedbackKind {
    rerank_top,     // first listed trajectory strictly better than the top
    rerank_top5,    // best of the top five
    approx_argmax,  // best of five random candidates (never worse than the top)
    zero_g,         // one waypoint corrected locally
    optimal,        // best in the set (1-informative)
    alpha,          // least improvement reaching a noisy target fraction of the gap
    noisy_rerank,   // rerank_top on perceived scores s* + noise
};

std::string_view to_string(FeedbackKind k);
FeedbackKind feedback_kind_from_string(std::string_view s);

struct RerankOptions {
    /// `alpha` strategy: per-round target = clamp(alpha_mean + alpha_sigma·N(0,1), 0, 1).
    double alpha_mean = 0.3;
    double alpha_sigma = 0.2;
    /// `noisy_rerank`: perception noise std, relative to the std of s* over the list.
    double noise = 0.5;
};

/// Returns a position in `ranked`; `s_star[i]` is the expert score of
/// ranked.ids[i]. Apart from noisy_rerank, never returns a position with s*
/// below the top's.
std::size_t simulate_rerank(const RankedList& ranked, std::span<const double> s_star, FeedbackKind strategy, Rng& rng,
                            const RerankOptions& opts = {});

struct ZeroGConfig {
    int perturbations = 5;  // K per interior waypoint
    double sigma = 0.15;    // rad
};

/// Best collision-free single-waypoint modification of `y` under the
/// expert; `y` itself when nothing improves. The result keeps y's id.
Candidate simulate_zero_g(const Candidate& y, const Context& ctx, const CollisionWorld& world,
                          const FeatureScaler& scaler, const ExpertModel& expert, const ZeroGConfig& cfg, Rng& rng,
                          double edge_resolution = 0.04);

struct Informativeness {
    double realized_alpha = 1.0;
    double xi = 0.0;
};

Informativeness informativeness(double s_top, double s_feedback, double s_best, double alpha);

struct FeedbackEvent {
    int round = 1;
    std::string context_id;
    FeedbackKind kind = FeedbackKind::rerank_top;
    int presented_id = 0;
    int feedback_id = 0;
    bool improved = false;
    double realized_alpha = 1.0;
    double xi = 0.0;
    double alpha = 1.0;  // α used for ξ
    double s_presented = 0.0;
    double s_feedback = 0.0;
    double s_best = 0.0;
    /// Scaled features of y_t and ȳ_t; enough to replay the update without replanning.
    FeatureVector phi_presented;
    FeatureVector phi_feedback;
    std::optional<Trajectory> corrected;  // zero-G result

    double regret() const { return s_best - s_presented; }
};

nlohmann::json event_to_json(const FeedbackEvent& e);
FeedbackEvent event_from_json(const nlohmann::json& j);

std::string events_to_jsonl(std::span<const FeedbackEvent> events);
std::vector<FeedbackEvent> events_from_jsonl(std::string_view text);

/// Applies every logged update to `init` (zero weights by default).
WeightState replay_events(std::span<const FeedbackEvent> events, const WeightState& init);

}  // namespace coactive
