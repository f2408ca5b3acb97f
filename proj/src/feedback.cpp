#include "coactive/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coactive/errors.hpp"
#include "coactive/io.hpp"

namespace coactive {

ExpertModel ExpertModel::linear(WeightState w) {
    ExpertModel e;
    e.kind = Kind::linear;
    e.w_star = std::move(w);
    return e;
}

ExpertModel ExpertModel::from_rules(RuleSet r) {
    ExpertModel e;
    e.kind = Kind::rules;
    e.rules = r;
    return e;
}

double ExpertModel::score(const Context& ctx, const Candidate& c) const {
    return kind == Kind::linear ? coactive::score(c.phi, w_star) : rule_score(ctx, c.terms, rules);
}

nlohmann::json ExpertModel::to_json() const {
    if (kind == Kind::linear) return {{"kind", "linear"}, {"w_star", weights_to_json(w_star)}};
    return {{"kind", "rules"}, {"rules", rules.to_json()}};
}

ExpertModel ExpertModel::from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "linear") return linear(weights_from_json(j.at("w_star")));
    if (kind == "rules") return from_rules(RuleSet::from_json(j.at("rules")));
    throw ParseError("expert.kind: expected 'linear' or 'rules'");
}

ExpertModel random_linear_expert(std::size_t m, std::uint64_t seed, double object_weight) {
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    WeightState w = WeightState::zeros(m);
    std::vector<double> flat(w.size());
    double norm = 0.0;
    const std::size_t n_obj = w.w_O.size();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        flat[i] = n01(rng) * (i < n_obj ? object_weight : 1.0);
        norm += flat[i] * flat[i];
    }
    norm = std::sqrt(norm);
    for (double& v : flat) v /= norm;
    w.set_flat(flat);
    return ExpertModel::linear(std::move(w));
}

std::string_view to_string(FeedbackKind k) {
    switch (k) {
        case FeedbackKind::rerank_top: return "rerank_top";
        case FeedbackKind::rerank_top5: return "rerank_top5";
        case FeedbackKind::approx_argmax: return "approx_argmax";
        case FeedbackKind::zero_g: return "zero_g";
        case FeedbackKind::optimal: return "optimal";
        case FeedbackKind::alpha: return "alpha";
        case FeedbackKind::noisy_rerank: return "noisy_rerank";
    }
    return "?";
}

FeedbackKind feedback_kind_from_string(std::string_view s) {
    for (auto k : {FeedbackKind::rerank_top, FeedbackKind::rerank_top5, FeedbackKind::approx_argmax,
                   FeedbackKind::zero_g, FeedbackKind::optimal, FeedbackKind::alpha, FeedbackKind::noisy_rerank}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown feedback kind '" + std::string(s) +
                      "' (valid: rerank_top, rerank_top5, approx_argmax, zero_g, optimal, alpha, noisy_rerank)");
}

namespace {

std::size_t argmax_in(std::span<const double> s, std::span<const std::size_t> positions) {
    std::size_t best = positions.front();
    for (std::size_t p : positions) {
        if (s[p] > s[best]) best = p;  // first position wins ties
    }
    return best;
}

}  // namespace

std::size_t simulate_rerank(const RankedList& ranked, std::span<const double> s_star, FeedbackKind strategy, Rng& rng,
                            const RerankOptions& opts) {
    if (ranked.ids.empty()) throw ContractError("simulate_rerank: empty ranking");
    if (s_star.size() != ranked.ids.size()) throw ContractError("simulate_rerank: score count mismatch");
    const std::size_t n = s_star.size();
    switch (strategy) {
        case FeedbackKind::rerank_top:
            for (std::size_t i = 1; i < n; ++i) {
                if (s_star[i] > s_star[0]) return i;
            }
            return 0;
        case FeedbackKind::rerank_top5: {
            std::vector<std::size_t> pos(std::min<std::size_t>(5, n));
            for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
            return argmax_in(s_star, pos);
        }
        case FeedbackKind::approx_argmax: {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            std::vector<std::size_t> pick;
            std::sample(all.begin(), all.end(), std::back_inserter(pick), 5, rng);
            const std::size_t best = argmax_in(s_star, pick);
            return s_star[best] > s_star[0] ? best : 0;
        }
        case FeedbackKind::optimal: {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            return argmax_in(s_star, all);
        }
        case FeedbackKind::alpha: {
            std::normal_distribution<double> n01(0.0, 1.0);
            const double target = std::clamp(opts.alpha_mean + opts.alpha_sigma * n01(rng), 0.0, 1.0);
            const double best = *std::max_element(s_star.begin(), s_star.end());
            const double gap = best - s_star[0];
            if (gap <= 0.0) return 0;
            // Smallest improvement whose realized α reaches the target.
            std::size_t chosen = 0;
            double chosen_gain = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                const double gain = s_star[i] - s_star[0];
                if (gain / gap >= target && gain < chosen_gain) {
                    chosen = i;
                    chosen_gain = gain;
                }
            }
            return chosen;
        }
        case FeedbackKind::noisy_rerank: {
            double mean = 0.0, var = 0.0;
            for (double v : s_star) mean += v;
            mean /= static_cast<double>(n);
            for (double v : s_star) var += (v - mean) * (v - mean);
            const double sd = std::sqrt(var / static_cast<double>(n));
            std::normal_distribution<double> noise(0.0, opts.noise * sd);
            std::vector<double> perceived(n);
            for (std::size_t i = 0; i < n; ++i) perceived[i] = s_star[i] + noise(rng);
            for (std::size_t i = 1; i < n; ++i) {
                if (perceived[i] > perceived[0]) return i;
            }
            return 0;
        }
        case FeedbackKind::zero_g:
            throw ContractError("simulate_rerank: zero_g is not a re-rank strategy");
    }
    return 0;
}

Candidate simulate_zero_g(const Candidate& y, const Context& ctx, const CollisionWorld& world,
                          const FeatureScaler& scaler, const ExpertModel& expert, const ZeroGConfig& cfg, Rng& rng,
                          double edge_resolution) {
    if (cfg.sigma <= 0.0 || cfg.perturbations <= 0) return y;
    const ArmModel& arm = world.arm();
    const auto& wp = y.trajectory.waypoints;
    std::normal_distribution<double> noise(0.0, cfg.sigma);

    Candidate best = y;
    double best_score = expert.score(ctx, y);
    for (std::size_t j = 1; j + 1 < wp.size(); ++j) {
        for (int k = 0; k < cfg.perturbations; ++k) {
            JointVector q = wp[j];
            for (double& v : q) v += noise(rng);
            if (!arm.within_limits(q) || !world.is_collision_free(q)) continue;
            if (!world.is_motion_free(wp[j - 1], q, edge_resolution) || !world.is_motion_free(q, wp[j + 1], edge_resolution)) {
                continue;
            }
            Trajectory t = y.trajectory;
            t.waypoints[j] = std::move(q);
            Candidate c = make_candidate(arm, ctx, scaler, y.id, std::move(t));
            const double s = expert.score(ctx, c);
            if (s > best_score) {
                best_score = s;
                best = std::move(c);
            }
        }
    }
    return best;
}

Informativeness informativeness(double s_top, double s_feedback, double s_best, double alpha) {
    Informativeness out;
    const double gap = s_best - s_top;
    const double gain = s_feedback - s_top;
    out.realized_alpha = gap > 0.0 ? gain / gap : 1.0;
    out.xi = std::max(0.0, alpha * gap - gain);
    return out;
}

namespace {

nlohmann::json phi_json(const FeatureVector& f) { return {{"phi_O", f.phi_O}, {"phi_E", f.phi_E}}; }

FeatureVector phi_from(const nlohmann::json& j) {
    FeatureVector f;
    f.phi_O = j.at("phi_O").get<std::vector<double>>();
    const auto e = j.at("phi_E").get<std::vector<double>>();
    if (e.size() != kEnvDims) throw ParseError("event phi_E: expected 75 entries");
    std::copy(e.begin(), e.end(), f.phi_E.begin());
    return f;
}

}  // namespace

nlohmann::json event_to_json(const FeedbackEvent& e) {
    nlohmann::json j{{"round", e.round},
                     {"context_id", e.context_id},
                     {"kind", std::string(to_string(e.kind))},
                     {"presented", e.presented_id},
                     {"feedback", e.feedback_id},
                     {"improved", e.improved},
                     {"realized_alpha", e.realized_alpha},
                     {"xi", e.xi},
                     {"alpha", e.alpha},
                     {"s_presented", e.s_presented},
                     {"s_feedback", e.s_feedback},
                     {"s_best", e.s_best},
                     {"phi_presented", phi_json(e.phi_presented)},
                     {"phi_feedback", phi_json(e.phi_feedback)}};
    if (e.corrected) j["corrected"] = trajectory_to_json(*e.corrected);
    return j;
}

FeedbackEvent event_from_json(const nlohmann::json& j) {
    try {
        FeedbackEvent e;
        e.round = j.at("round").get<int>();
        e.context_id = j.at("context_id").get<std::string>();
        e.kind = feedback_kind_from_string(j.at("kind").get<std::string>());
        e.presented_id = j.at("presented").get<int>();
        e.feedback_id = j.at("feedback").get<int>();
        e.improved = j.at("improved").get<bool>();
        e.realized_alpha = j.at("realized_alpha").get<double>();
        e.xi = j.at("xi").get<double>();
        e.alpha = j.value("alpha", 1.0);
        e.s_presented = j.value("s_presented", 0.0);
        e.s_feedback = j.value("s_feedback", 0.0);
        e.s_best = j.value("s_best", 0.0);
        e.phi_presented = phi_from(j.at("phi_presented"));
        e.phi_feedback = phi_from(j.at("phi_feedback"));
        if (j.contains("corrected")) e.corrected = trajectory_from_json(j.at("corrected"));
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("feedback event: ") + ex.what());
    } catch (const ConfigError& ex) {
        throw ParseError(std::string("feedback event: ") + ex.what());
    }
}

std::string events_to_jsonl(std::span<const FeedbackEvent> events) {
    std::string out;
    for (const auto& e : events) {
        out += event_to_json(e).dump();
        out += '\n';
    }
    return out;
}

std::vector<FeedbackEvent> events_from_jsonl(std::string_view text) {
    std::vector<FeedbackEvent> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& ex) {
            throw ParseError("event log line " + std::to_string(lineno) + ": " + ex.what());
        }
        out.push_back(event_from_json(j));
    }
    return out;
}

WeightState replay_events(std::span<const FeedbackEvent> events, const WeightState& init) {
    WeightState w = init;
    for (const auto& e : events) w = tpp_update(w, e.phi_presented, e.phi_feedback);
    return w;
}

}  // namespace coactive
