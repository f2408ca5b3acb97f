#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coactive/features.hpp"
#include "coactive/kinematics.hpp"
#include "coactive/planner.hpp"
#include "coactive/world.hpp"

namespace coactive {

/// Learner state: (w_O, w_E) and the round counter. `standardization` holds
/// the per-dimension divisors applied to raw features before scoring.
struct WeightState {
    std::size_t m = 6;
    std::vector<double> w_O;
    std::vector<double> w_E;
    int t = 1;
    std::vector<double> standardization;

    static WeightState zeros(std::size_t m);
    std::size_t size() const { return w_O.size() + w_E.size(); }
    std::vector<double> flat() const;
    void set_flat(std::span<const double> w);

    friend bool operator==(const WeightState&, const WeightState&) = default;
};

nlohmann::json weights_to_json(const WeightState& w);
WeightState weights_from_json(const nlohmann::json& j);

/// Per-dimension scale constants fitted once on a calibration sample.
struct FeatureScaler {
    std::vector<double> scale;

    /// Scale = standard deviation of each dimension; 1 where it is (near) zero.
    static FeatureScaler fit(std::span<const FeatureVector> sample);
    /// Within-group spread: per dimension, the root mean of the per-group
    /// variances over the groups where it varies. Rankings only compare
    /// trajectories of one context, so that is the spread that matters.
    static FeatureScaler fit(std::span<const FeatureVector> sample, std::span<const int> groups);
    static FeatureScaler identity(std::size_t dims);
    FeatureVector apply(const FeatureVector& raw) const;
};

/// Geometric quantities the hand-coded scorers are written against.
struct RuleTerms {
    double min_upright = 1.0;         // min cos between object up and world z
    double mean_upright = 1.0;
    double min_human_distance = 1.0;  // capped at 1 m; 1 when no humans
    double mean_height = 0.0;         // mean vertical distance to the surface below
    double max_height = 0.0;
    double min_clearance = 1.0;       // to non-manipulated objects, capped at 1 m
    double contortion = 0.0;          // mean squared normalized joint offset from mid-range
    double path_length = 0.0;         // joint space, rad
    double roughness = 0.0;           // sum of squared second differences of object position
};

RuleTerms rule_terms(const ArmModel& arm, const Context& ctx, const SweptGeometry& g, std::span<const JointVector> q);
RuleTerms rule_terms(const ArmModel& arm, const Context& ctx, const Trajectory& y);

/// Weighted rule family shared by the manual baseline and the rules expert.
/// Object-dependent terms fire only for objects with the matching attribute.
struct RuleSet {
    double upright = 1.0;        // × (mean_upright + min_upright)
    double hazard_human = 1.0;   // sharp/hot objects: − exp(−d / human_scale)
    double human_scale = 0.2;
    double fragile_low = 1.0;    // fragile objects: − mean_height
    double clearance = 0.0;      // + min(min_clearance, clearance_cap)
    double clearance_cap = 0.2;
    double contortion = 1.0;     // − contortion
    double path_length = 0.0;    // − path_length
    double roughness = 0.0;      // − roughness
    double height_cap = 0.0;
    double height_penalty = 0.0;  // − max(0, max_height − height_cap)
    double liquid_upright = 0.0;  // liquids: + min_upright

    static RuleSet manual_default();
    static RuleSet from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

double rule_score(const Context& ctx, const RuleTerms& terms, const RuleSet& rules);

/// Manual baseline score with the rule constants from data/manual_rules.json.
double manual_score(const Context& ctx, const RuleTerms& terms);
const RuleSet& manual_rules();

/// A ranked candidate: id, trajectory, standardized features and rule terms.
struct Candidate {
    int id = 0;
    Trajectory trajectory;
    FeatureVector phi;
    RuleTerms terms;
};

/// Sweeps y once and fills both the scaled features and the rule terms.
Candidate make_candidate(const ArmModel& arm, const Context& ctx, const FeatureScaler& scaler, int id, Trajectory y,
                         const FeatureConfig& cfg = {});

struct RankedList {
    std::vector<int> ids;
    std::vector<double> scores;

    std::size_t size() const { return ids.size(); }
    int top() const { return ids.front(); }
};

/// w_O·φ_O + w_E·φ_E; throws ContractError on a dimension mismatch.
double score(const FeatureVector& phi, const WeightState& w);

/// Descending score, ties by ascending id. Throws ContractError when empty.
RankedList rank(std::span<const Candidate> candidates, const WeightState& w);
RankedList rank_by_scores(std::span<const int> ids, std::span<const double> scores);

/// w += φ(feedback) − φ(top); t += 1.
WeightState tpp_update(const WeightState& w, const FeatureVector& top, const FeatureVector& feedback);

struct MmpConfig {
    double c = 1.0;      // regularization λ = 1/C; C <= 0 disables it
    int epochs = 50;
    double step = 0.05;  // constant subgradient step
};

/// Online max-margin planning: every feedback is treated as the optimal
/// trajectory of its candidate set and the weights are retrained from
/// scratch (or from `init`) on all examples seen so far.
class MmpOnline {
public:
    MmpOnline(std::size_t m, MmpConfig cfg, std::optional<WeightState> init = std::nullopt);

    void add_example(std::vector<FeatureVector> candidates, FeatureVector feedback);
    const WeightState& retrain();
    const WeightState& weights() const { return w_; }
    double objective(const WeightState& w) const;
    std::size_t example_count() const { return examples_.size(); }
    /// Weight vectors after each epoch of the last retrain.
    const std::vector<std::vector<double>>& epoch_trace() const { return trace_; }

private:
    struct Example {
        std::vector<FeatureVector> candidates;
        FeatureVector feedback;
    };
    std::size_t m_;
    MmpConfig cfg_;
    std::optional<WeightState> init_;
    std::vector<Example> examples_;
    WeightState w_;
    std::vector<std::vector<double>> trace_;
};

struct LabeledRow {
    std::string group;  // context id
    int trajectory_id = 0;
    FeatureVector phi;
    int rating = 3;
};

struct OracleRankConfig {
    double lambda = 1e-3;
    int epochs = 20;
    std::uint64_t seed = 7;
};

/// Preference pairs (i, j) with rating_i > rating_j inside one group.
std::vector<std::pair<std::size_t, std::size_t>> rank_pairs(std::span<const LabeledRow> rows);

/// Batch SVM-rank by stochastic subgradient descent on
/// λ‖w‖² + mean over pairs of max(0, 1 − w·(φ_i − φ_j)). Throws
/// TrainingError when no pair exists.
WeightState train_oracle_rank(std::span<const LabeledRow> rows, const OracleRankConfig& cfg);

/// Task-agnostic geometric plan (first feasible BiRRT result).
Trajectory geometric_plan(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm);

}  // namespace coactive
