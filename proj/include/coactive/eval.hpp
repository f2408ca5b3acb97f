#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coactive/feedback.hpp"
#include "coactive/learning.hpp"
#include "coactive/planner.hpp"
#include "coactive/scenarios.hpp"

namespace coactive {

inline constexpr std::string_view kNdcgGain = "exponential";  // (2^rating − 1) / log2(i + 1)

/// nDCG@k of `ranking` under 1–5 ratings. Throws ContractError on a missing
/// label or k < 1. An all-zero ideal DCG cannot occur (ratings ≥ 1).
double ndcg_at_k(const RankedList& ranking, const std::map<int, int>& labels, int k);

struct RegretCurve {
    std::vector<double> instantaneous;
    std::vector<double> average;  // REG_T, T = 1..n
};

RegretCurve regret_curve(std::span<const double> instantaneous);
RegretCurve regret_curve(std::span<const FeedbackEvent> events);
/// Recomputes y*_t from the round's candidate set rather than the logged value.
RegretCurve regret_curve(std::span<const FeedbackEvent> events, const ExpertModel& expert,
                         std::span<const Context> contexts, std::span<const std::vector<Candidate>> candidate_sets);

/// Within-context quintile ratings by score rank (ties by position); 3 for all when every score is equal.
std::vector<int> quintile_ratings(std::span<const double> scores);

/// Candidate trajectories of one task with scaled features, planned once.
struct TaskPool {
    Context ctx;
    Family family = Family::manipulation;
    std::vector<Candidate> candidates;
};

/// Per-dimension scale fitted on `per_task` trajectories of every bundled task.
FeatureScaler calibration_scaler(const ArmModel& arm, const PlannerConfig& planner, int per_task = 20);

/// Builds (or fetches from the process-wide memo) the pool for `key`.
std::shared_ptr<const TaskPool> task_pool(const TaskKey& key, const ArmModel& arm, const PlannerConfig& planner,
                                          const FeatureScaler& scaler, int size);

ExpertModel family_expert(Family f);

struct LabeledDataset {
    std::vector<LabeledRow> rows;
    std::vector<double> expert_scores;
    std::vector<Trajectory> trajectories;
};

/// Scores the first `per_context` candidates of each pool with `expert`
/// (or the family's rules expert when null) and assigns quintile ratings.
LabeledDataset generate_labeled_dataset(std::span<const std::shared_ptr<const TaskPool>> pools, int per_context,
                                        const ExpertModel* expert = nullptr);

/// labels.csv (context_id,trajectory_id,rating,expert_score), features.csv
/// and trajectories/<context>.jsonl under `dir`.
void write_labeled_dataset(const LabeledDataset& data, const std::filesystem::path& dir);

enum class Algorithm { tpp, mmp_online, oracle_svm, geometric, manual };
enum class Setting { untrained, pretrained };

std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view s);
std::string_view to_string(Setting s);
Setting setting_from_string(std::string_view s);

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::tpp;
    Setting setting = Setting::untrained;
    FeedbackKind feedback = FeedbackKind::rerank_top;
    int rounds = 20;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::string scenario = "human";
    std::string expert = "rules";  // or "linear"
    double object_weight = 1.0;    // linear expert: relative std of the phi_O block of w*
    RerankOptions rerank;
    double xi_alpha = 1.0;  // α used when logging ξ
    ZeroGConfig zero_g;
    int candidates_per_round = 100;
    int pool_size = 200;
    int eval_size = 100;
    int pretrain_rounds = 40;
    PlannerConfig planner;
    MmpConfig mmp;
    OracleRankConfig oracle;
    std::optional<std::filesystem::path> checkpoint;  // weights.v1 for the pretrained setting
    std::optional<std::filesystem::path> events_dir;  // per-seed JSONL logs
    int workers = 0;                                  // 0: hardware concurrency
    bool evaluate_ndcg = true;

    void validate() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct MetricsRow {
    int round = 1;
    std::uint64_t seed = 0;
    std::string scenario;
    Algorithm algorithm = Algorithm::tpp;
    double ndcg1 = 0.0;
    double ndcg3 = 0.0;
    double regret = 0.0;
    double realized_alpha = 1.0;
    double xi = 0.0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<MetricsRow> rows;
    std::vector<FeedbackEvent> events;
    WeightState initial;
    WeightState final_weights;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<SeedRun> runs;  // sorted by seed

    std::vector<MetricsRow> rows() const;
    /// Mean over seeds of a column at each round.
    std::vector<double> mean_curve(double MetricsRow::*column) const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Pre-trained weights for a split: TPP on the source tasks with the
/// configured feedback. Deterministic in (cfg, seed).
WeightState pretrain_weights(const ExperimentConfig& cfg, std::uint64_t seed);

std::string metrics_csv_header();
std::string metrics_csv(const ExperimentResult& r);
/// `# gain=...` comment line followed by the CSV.
void write_metrics(const ExperimentResult& r, const std::filesystem::path& path);

struct SweepResult {
    std::vector<double> c_values;
    std::vector<double> mean_ndcg3;  // averaged over rounds and seeds
    double best_c = 0.0;
    std::vector<ExperimentResult> results;
};

/// MMP-online over several C; best = highest mean nDCG@3 (C chosen in hindsight).
SweepResult sweep_mmp_c(const ExperimentConfig& base, std::span<const double> c_values);

/// Least-squares slope of log REG_T vs log T over T ∈ [t_lo, t_hi].
double loglog_slope(std::span<const double> reg, int t_lo, int t_hi);

}  // namespace coactive
