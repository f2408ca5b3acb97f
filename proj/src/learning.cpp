#include "coactive/learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>

#include "coactive/errors.hpp"
#include "coactive/io.hpp"
#include "coactive/random.hpp"

namespace coactive {

WeightState WeightState::zeros(std::size_t m) {
    WeightState w;
    w.m = m;
    w.w_O.assign(object_feature_dims(m), 0.0);
    w.w_E.assign(kEnvDims, 0.0);
    return w;
}

std::vector<double> WeightState::flat() const {
    std::vector<double> out(w_O);
    out.insert(out.end(), w_E.begin(), w_E.end());
    return out;
}

void WeightState::set_flat(std::span<const double> w) {
    if (w.size() != size()) throw ContractError("weight vector length mismatch");
    std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(w_O.size()), w_O.begin());
    std::copy(w.begin() + static_cast<std::ptrdiff_t>(w_O.size()), w.end(), w_E.begin());
}

nlohmann::json weights_to_json(const WeightState& w) {
    return {{"schema", "weights.v1"}, {"M", w.m}, {"w_O", w.w_O}, {"w_E", w.w_E}, {"t", w.t},
            {"standardization", w.standardization}};
}

WeightState weights_from_json(const nlohmann::json& j) {
    try {
        WeightState w;
        w.m = j.at("M").get<std::size_t>();
        w.w_O = j.at("w_O").get<std::vector<double>>();
        w.w_E = j.at("w_E").get<std::vector<double>>();
        w.t = j.at("t").get<int>();
        w.standardization = j.value("standardization", std::vector<double>{});
        if (w.w_O.size() != object_feature_dims(w.m) || w.w_E.size() != kEnvDims) {
            throw ParseError("weights: w_O/w_E lengths do not match M");
        }
        if (!w.standardization.empty() && w.standardization.size() != w.size()) {
            throw ParseError("weights: standardization length does not match the weights");
        }
        if (w.t < 1) throw ParseError("weights: t must be >= 1");
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("weights: ") + e.what());
    }
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureVector> sample) {
    if (sample.empty()) throw ContractError("scaler needs a non-empty calibration sample");
    const std::size_t dims = sample.front().size();
    std::vector<double> mean(dims, 0.0), sq(dims, 0.0);
    for (const auto& f : sample) {
        const auto v = f.flat();
        for (std::size_t i = 0; i < dims; ++i) mean[i] += v[i];
    }
    for (double& v : mean) v /= static_cast<double>(sample.size());
    for (const auto& f : sample) {
        const auto v = f.flat();
        for (std::size_t i = 0; i < dims; ++i) sq[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
    }
    FeatureScaler s;
    s.scale.resize(dims);
    for (std::size_t i = 0; i < dims; ++i) {
        const double sd = std::sqrt(sq[i] / static_cast<double>(sample.size()));
        s.scale[i] = sd > 1e-9 ? sd : 1.0;
    }
    return s;
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureVector> sample, std::span<const int> groups) {
    if (sample.empty()) throw ContractError("scaler needs a non-empty calibration sample");
    if (groups.size() != sample.size()) throw ContractError("scaler: one group per sample required");
    const std::size_t dims = sample.front().size();
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);

    std::vector<std::vector<double>> flat;
    flat.reserve(sample.size());
    for (const auto& f : sample) flat.push_back(f.flat());

    std::vector<double> var_sum(dims, 0.0);
    std::vector<int> active(dims, 0);
    for (const auto& [g, idx] : members) {
        for (std::size_t d = 0; d < dims; ++d) {
            double mean = 0.0;
            for (std::size_t i : idx) mean += flat[i][d];
            mean /= static_cast<double>(idx.size());
            double var = 0.0;
            for (std::size_t i : idx) var += (flat[i][d] - mean) * (flat[i][d] - mean);
            var /= static_cast<double>(idx.size());
            if (var > 1e-18) {
                var_sum[d] += var;
                ++active[d];
            }
        }
    }
    FeatureScaler s;
    s.scale.resize(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        const double sd = active[d] > 0 ? std::sqrt(var_sum[d] / active[d]) : 0.0;
        s.scale[d] = sd > 1e-9 ? sd : 1.0;
    }
    return s;
}

FeatureScaler FeatureScaler::identity(std::size_t dims) { return {std::vector<double>(dims, 1.0)}; }

FeatureVector FeatureScaler::apply(const FeatureVector& raw) const {
    if (raw.size() != scale.size()) throw ContractError("scaler dimension mismatch");
    FeatureVector out = raw;
    for (std::size_t i = 0; i < out.phi_O.size(); ++i) out.phi_O[i] /= scale[i];
    for (std::size_t i = 0; i < out.phi_E.size(); ++i) out.phi_E[i] /= scale[out.phi_O.size() + i];
    return out;
}

RuleTerms rule_terms(const ArmModel& arm, const Context& ctx, const SweptGeometry& g, std::span<const JointVector> q) {
    RuleTerms t;
    const std::size_t n = g.size();
    double up_sum = 0.0;
    t.min_upright = 1.0;
    for (const auto& p : g.object_poses) {
        const double up = (p.rotation() * g.object_vertical_axis).z;
        up_sum += up;
        t.min_upright = std::min(t.min_upright, up);
    }
    t.mean_upright = up_sum / static_cast<double>(n);

    t.min_human_distance = 1.0;
    t.min_clearance = 1.0;
    for (const auto& held : g.held) {
        for (const auto& h : ctx.human_regions) {
            t.min_human_distance = std::min(t.min_human_distance, min_collision_distance(held, h).distance);
        }
        for (const auto& o : ctx.objects) {
            if (o.id == ctx.manipulated_id) continue;
            t.min_clearance = std::min(t.min_clearance, min_collision_distance(held, o.shape_pose).distance);
        }
    }

    const SurfaceDistances d = surface_distances(ctx, g);
    t.mean_height = std::accumulate(d.vertical.begin(), d.vertical.end(), 0.0) / static_cast<double>(n);
    t.max_height = *std::max_element(d.vertical.begin(), d.vertical.end());

    double contortion = 0.0;
    for (const auto& qj : q) {
        for (std::size_t i = 0; i < qj.size(); ++i) {
            const auto [lo, hi] = arm.joint_limits[i];
            const double u = (qj[i] - 0.5 * (lo + hi)) / (0.5 * (hi - lo));
            contortion += u * u;
        }
    }
    t.contortion = contortion / static_cast<double>(q.size());

    for (std::size_t j = 1; j < q.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < q[j].size(); ++i) s += (q[j][i] - q[j - 1][i]) * (q[j][i] - q[j - 1][i]);
        t.path_length += std::sqrt(s);
    }
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const Vec3 acc = g.object_poses[j + 1].position - g.object_poses[j].position * 2.0 + g.object_poses[j - 1].position;
        t.roughness += norm2(acc);
    }
    return t;
}

RuleTerms rule_terms(const ArmModel& arm, const Context& ctx, const Trajectory& y) {
    return rule_terms(arm, ctx, sweep(arm, ctx, y), y.waypoints);
}

RuleSet RuleSet::manual_default() {
    RuleSet r;
    r.upright = 1.0;
    r.hazard_human = 2.0;
    r.human_scale = 0.15;
    r.fragile_low = 2.0;
    r.clearance = 0.0;
    r.clearance_cap = 0.2;
    r.contortion = 0.5;
    r.path_length = 0.0;
    r.roughness = 0.0;
    r.height_cap = 0.0;
    r.height_penalty = 0.0;
    r.liquid_upright = 0.0;
    return r;
}

RuleSet RuleSet::from_json(const nlohmann::json& j) {
    RuleSet r;
    r.upright = j.value("upright", r.upright);
    r.hazard_human = j.value("hazard_human", r.hazard_human);
    r.human_scale = j.value("human_scale", r.human_scale);
    r.fragile_low = j.value("fragile_low", r.fragile_low);
    r.clearance = j.value("clearance", r.clearance);
    r.clearance_cap = j.value("clearance_cap", r.clearance_cap);
    r.contortion = j.value("contortion", r.contortion);
    r.path_length = j.value("path_length", r.path_length);
    r.roughness = j.value("roughness", r.roughness);
    r.height_cap = j.value("height_cap", r.height_cap);
    r.height_penalty = j.value("height_penalty", r.height_penalty);
    r.liquid_upright = j.value("liquid_upright", r.liquid_upright);
    return r;
}

nlohmann::json RuleSet::to_json() const {
    return {{"upright", upright},         {"hazard_human", hazard_human}, {"human_scale", human_scale},
            {"fragile_low", fragile_low}, {"clearance", clearance},       {"clearance_cap", clearance_cap},
            {"contortion", contortion},   {"path_length", path_length},   {"roughness", roughness},
            {"height_cap", height_cap},   {"height_penalty", height_penalty}, {"liquid_upright", liquid_upright}};
}

namespace {

bool has_property(const Context& ctx, const ObjectInstance& o, std::string_view name) {
    for (std::size_t i = 0; i < ctx.properties.size(); ++i) {
        if (ctx.properties[i] == name) return o.attributes[i] == 1;
    }
    return false;
}

}  // namespace

double rule_score(const Context& ctx, const RuleTerms& t, const RuleSet& r) {
    const ObjectInstance& held = ctx.manipulated();
    double s = r.upright * (t.mean_upright + t.min_upright);
    if (has_property(ctx, held, "liquid")) s += r.liquid_upright * t.min_upright;
    if (has_property(ctx, held, "sharp") || has_property(ctx, held, "hot")) {
        s -= r.hazard_human * std::exp(-t.min_human_distance / r.human_scale);
    }
    if (has_property(ctx, held, "fragile")) s -= r.fragile_low * t.mean_height;
    s += r.clearance * std::min(t.min_clearance, r.clearance_cap);
    s -= r.contortion * t.contortion;
    s -= r.path_length * t.path_length;
    s -= r.roughness * t.roughness;
    s -= r.height_penalty * std::max(0.0, t.max_height - r.height_cap);
    return s;
}

const RuleSet& manual_rules() {
    static const RuleSet rules = [] {
        std::filesystem::path dir = COACTIVE_DATA_DIR;
        if (const char* env = std::getenv("COACTIVE_DATA")) dir = env;
        const auto path = dir / "manual_rules.json";
        if (!std::filesystem::exists(path)) return RuleSet::manual_default();
        return RuleSet::from_json(nlohmann::json::parse(read_file(path)));
    }();
    return rules;
}

Candidate make_candidate(const ArmModel& arm, const Context& ctx, const FeatureScaler& scaler, int id, Trajectory y,
                         const FeatureConfig& cfg) {
    Candidate c;
    c.id = id;
    const SweptGeometry g = sweep(arm, ctx, y);
    c.phi = scaler.apply(compute_features(ctx, g, cfg));
    c.terms = rule_terms(arm, ctx, g, y.waypoints);
    c.trajectory = std::move(y);
    return c;
}

double manual_score(const Context& ctx, const RuleTerms& terms) { return rule_score(ctx, terms, manual_rules()); }

double score(const FeatureVector& phi, const WeightState& w) {
    if (phi.phi_O.size() != w.w_O.size() || phi.phi_E.size() != w.w_E.size()) {
        throw ContractError("feature dimensions (" + std::to_string(phi.phi_O.size()) + "+" +
                            std::to_string(phi.phi_E.size()) + ") do not match weights (" +
                            std::to_string(w.w_O.size()) + "+" + std::to_string(w.w_E.size()) + ")");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < w.w_O.size(); ++i) s += w.w_O[i] * phi.phi_O[i];
    for (std::size_t i = 0; i < w.w_E.size(); ++i) s += w.w_E[i] * phi.phi_E[i];
    return s;
}

RankedList rank_by_scores(std::span<const int> ids, std::span<const double> scores) {
    if (ids.empty()) throw ContractError("cannot rank an empty candidate set");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    RankedList out;
    for (std::size_t i : order) {
        out.ids.push_back(ids[i]);
        out.scores.push_back(scores[i]);
    }
    return out;
}

RankedList rank(std::span<const Candidate> candidates, const WeightState& w) {
    if (candidates.empty()) throw ContractError("cannot rank an empty candidate set");
    std::vector<int> ids;
    std::vector<double> scores;
    for (const auto& c : candidates) {
        ids.push_back(c.id);
        scores.push_back(score(c.phi, w));
    }
    return rank_by_scores(ids, scores);
}

WeightState tpp_update(const WeightState& w, const FeatureVector& top, const FeatureVector& feedback) {
    if (top.phi_O.size() != w.w_O.size() || feedback.phi_O.size() != w.w_O.size()) {
        throw ContractError("tpp_update: feature/weight dimension mismatch");
    }
    WeightState out = w;
    for (std::size_t i = 0; i < out.w_O.size(); ++i) out.w_O[i] += feedback.phi_O[i] - top.phi_O[i];
    for (std::size_t i = 0; i < out.w_E.size(); ++i) out.w_E[i] += feedback.phi_E[i] - top.phi_E[i];
    out.t += 1;
    return out;
}

namespace {

double dot_flat(const std::vector<double>& w, const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
}

double l2_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

MmpOnline::MmpOnline(std::size_t m, MmpConfig cfg, std::optional<WeightState> init)
    : m_(m), cfg_(cfg), init_(std::move(init)), w_(init_ ? *init_ : WeightState::zeros(m)) {}

void MmpOnline::add_example(std::vector<FeatureVector> candidates, FeatureVector feedback) {
    examples_.push_back({std::move(candidates), std::move(feedback)});
}

double MmpOnline::objective(const WeightState& w) const {
    const auto wf = w.flat();
    double obj = cfg_.c > 0.0 ? dot_flat(wf, wf) / cfg_.c : 0.0;
    for (const auto& ex : examples_) {
        const auto fb = ex.feedback.flat();
        const double s_fb = dot_flat(wf, fb);
        double worst = 0.0;  // y = ȳ contributes 0
        for (const auto& c : ex.candidates) {
            const auto cf = c.flat();
            worst = std::max(worst, l2_diff(cf, fb) + dot_flat(wf, cf) - s_fb);
        }
        obj += worst;
    }
    return obj;
}

const WeightState& MmpOnline::retrain() {
    WeightState w = init_ ? *init_ : WeightState::zeros(m_);
    std::vector<double> wf = w.flat();
    trace_.clear();
    // Flatten once; examples do not change during training.
    std::vector<std::vector<std::vector<double>>> cands;
    std::vector<std::vector<double>> fbs;
    for (const auto& ex : examples_) {
        fbs.push_back(ex.feedback.flat());
        auto& list = cands.emplace_back();
        for (const auto& c : ex.candidates) list.push_back(c.flat());
    }
    const double lambda = cfg_.c > 0.0 ? 1.0 / cfg_.c : 0.0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (std::size_t e = 0; e < examples_.size(); ++e) {
            const auto& fb = fbs[e];
            const double s_fb = dot_flat(wf, fb);
            double worst = 0.0;
            const std::vector<double>* arg = nullptr;
            for (const auto& cf : cands[e]) {
                const double v = l2_diff(cf, fb) + dot_flat(wf, cf) - s_fb;
                if (v > worst) {
                    worst = v;
                    arg = &cf;
                }
            }
            const double reg = 2.0 * lambda / static_cast<double>(examples_.size());
            for (std::size_t i = 0; i < wf.size(); ++i) {
                double g = reg * wf[i];
                if (arg) g += (*arg)[i] - fb[i];
                wf[i] -= cfg_.step * g;
            }
        }
        trace_.push_back(wf);
    }
    w.set_flat(wf);
    w.t = static_cast<int>(examples_.size()) + 1;
    w_ = std::move(w);
    return w_;
}

std::vector<std::pair<std::size_t, std::size_t>> rank_pairs(std::span<const LabeledRow> rows) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (rows[i].group == rows[j].group && rows[i].rating > rows[j].rating) pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

WeightState train_oracle_rank(std::span<const LabeledRow> rows, const OracleRankConfig& cfg) {
    if (rows.empty()) throw TrainingError("oracle ranker needs labeled rows");
    const auto pairs = rank_pairs(rows);
    if (pairs.empty()) throw TrainingError("oracle ranker needs at least two distinct ratings within a context");
    if (!(cfg.lambda > 0.0)) throw TrainingError("oracle ranker lambda must be > 0");

    std::vector<std::vector<double>> x;
    x.reserve(rows.size());
    for (const auto& r : rows) x.push_back(r.phi.flat());
    const std::size_t dims = x.front().size();

    // Pegasos on (λ'/2)‖w‖² + mean hinge with λ' = 2λ, i.e. λ‖w‖² + mean hinge.
    const double lam = 2.0 * cfg.lambda;
    std::vector<double> w(dims, 0.0), avg(dims, 0.0);
    Rng rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    const std::size_t total = static_cast<std::size_t>(cfg.epochs) * pairs.size();
    const std::size_t avg_from = total / 2;
    for (std::size_t step = 1; step <= total; ++step) {
        const auto [i, j] = pairs[pick(rng)];
        const double eta = 1.0 / (lam * static_cast<double>(step));
        double margin = 0.0;
        for (std::size_t d = 0; d < dims; ++d) margin += w[d] * (x[i][d] - x[j][d]);
        const double shrink = 1.0 - eta * lam;
        for (double& v : w) v *= shrink;
        if (margin < 1.0) {
            for (std::size_t d = 0; d < dims; ++d) w[d] += eta * (x[i][d] - x[j][d]);
        }
        if (step > avg_from) {
            for (std::size_t d = 0; d < dims; ++d) avg[d] += w[d];
        }
    }
    const double n_avg = static_cast<double>(total - avg_from);
    for (double& v : avg) v /= n_avg;

    const std::size_t no = rows.front().phi.phi_O.size();
    WeightState out = WeightState::zeros(static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(no) / 4.0))));
    out.set_flat(avg);
    return out;
}

Trajectory geometric_plan(const Context& ctx, const PlannerConfig& cfg, const ArmModel& arm) {
    return plan_geometric(ctx, cfg, arm);
}

}  // namespace coactive
