// Shared fixtures and independent reference implementations for the unit tests.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "coactive/features.hpp"
#include "coactive/kinematics.hpp"
#include "coactive/scenarios.hpp"
#include "coactive/world.hpp"

namespace testing {

using namespace coactive;

inline std::vector<int> labels_of(std::initializer_list<std::string> names) {
    const auto& all = default_property_names();
    std::vector<int> out(all.size(), 0);
    for (const auto& n : names) {
        out[static_cast<std::size_t>(std::find(all.begin(), all.end(), n) - all.begin())] = 1;
    }
    return out;
}

inline ObjectInstance make_object(const std::string& id, Shape shape, Vec3 at, std::initializer_list<std::string> attrs) {
    ObjectInstance o;
    o.id = id;
    o.shape_pose = {std::move(shape), Pose{at, {}}};
    o.attributes.labels = labels_of(attrs);
    return o;
}

/// One table at z = 0.4 far from everything, a held box and whatever extra objects are passed in.
inline Context bare_context(std::vector<ObjectInstance> extra = {}, std::initializer_list<std::string> held_attrs = {}) {
    Context ctx;
    ctx.id = "fixture";
    ctx.properties = default_property_names();
    ctx.objects.push_back(make_object("held", Box{{0.03, 0.03, 0.03}}, {0.5, 0.0, 0.9}, held_attrs));
    for (auto& o : extra) ctx.objects.push_back(std::move(o));
    ctx.manipulated_id = "held";
    ctx.surfaces.push_back({{5.0, 5.0, 0.4}, 0.5, 0.5, SurfaceKind::table});
    ctx.start_config = {0, 0, 0, 0, 0, 0};
    ctx.goal_config = {0, 0, 0, 0, 0, 0};
    ctx.grasp_transform = Pose{};
    return ctx;
}

// ---- 4×4 homogeneous transforms -------------------------------------------------

using H = std::array<double, 16>;

inline H h_identity() { return {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}; }

inline H h_mul(const H& a, const H& b) {
    H r{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 4 + j];
            r[i * 4 + j] = s;
        }
    }
    return r;
}

inline H h_trans(double x, double y, double z) { return {1, 0, 0, x, 0, 1, 0, y, 0, 0, 1, z, 0, 0, 0, 1}; }

inline H h_rot(char axis, double a) {
    const double c = std::cos(a), s = std::sin(a);
    switch (axis) {
        case 'x': return {1, 0, 0, 0, 0, c, -s, 0, 0, s, c, 0, 0, 0, 0, 1};
        case 'y': return {c, 0, s, 0, 0, 1, 0, 0, -s, 0, c, 0, 0, 0, 0, 1};
        default: return {c, -s, 0, 0, s, c, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    }
}

inline Vec3 h_origin(const H& t) { return {t[3], t[7], t[11]}; }

struct ChainPositions {
    Vec3 elbow, wrist, ee;
};

/// Yaw about z, then pitches that raise the link toward +z (rotation about −y).
inline ChainPositions fk_homogeneous(const ArmModel& arm, const JointVector& q) {
    H t = h_mul(h_trans(arm.shoulder.x, arm.shoulder.y, arm.shoulder.z), h_rot('z', q[0]));
    t = h_mul(t, h_rot('y', -q[1]));
    t = h_mul(t, h_trans(arm.upper_arm, 0, 0));
    ChainPositions out;
    out.elbow = h_origin(t);
    t = h_mul(t, h_rot('y', -q[2]));
    t = h_mul(t, h_trans(arm.forearm, 0, 0));
    out.wrist = h_origin(t);
    t = h_mul(t, h_rot('x', q[3]));
    t = h_mul(t, h_rot('y', -q[4]));
    t = h_mul(t, h_rot('z', q[5]));
    t = h_mul(t, h_trans(arm.ee_offset, 0, 0));
    out.ee = h_origin(t);
    return out;
}

// ---- spectral reference -------------------------------------------------------------

inline std::vector<double> resample_linear(const std::vector<double>& s, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) * static_cast<double>(s.size() - 1) / static_cast<double>(n - 1);
        const std::size_t lo = std::min(static_cast<std::size_t>(x), s.size() - 2);
        const double f = x - static_cast<double>(lo);
        out[i] = s[lo] * (1 - f) + s[lo + 1] * f;
    }
    return out;
}

/// Plain O(n²) DFT; returns mean |X_f|² over bins 1–8 and 9–16 of the 32-point resample.
inline std::pair<double, double> dft_bands(const std::vector<double>& signal) {
    auto x = resample_linear(signal, 32);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / 32.0;
    for (double& v : x) v -= mean;
    std::array<double, 17> power{};
    for (int f = 0; f <= 16; ++f) {
        double re = 0, im = 0;
        for (int n = 0; n < 32; ++n) {
            re += x[n] * std::cos(2 * M_PI * f * n / 32.0);
            im -= x[n] * std::sin(2 * M_PI * f * n / 32.0);
        }
        power[f] = re * re + im * im;
    }
    double lo = 0, hi = 0;
    for (int f = 1; f <= 8; ++f) lo += power[f];
    for (int f = 9; f <= 16; ++f) hi += power[f];
    return {lo / 8.0, hi / 8.0};
}

// ---- ranking references -------------------------------------------------------------

/// nDCG@k by direct formula: `ranked` are ratings in presented order.
inline double ndcg_reference(const std::vector<int>& ranked, int k) {
    auto dcg = [k](const std::vector<int>& r) {
        double s = 0;
        for (int i = 0; i < k && i < static_cast<int>(r.size()); ++i) s += (std::pow(2.0, r[i]) - 1) / std::log2(i + 2.0);
        return s;
    };
    std::vector<int> ideal = ranked;
    std::sort(ideal.rbegin(), ideal.rend());
    return dcg(ranked) / dcg(ideal);
}

inline double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double s = (a[i] - a[j]) * (b[i] - b[j]);
            if (s > 0) ++concordant;
            else if (s < 0) ++discordant;
        }
    }
    return static_cast<double>(concordant - discordant) / static_cast<double>(concordant + discordant);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("coactive_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline JointVector random_q(const ArmModel& arm, std::mt19937_64& rng, double shrink = 1.0) {
    JointVector q;
    for (const auto& [lo, hi] : arm.joint_limits) {
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo) * shrink;
        q.push_back(std::uniform_real_distribution<double>(mid - half, mid + half)(rng));
    }
    return q;
}

}  // namespace testing
