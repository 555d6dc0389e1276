#pragma once

// Global ego-motion: six-parameter affine model fitted to block motion
// vectors by iteratively reweighted least squares.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "egoadl/error.hpp"
#include "egoadl/ingest.hpp"

namespace egoadl {

/// (dx, dy) = (a1, a4) + [[a2, a3], [a5, a6]] (x, y), pixel units, origin top-left.
struct AffineMotionModel {
    std::array<double, 6> a{};  // a1..a6 stored at a[0]..a[5]
    double inlier_fraction = 1.0;

    double a1() const { return a[0]; }
    double a2() const { return a[1]; }
    double a3() const { return a[2]; }
    double a4() const { return a[3]; }
    double a5() const { return a[4]; }
    double a6() const { return a[5]; }

    static AffineMotionModel translation(double tx, double ty) {
        AffineMotionModel m;
        m.a = {tx, 0, 0, ty, 0, 0};
        return m;
    }

    friend bool operator==(const AffineMotionModel&, const AffineMotionModel&) = default;
};

struct Point2 {
    double x = 0, y = 0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

enum class WeightFunction { tukey, huber };

struct RobustConfig {
    int max_iterations = 20;
    double convergence_eps = 1e-8;
    WeightFunction weight_function = WeightFunction::tukey;
    // Only the MAD scale estimator is implemented.
};

namespace motion {

inline constexpr double kTukeyC = 4.685;
inline constexpr double kHuberK = 1.345;
inline constexpr double kMadToSigma = 1.4826;
// Residual scale never drops below this, so exact fits keep unit weights.
inline constexpr double kScaleFloor = 1e-6;

/// Displacement predicted by the model at a point.
inline Point2 displacement(const AffineMotionModel& m, Point2 p) {
    return {m.a[0] + m.a[1] * p.x + m.a[2] * p.y, m.a[3] + m.a[4] * p.x + m.a[5] * p.y};
}

/// Position of a point after one frame of motion.
inline Point2 apply_model(const AffineMotionModel& m, Point2 p) {
    const Point2 d = displacement(m, p);
    return {p.x + d.x, p.y + d.y};
}

namespace detail {

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + n / 2);
    return 0.5 * (lo + hi);
}

inline double robust_weight(WeightFunction f, double r, double scale) {
    if (f == WeightFunction::tukey) {
        const double c = kTukeyC * scale;
        if (r >= c) return 0.0;
        const double u = r / c;
        const double t = 1.0 - u * u;
        return t * t;
    }
    const double k = kHuberK * scale;
    return r <= k ? 1.0 : k / r;
}

// Weighted least squares for both displacement components; returns false
// when fewer than three weighted centers remain or the system is rank deficient.
inline bool weighted_fit(const std::vector<MotionVector>& v, const std::vector<double>& w,
                         std::array<double, 6>& a) {
    std::size_t active = 0;
    for (double wi : w) active += wi > 0 ? 1 : 0;
    if (active < 3) return false;
    Eigen::MatrixXd design(static_cast<Eigen::Index>(active), 3);
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(active), 2);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(w[i] > 0)) continue;
        const double s = std::sqrt(w[i]);
        design.row(row) << s, s * v[i].x, s * v[i].y;
        rhs.row(row) << s * v[i].dx, s * v[i].dy;
        ++row;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) return false;
    const Eigen::MatrixXd sol = qr.solve(rhs);
    a = {sol(0, 0), sol(1, 0), sol(2, 0), sol(0, 1), sol(1, 1), sol(2, 1)};
    return true;
}

inline std::vector<double> residual_norms(const std::vector<MotionVector>& v,
                                          const std::array<double, 6>& a) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double ex = v[i].dx - (a[0] + a[1] * v[i].x + a[2] * v[i].y);
        const double ey = v[i].dy - (a[3] + a[4] * v[i].x + a[5] * v[i].y);
        r[i] = std::hypot(ex, ey);
        if (!std::isfinite(r[i])) throw NumericError("estimate_affine: non-finite residual");
    }
    return r;
}

/// Residual vectors are centered on zero, so the MAD of the residuals is the
/// median residual norm.
inline std::vector<double> weights_for(const std::vector<double>& r, WeightFunction f) {
    const double scale = std::max(kMadToSigma * median(r), kScaleFloor);
    std::vector<double> w(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = robust_weight(f, r[i], scale);
    return w;
}

}  // namespace detail

/// Robust fit of the affine model to a motion-vector field.
///
/// Starts from ordinary least squares, then reweights with the configured
/// loss at scale 1.4826 * MAD of the residual norms until the parameters
/// move less than convergence_eps or max_iterations is reached.
inline AffineMotionModel estimate_affine(const MotionVectorField& field, const RobustConfig& cfg = {}) {
    if (cfg.max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
    if (!(cfg.convergence_eps > 0)) throw ValidationError("convergence_eps must be > 0");
    const auto& v = field.vectors;
    for (const auto& m : v)
        if (!std::isfinite(m.x) || !std::isfinite(m.y) || !std::isfinite(m.dx) || !std::isfinite(m.dy))
            throw NumericError("estimate_affine: non-finite motion vector");
    if (v.size() < 3)
        throw EstimationError("estimate_affine: need at least 3 vectors, got " + std::to_string(v.size()));

    std::vector<double> w(v.size(), 1.0);
    std::array<double, 6> a{};
    if (!detail::weighted_fit(v, w, a))
        throw EstimationError("estimate_affine: degenerate (collinear) block centers");

    for (int it = 0; it < cfg.max_iterations; ++it) {
        w = detail::weights_for(detail::residual_norms(v, a), cfg.weight_function);
        std::array<double, 6> next{};
        if (!detail::weighted_fit(v, w, next)) break;
        double change = 0;
        for (int k = 0; k < 6; ++k) change = std::max(change, std::abs(next[k] - a[k]));
        a = next;
        if (change < cfg.convergence_eps) break;
    }

    AffineMotionModel model;
    model.a = a;
    for (double p : a)
        if (!std::isfinite(p)) throw NumericError("estimate_affine: non-finite parameter");
    w = detail::weights_for(detail::residual_norms(v, a), cfg.weight_function);
    const auto inliers = std::count_if(w.begin(), w.end(), [](double wi) { return wi > 0.5; });
    model.inlier_fraction = static_cast<double>(inliers) / static_cast<double>(v.size());
    return model;
}

// ---------------------------------------------------------------------------
// models.jsonl: {"frame": k, "a": [a1..a6], "inlier_fraction": w}

struct FrameMotion {
    long long frame = 0;
    AffineMotionModel model;
    friend bool operator==(const FrameMotion&, const FrameMotion&) = default;
};

inline std::string frame_motion_to_json(const FrameMotion& fm) {
    nlohmann::json j;
    j["frame"] = fm.frame;
    j["a"] = fm.model.a;
    j["inlier_fraction"] = fm.model.inlier_fraction;
    return j.dump();
}

inline void save_models(const std::filesystem::path& path, const std::vector<FrameMotion>& models) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    for (const auto& m : models) out << frame_motion_to_json(m) << "\n";
}

inline std::vector<FrameMotion> load_models(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<FrameMotion> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            FrameMotion fm;
            fm.frame = j.at("frame").get<long long>();
            const auto& a = j.at("a");
            if (a.size() != 6) throw FormatError("model must have 6 parameters");
            for (int k = 0; k < 6; ++k) fm.model.a[k] = a[k].get<double>();
            fm.model.inlier_fraction = j.value("inlier_fraction", 1.0);
            out.push_back(fm);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.frame < y.frame; });
    return out;
}

/// Orders per-frame models into the transition sequence for frames 1..N-1;
/// every frame in that range must be present exactly once.
inline std::vector<AffineMotionModel> transition_sequence(const std::vector<FrameMotion>& models) {
    std::vector<AffineMotionModel> seq;
    seq.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (models[i].frame != static_cast<long long>(i) + 1)
            throw ValidationError("motion models must cover frames 1..N-1 contiguously; found frame " +
                                  std::to_string(models[i].frame) + " at position " + std::to_string(i));
        seq.push_back(models[i].model);
    }
    return seq;
}

}  // namespace motion
}  // namespace egoadl
