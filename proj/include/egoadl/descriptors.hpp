#pragma once

// Per-segment descriptors: translation-energy histograms, cut histogram,
// color layout, and their early fusion into one observation vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "egoadl/error.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/motion.hpp"
#include "egoadl/segmentation.hpp"

namespace egoadl {

struct HtpeHistogram {
    std::vector<double> bins_x;
    std::vector<double> bins_y;
};

struct ColorLayoutDescriptor {
    std::array<double, 6> y_coeffs{};
    std::array<double, 3> cb_coeffs{};
    std::array<double, 3> cr_coeffs{};

    std::vector<double> values() const {
        std::vector<double> v(y_coeffs.begin(), y_coeffs.end());
        v.insert(v.end(), cb_coeffs.begin(), cb_coeffs.end());
        v.insert(v.end(), cr_coeffs.begin(), cr_coeffs.end());
        return v;
    }
};

namespace desc {

inline constexpr int kDefaultEnergyBins = 5;
inline constexpr int kDefaultCutBins = 8;
inline constexpr double kLogEpsilon = 1e-12;

// ---------------------------------------------------------------------------
// Translation parameter energy histogram

/// Bin step that puts a translation of `extent` pixels at the start of the last bin.
inline double htpe_step(double extent, int bins) {
    if (bins < 2) throw ValidationError("htpe: need at least 2 bins");
    if (!(extent > 1)) throw ValidationError("htpe: image extent must exceed 1 px");
    return std::log(extent * extent) / (bins - 1);
}

/// 1-based bin of the log energy ln(a^2 + eps) with step s_h.
inline int htpe_bin(double a, double step, int bins) {
    const double e = std::log(a * a + kLogEpsilon);
    if (e < step) return 1;
    for (int i = 2; i <= bins - 1; ++i)
        if (e < i * step) return i;
    return bins;
}

/// Per-frame histograms of a1 (x, step from width) and a4 (y, step from height),
/// averaged over the segment's frames.
inline HtpeHistogram htpe_segment(std::span<const AffineMotionModel> models, double width, double height,
                                  int bins = kDefaultEnergyBins) {
    if (models.empty()) throw ValidationError("htpe_segment: empty segment");
    const double sx = htpe_step(width, bins), sy = htpe_step(height, bins);
    HtpeHistogram h{std::vector<double>(bins, 0.0), std::vector<double>(bins, 0.0)};
    for (const auto& m : models) {
        h.bins_x[htpe_bin(m.a1(), sx, bins) - 1] += 1.0;
        h.bins_y[htpe_bin(m.a4(), sy, bins) - 1] += 1.0;
    }
    const double n = static_cast<double>(models.size());
    for (auto& v : h.bins_x) v /= n;
    for (auto& v : h.bins_y) v /= n;
    return h;
}

/// Motion models describing a segment's frames. Frame f uses the transition
/// into f; the video's first frame has no incoming motion and counts as static.
inline std::vector<AffineMotionModel> segment_models(const std::vector<AffineMotionModel>& transitions,
                                                     const Segment& seg) {
    std::vector<AffineMotionModel> out;
    for (long long f = seg.start_frame; f <= seg.end_frame; ++f) {
        if (f == 0) {
            out.push_back(AffineMotionModel{});
        } else {
            const auto k = static_cast<std::size_t>(f - 1);
            if (k >= transitions.size()) throw ValidationError("segment extends beyond motion models");
            out.push_back(transitions[k]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cut histogram

/// bins[i-1] = number of cuts c with frame - c < 2^i, i = 1..bins.
inline std::vector<double> cut_histogram(std::span<const long long> cuts, long long frame,
                                         int bins = kDefaultCutBins) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (long long c : cuts) {
        if (c > frame) continue;
        const long long age = frame - c;
        for (int i = 1; i <= bins; ++i)
            if (age < (1LL << i)) h[static_cast<std::size_t>(i - 1)] += 1.0;
    }
    return h;
}

/// Per-frame cut histograms averaged over the segment.
inline std::vector<double> cut_histogram_segment(std::span<const long long> cuts, const Segment& seg,
                                                 int bins = kDefaultCutBins) {
    if (seg.end_frame < seg.start_frame) throw ValidationError("cut_histogram_segment: empty segment");
    std::vector<double> acc(static_cast<std::size_t>(bins), 0.0);
    for (long long f = seg.start_frame; f <= seg.end_frame; ++f) {
        const auto h = cut_histogram(cuts, f, bins);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += h[i];
    }
    const double n = static_cast<double>(seg.length());
    for (auto& v : acc) v /= n;
    return acc;
}

// ---------------------------------------------------------------------------
// Color layout

/// Zigzag scan of an 8x8 block as (row, col), row = vertical frequency.
inline constexpr std::array<std::array<int, 2>, 64> kZigzag = [] {
    std::array<std::array<int, 2>, 64> z{};
    int r = 0, c = 0;
    for (int i = 0; i < 64; ++i) {
        z[i] = {r, c};
        if ((r + c) % 2 == 0) {
            if (c == 7) ++r;
            else if (r == 0) ++c;
            else { --r; ++c; }
        } else {
            if (r == 7) ++c;
            else if (c == 0) ++r;
            else { ++r; --c; }
        }
    }
    return z;
}();

/// BT.601 full-range YCbCr of one pixel.
inline std::array<double, 3> to_ycbcr(const Raster& img, int x, int y) {
    if (img.channels == 1) return {double(img.at(x, y)), 128.0, 128.0};
    const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
    return {0.299 * r + 0.587 * g + 0.114 * b, 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b,
            128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b};
}

/// Orthonormal 8x8 DCT-II, computed separably.
inline std::array<double, 64> dct8x8(const std::array<double, 64>& in) {
    std::array<double, 64> basis{};
    for (int u = 0; u < 8; ++u) {
        const double alpha = u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
        for (int x = 0; x < 8; ++x) basis[u * 8 + x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16);
    }
    std::array<double, 64> tmp{}, out{};
    for (int r = 0; r < 8; ++r)  // rows: horizontal frequency
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += basis[u * 8 + x] * in[r * 8 + x];
            tmp[r * 8 + u] = s;
        }
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += basis[v * 8 + y] * tmp[y * 8 + u];
            out[v * 8 + u] = s;
        }
    return out;
}

/// Color layout descriptor: YCbCr averages over an 8x8 grid of regions,
/// 2D DCT per channel, first 6/3/3 zigzag coefficients. Unquantized.
inline ColorLayoutDescriptor cld(const Raster& img) {
    if (img.width < 8 || img.height < 8) throw ValidationError("cld: image smaller than 8x8");
    std::array<std::array<double, 64>, 3> grid{};
    for (int gy = 0; gy < 8; ++gy) {
        const int y0 = gy * img.height / 8, y1 = (gy + 1) * img.height / 8;
        for (int gx = 0; gx < 8; ++gx) {
            const int x0 = gx * img.width / 8, x1 = (gx + 1) * img.width / 8;
            std::array<double, 3> sum{};
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const auto p = to_ycbcr(img, x, y);
                    for (int c = 0; c < 3; ++c) sum[c] += p[c];
                }
            const double n = double(y1 - y0) * double(x1 - x0);
            for (int c = 0; c < 3; ++c) grid[c][gy * 8 + gx] = sum[c] / n;
        }
    }
    ColorLayoutDescriptor d;
    const auto y = dct8x8(grid[0]), cb = dct8x8(grid[1]), cr = dct8x8(grid[2]);
    auto zz = [](const std::array<double, 64>& c, int i) { return c[kZigzag[i][0] * 8 + kZigzag[i][1]]; };
    for (int i = 0; i < 6; ++i) d.y_coeffs[i] = zz(y, i);
    for (int i = 0; i < 3; ++i) {
        d.cb_coeffs[i] = zz(cb, i);
        d.cr_coeffs[i] = zz(cr, i);
    }
    return d;
}

}  // namespace desc

// ---------------------------------------------------------------------------
// Early fusion

/// Which descriptor families enter the observation vector.
struct BlockSelection {
    bool htpe = true;
    bool hc = true;
    bool cld = true;
    bool audio = true;

    static BlockSelection all() { return {}; }
    static BlockSelection dynamic() { return {true, true, false, false}; }
    static BlockSelection none() { return {false, false, false, false}; }

    /// Parses "htpe,hc,cld,audio" or "htpe+cld" (also accepts "dynamic" and "all").
    static BlockSelection parse(std::string spec) {
        std::replace(spec.begin(), spec.end(), '+', ',');
        BlockSelection b = none();
        for (const auto& tok : ingest::split(spec, ',')) {
            if (tok == "htpe") b.htpe = true;
            else if (tok == "hc") b.hc = true;
            else if (tok == "cld") b.cld = true;
            else if (tok == "audio") b.audio = true;
            else if (tok == "dynamic") b.htpe = b.hc = true;
            else if (tok == "all") b = all();
            else if (!tok.empty()) throw ValidationError("unknown descriptor block '" + tok + "'");
        }
        if (!b.htpe && !b.hc && !b.cld && !b.audio) throw ValidationError("empty descriptor block selection");
        return b;
    }

    std::string name() const {
        std::string s;
        auto add = [&s](bool on, const char* n) {
            if (!on) return;
            if (!s.empty()) s += "+";
            s += n;
        };
        add(htpe, "htpe");
        add(hc, "hc");
        add(cld, "cld");
        add(audio, "audio");
        return s;
    }

    friend bool operator==(const BlockSelection&, const BlockSelection&) = default;
};

struct BlockLayoutEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    friend bool operator==(const BlockLayoutEntry&, const BlockLayoutEntry&) = default;
};

/// Raw descriptor blocks of one segment; absent blocks are empty.
struct DescriptorBlocks {
    std::vector<double> htpe_x, htpe_y, hc, cld, audio;
};

struct ObservationVector {
    std::vector<double> values;
    std::vector<BlockLayoutEntry> layout;
};

namespace desc {

inline constexpr std::size_t kCldSize = 12;
inline constexpr std::size_t kAudioSize = 5;

/// Concatenates the selected blocks in the fixed order htpe_x, htpe_y, hc, cld, audio.
inline ObservationVector fuse(const DescriptorBlocks& blocks, const BlockSelection& sel) {
    ObservationVector o;
    auto add = [&o](const std::string& name, const std::vector<double>& v) {
        if (v.empty()) throw ValidationError("fuse: selected block '" + name + "' is missing");
        for (double x : v)
            if (!std::isfinite(x)) throw NumericError("fuse: non-finite value in block '" + name + "'");
        o.layout.push_back({name, o.values.size(), v.size()});
        o.values.insert(o.values.end(), v.begin(), v.end());
    };
    if (sel.htpe) {
        add("htpe_x", blocks.htpe_x);
        add("htpe_y", blocks.htpe_y);
    }
    if (sel.hc) add("hc", blocks.hc);
    if (sel.cld) add("cld", blocks.cld);
    if (sel.audio) add("audio", blocks.audio);
    return o;
}

// ---------------------------------------------------------------------------
// Features file: one JSON object per segment

struct SegmentFeatures {
    std::string video;
    Segment segment;
    DescriptorBlocks blocks;
};

inline std::string features_to_json(const SegmentFeatures& f) {
    nlohmann::json b = nlohmann::json::object();
    auto put = [&b](const char* name, const std::vector<double>& v) {
        if (!v.empty()) b[name] = v;
    };
    put("htpe_x", f.blocks.htpe_x);
    put("htpe_y", f.blocks.htpe_y);
    put("hc", f.blocks.hc);
    put("cld", f.blocks.cld);
    put("audio", f.blocks.audio);
    nlohmann::json j;
    j["video"] = f.video;
    j["start"] = f.segment.start_frame;
    j["end"] = f.segment.end_frame;
    j["blocks"] = std::move(b);
    return j.dump();
}

inline void save_features(const std::filesystem::path& path, const std::vector<SegmentFeatures>& feats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    for (const auto& f : feats) out << features_to_json(f) << "\n";
}

inline std::vector<SegmentFeatures> load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<SegmentFeatures> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            SegmentFeatures f;
            f.video = j.value("video", std::string{});
            f.segment = Segment::make(j.at("start").get<long long>(), j.at("end").get<long long>());
            const auto& b = j.at("blocks");
            auto get = [&b](const char* name) {
                return b.contains(name) ? b[name].get<std::vector<double>>() : std::vector<double>{};
            };
            f.blocks = {get("htpe_x"), get("htpe_y"), get("hc"), get("cld"), get("audio")};
            out.push_back(std::move(f));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-dimension z-score statistics; fitted on training observations only.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Normalizer fit(const std::vector<std::vector<double>>& obs) {
        if (obs.empty()) throw InsufficientDataError("normalizer: no observations");
        const std::size_t d = obs.front().size();
        Normalizer n{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        for (const auto& o : obs) {
            if (o.size() != d) throw ValidationError("normalizer: inconsistent dimensions");
            for (std::size_t i = 0; i < d; ++i) n.mean[i] += o[i];
        }
        for (auto& m : n.mean) m /= static_cast<double>(obs.size());
        for (const auto& o : obs)
            for (std::size_t i = 0; i < d; ++i) n.stddev[i] += (o[i] - n.mean[i]) * (o[i] - n.mean[i]);
        for (auto& s : n.stddev) {
            s = std::sqrt(s / static_cast<double>(obs.size()));
            if (!(s > 1e-12)) s = 1.0;  // constant dimension: center only
        }
        return n;
    }

    std::vector<double> apply(std::span<const double> v) const {
        if (v.size() != mean.size()) throw ValidationError("normalizer: dimension mismatch");
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / stddev[i];
        return out;
    }
};

}  // namespace desc
}  // namespace egoadl
