#pragma once

// Viewpoint segmentation: the four image corners are carried along by the
// per-frame affine models and a segment closes once enough of them have
// travelled farther than s * width from where the segment started.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "egoadl/error.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/motion.hpp"

namespace egoadl {

struct SegmenterConfig {
    double s = 0.2;
    int min_len = 5;
    int max_len = 1000;
    int corners_required = 3;

    void validate() const {
        if (!(s > 0 && s < 1)) throw ValidationError("segmenter: s must lie in (0, 1)");
        if (min_len < 1 || min_len > max_len) throw ValidationError("segmenter: need 1 <= min_len <= max_len");
        if (corners_required < 1 || corners_required > 4)
            throw ValidationError("segmenter: corners_required must be in 1..4");
    }
};

struct Segment {
    long long start_frame = 0;
    long long end_frame = 0;  // inclusive
    long long key_frame = 0;

    static Segment make(long long start, long long end) {
        return {start, end, start + (end - start) / 2};
    }
    long long length() const { return end_frame - start_frame + 1; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

struct CornerState {
    std::array<Point2, 4> positions{};
    std::array<Point2, 4> initial_positions{};
    std::array<bool, 4> outbound{};

    /// Corners at pixel centers of the four extreme pixels.
    static CornerState at_image_corners(double width, double height) {
        CornerState st;
        st.initial_positions = {Point2{0, 0}, Point2{width - 1, 0}, Point2{0, height - 1},
                                Point2{width - 1, height - 1}};
        st.positions = st.initial_positions;
        return st;
    }
    int outbound_count() const {
        int n = 0;
        for (bool b : outbound) n += b ? 1 : 0;
        return n;
    }
};

namespace seg {

/// Moves every corner by one frame of motion. A corner becomes outbound
/// once its distance from the initial position exceeds `radius`
/// (s * image width); the flag then stays set.
inline CornerState propagate_corners(CornerState state, const AffineMotionModel& model, double radius) {
    for (std::size_t c = 0; c < 4; ++c) {
        state.positions[c] = motion::apply_model(model, state.positions[c]);
        const double d = std::hypot(state.positions[c].x - state.initial_positions[c].x,
                                    state.positions[c].y - state.initial_positions[c].y);
        if (d > radius) state.outbound[c] = true;
    }
    return state;
}

/// Greedy left-to-right segmentation of an N-frame video given the N-1
/// transition models (models[k] moves frame k to frame k+1).
inline std::vector<Segment> segment_video(const std::vector<AffineMotionModel>& models,
                                          long long frame_count, double width, double height,
                                          const SegmenterConfig& cfg = {}) {
    cfg.validate();
    if (frame_count < 1) throw ValidationError("segment_video: need at least one frame");
    if (static_cast<long long>(models.size()) != frame_count - 1)
        throw ValidationError("segment_video: " + std::to_string(models.size()) + " models for " +
                              std::to_string(frame_count) + " frames (expected frames - 1)");
    if (!(width > 0 && height > 0)) throw ValidationError("segment_video: image size must be positive");

    const double radius = cfg.s * width;
    std::vector<Segment> out;
    long long start = 0;
    CornerState st = CornerState::at_image_corners(width, height);
    for (long long f = 1; f <= frame_count; ++f) {
        const long long len = f - start;  // frames start..f-1 are in the segment
        bool cut = false;
        if (len >= cfg.max_len) {
            cut = true;
        } else if (len >= cfg.min_len && st.outbound_count() >= cfg.corners_required) {
            cut = true;
        }
        if (f == frame_count) {
            out.push_back(Segment::make(start, f - 1));
            break;
        }
        if (cut) {
            out.push_back(Segment::make(start, f - 1));
            start = f;
            st = CornerState::at_image_corners(width, height);
        } else {
            st = propagate_corners(st, models[static_cast<std::size_t>(f - 1)], radius);
        }
    }
    return out;
}

/// Cut positions of a segmentation: the first frame of every segment but the first.
inline std::vector<long long> cut_frames(const std::vector<Segment>& segments) {
    std::vector<long long> cuts;
    for (std::size_t i = 1; i < segments.size(); ++i) cuts.push_back(segments[i].start_frame);
    return cuts;
}

inline void save_segments(const std::filesystem::path& path, const std::vector<Segment>& segments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "start,end,key\n";
    for (const auto& s : segments) out << s.start_frame << "," << s.end_frame << "," << s.key_frame << "\n";
}

inline std::vector<Segment> load_segments(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<Segment> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = ingest::trim(line);
        if (line.empty()) continue;
        auto cols = ingest::split(line, ',');
        if (cols.size() < 2) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected start,end,key");
        try {
            std::size_t used = 0;
            long long s = std::stoll(cols[0], &used);
            if (used != cols[0].size()) throw std::invalid_argument("start");
            long long e = std::stoll(cols[1]);
            Segment seg = Segment::make(s, e);
            if (cols.size() >= 3 && !cols[2].empty() && std::stoll(cols[2]) != seg.key_frame)
                throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": key frame is not the segment center");
            out.push_back(seg);
        } catch (const std::invalid_argument&) {
            if (lineno == 1) continue;  // header
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].end_frame < out[i].start_frame) throw ValidationError("segment with end < start");
        if (i > 0 && out[i].start_frame != out[i - 1].end_frame + 1)
            throw ValidationError("segments must partition the video without gaps or overlaps");
    }
    return out;
}

}  // namespace seg
}  // namespace egoadl
