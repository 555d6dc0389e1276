#pragma once

// Glue from raw inputs to per-segment descriptor blocks.

#include <optional>
#include <string>
#include <vector>

#include "egoadl/audio.hpp"
#include "egoadl/descriptors.hpp"
#include "egoadl/eval.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/motion.hpp"
#include "egoadl/segmentation.hpp"

namespace egoadl::pipeline {

struct ExtractConfig {
    int energy_bins = desc::kDefaultEnergyBins;
    int cut_bins = desc::kDefaultCutBins;
    AudioConfig audio;
};

/// Estimates one model per transition. Fields that cannot be fitted
/// (too few or collinear vectors) get the zero model with inlier_fraction 0.
inline std::vector<motion::FrameMotion> estimate_models(const std::vector<MotionVectorField>& fields,
                                                        const RobustConfig& cfg = {},
                                                        std::vector<long long>* failed = nullptr) {
    std::vector<motion::FrameMotion> out;
    for (const auto& f : fields) {
        motion::FrameMotion fm{f.frame_index, {}};
        try {
            fm.model = motion::estimate_affine(f, cfg);
        } catch (const EstimationError&) {
            fm.model.inlier_fraction = 0.0;
            if (failed) failed->push_back(f.frame_index);
        }
        out.push_back(fm);
    }
    return out;
}

/// Descriptor blocks for every segment of one video. The key frame raster is
/// used for the color layout; audio is optional.
inline std::vector<desc::SegmentFeatures> extract(const std::string& video_id, const FrameSequence& frames,
                                                  const std::vector<AffineMotionModel>& transitions,
                                                  const std::vector<Segment>& segments,
                                                  const std::optional<AudioTrack>& audio,
                                                  const ExtractConfig& cfg = {}) {
    if (transitions.size() + 1 != frames.frames.size())
        throw ValidationError("extract: " + std::to_string(transitions.size()) + " motion models for " +
                              std::to_string(frames.frames.size()) + " frames");
    const auto cuts = seg::cut_frames(segments);
    std::vector<desc::SegmentFeatures> out;
    for (const auto& s : segments) {
        if (s.end_frame >= static_cast<long long>(frames.frames.size()))
            throw ValidationError("extract: segment extends beyond the last frame");
        desc::SegmentFeatures f;
        f.video = video_id;
        f.segment = s;
        const auto models = desc::segment_models(transitions, s);
        const auto h = desc::htpe_segment(models, frames.width, frames.height, cfg.energy_bins);
        f.blocks.htpe_x = h.bins_x;
        f.blocks.htpe_y = h.bins_y;
        f.blocks.hc = desc::cut_histogram_segment(cuts, s, cfg.cut_bins);
        f.blocks.cld = desc::cld(frames.frames[static_cast<std::size_t>(s.key_frame)]).values();
        if (audio) {
            const double t0 = static_cast<double>(s.start_frame) / frames.fps;
            const double t1 = static_cast<double>(s.end_frame + 1) / frames.fps;
            f.blocks.audio = audio::audio_features(*audio, t0, t1, cfg.audio).values();
        }
        out.push_back(std::move(f));
    }
    return out;
}

/// Turns a features file (one video) plus its labels into evaluation input.
inline VideoData video_from_features(const std::string& id, const std::vector<desc::SegmentFeatures>& feats,
                                     GroundTruthTrack labels) {
    VideoData v;
    v.id = id;
    v.labels = std::move(labels);
    for (const auto& f : feats) {
        if (!v.segments.empty() && f.segment.start_frame != v.segments.back().end_frame + 1)
            throw ValidationError("features of video '" + id + "' do not partition the frame range");
        v.segments.push_back(f.segment);
        v.blocks.push_back(f.blocks);
    }
    v.frame_count = v.segments.empty() ? 0 : v.segments.back().end_frame + 1;
    return v;
}

}  // namespace egoadl::pipeline
