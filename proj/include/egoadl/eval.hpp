#pragma once

// Leave-one-video-out evaluation and parameter sweeps.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "egoadl/descriptors.hpp"
#include "egoadl/error.hpp"
#include "egoadl/hhmm.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/segmentation.hpp"

namespace egoadl {

/// One video after segmentation and descriptor extraction.
struct VideoData {
    std::string id;
    long long frame_count = 0;
    std::vector<Segment> segments;
    std::vector<DescriptorBlocks> blocks;  // parallel to segments
    GroundTruthTrack labels;
};

struct Corpus {
    std::vector<std::string> activities;  // includes "NR"
    std::vector<VideoData> videos;
};

struct EvalConfig {
    BlockSelection blocks = BlockSelection::all();
    hhmm::InitConfig init;  // m, G, seed, topology, variance floor
    hhmm::TrainConfig train;
    hhmm::TopMode top_mode = hhmm::TopMode::bigram;
};

struct SegmentPrediction {
    Segment segment;
    std::string predicted;
    std::string truth;
};

struct FoldResult {
    std::string held_out_video;
    bool failed = false;
    std::string failure;
    std::vector<SegmentPrediction> predictions;
    double frame_weighted_accuracy = 0;
    double segment_accuracy = 0;
    std::vector<std::vector<long long>> confusion;  // [truth][predicted], corpus activity order
};

namespace eval {

inline std::size_t activity_index(const std::vector<std::string>& activities, const std::string& a) {
    auto it = std::find(activities.begin(), activities.end(), a);
    if (it == activities.end()) throw ValidationError("unknown activity '" + a + "'");
    return static_cast<std::size_t>(it - activities.begin());
}

/// Majority frame label inside the segment; unlabeled frames count as NR,
/// ties go to NR, then to the activity listed first.
inline std::string ground_truth_for_segment(const GroundTruthTrack& track, const Segment& seg,
                                            const std::vector<std::string>& activities = {}) {
    std::map<std::string, long long> counts;
    for (long long f = seg.start_frame; f <= seg.end_frame; ++f) ++counts[track.activity_at(f)];
    long long best = -1;
    for (const auto& [a, n] : counts) best = std::max(best, n);
    std::vector<std::string> tied;
    for (const auto& [a, n] : counts)
        if (n == best) tied.push_back(a);
    if (std::find(tied.begin(), tied.end(), kRejectClass) != tied.end()) return kRejectClass;
    if (tied.size() == 1 || activities.empty()) return tied.front();
    for (const auto& a : activities)
        if (std::find(tied.begin(), tied.end(), a) != tied.end()) return a;
    return tied.front();
}

inline std::vector<std::vector<double>> fused_observations(const VideoData& v, const BlockSelection& sel) {
    std::vector<std::vector<double>> out;
    out.reserve(v.blocks.size());
    for (const auto& b : v.blocks) out.push_back(desc::fuse(b, sel).values);
    return out;
}

/// Trains the full two-level model on a set of videos.
/// Activities that never occur in the training labels are left out of the model.
inline hhmm::ModelBundle train_model(const std::vector<const VideoData*>& videos,
                                     const std::vector<std::string>& activities, const EvalConfig& cfg) {
    if (videos.empty()) throw InsufficientDataError("train_model: no training videos");
    hhmm::ModelBundle bundle;
    bundle.blocks = cfg.blocks;

    std::vector<std::vector<double>> all;
    std::vector<std::vector<std::vector<double>>> per_video;
    for (const auto* v : videos) {
        if (v->segments.size() != v->blocks.size())
            throw ValidationError("video '" + v->id + "': segments and descriptors differ in count");
        per_video.push_back(fused_observations(*v, cfg.blocks));
        all.insert(all.end(), per_video.back().begin(), per_video.back().end());
    }
    if (all.empty()) throw InsufficientDataError("train_model: no training segments");
    bundle.normalizer = desc::Normalizer::fit(all);
    bundle.layout = desc::fuse(videos.front()->blocks.front(), cfg.blocks).layout;

    // Runs of consecutive segments with the same label, per activity.
    std::map<std::string, std::vector<ObservationSequence>> runs;
    std::vector<std::vector<std::string>> label_seqs;
    for (std::size_t vi = 0; vi < videos.size(); ++vi) {
        const auto& v = *videos[vi];
        std::vector<std::string> labels;
        for (const auto& s : v.segments) labels.push_back(ground_truth_for_segment(v.labels, s, activities));
        label_seqs.push_back(labels);
        for (std::size_t i = 0; i < labels.size();) {
            std::size_t j = i;
            ObservationSequence run;
            while (j < labels.size() && labels[j] == labels[i]) run.push_back(bundle.normalizer.apply(per_video[vi][j++]));
            runs[labels[i]].push_back(std::move(run));
            i = j;
        }
    }

    std::vector<std::string> present;
    for (const auto& a : activities)
        if (runs.count(a)) present.push_back(a);
    for (const auto& [a, r] : runs)
        if (std::find(activities.begin(), activities.end(), a) == activities.end())
            throw ValidationError("training label '" + a + "' is not in the activity set");

    for (std::size_t k = 0; k < present.size(); ++k) {
        auto init = cfg.init;
        init.seed = cfg.init.seed + 104729 * k;
        auto model = hhmm::init_activity_hmm(present[k], runs[present[k]], init);
        auto train = cfg.train;
        train.variance_floor = cfg.init.variance_floor;
        bundle.hmm.activities.push_back(hhmm::baum_welch(model, runs[present[k]], train).model);
    }

    hhmm::TopLevel top;
    if (cfg.top_mode == hhmm::TopMode::uniform) {
        top = hhmm::uniform_top(present.size());
    } else {
        std::vector<std::vector<std::size_t>> idx;
        for (const auto& ls : label_seqs) {
            std::vector<std::size_t> row;
            for (const auto& l : ls) row.push_back(activity_index(present, l));
            idx.push_back(std::move(row));
        }
        top = hhmm::estimate_top_transitions(idx, present.size());
    }
    bundle.hmm.top = top.transitions;
    bundle.hmm.initial = top.initial;
    return bundle;
}

/// Decodes one video; returns the predicted activity per segment.
inline std::vector<std::string> decode_video(const hhmm::ModelBundle& model, const VideoData& v) {
    if (v.blocks.empty()) throw ValidationError("decode: video '" + v.id + "' has no segments");
    ObservationSequence obs;
    for (const auto& o : fused_observations(v, model.blocks)) obs.push_back(model.normalizer.apply(o));
    const auto composite = hhmm::flatten(model.hmm);
    const auto r = hhmm::viterbi(composite, obs);
    std::vector<std::string> out;
    for (std::size_t a : r.activities) out.push_back(composite.activity_names[a]);
    return out;
}

/// Fraction of frames whose decoded activity matches the ground truth.
inline double frame_weighted_accuracy(const VideoData& v, const std::vector<std::string>& predicted) {
    long long correct = 0, total = 0;
    for (std::size_t i = 0; i < v.segments.size(); ++i)
        for (long long f = v.segments[i].start_frame; f <= v.segments[i].end_frame; ++f) {
            ++total;
            if (v.labels.activity_at(f) == predicted[i]) ++correct;
        }
    return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

inline FoldResult score_fold(const VideoData& v, const std::vector<std::string>& predicted,
                             const std::vector<std::string>& activities) {
    FoldResult r;
    r.held_out_video = v.id;
    const std::size_t K = activities.size();
    r.confusion.assign(K, std::vector<long long>(K, 0));
    std::size_t seg_correct = 0;
    for (std::size_t i = 0; i < v.segments.size(); ++i) {
        SegmentPrediction p{v.segments[i], predicted[i], ground_truth_for_segment(v.labels, v.segments[i], activities)};
        ++r.confusion[activity_index(activities, p.truth)][activity_index(activities, p.predicted)];
        if (p.truth == p.predicted) ++seg_correct;
        r.predictions.push_back(std::move(p));
    }
    r.frame_weighted_accuracy = frame_weighted_accuracy(v, predicted);
    r.segment_accuracy = v.segments.empty() ? 0.0 : static_cast<double>(seg_correct) / static_cast<double>(v.segments.size());
    return r;
}

/// Leave-one-video-out cross-validation. Folds that cannot be trained
/// (missing or insufficient data) carry a failure marker instead of a score.
inline std::vector<FoldResult> cross_validate(const Corpus& corpus, const EvalConfig& cfg) {
    if (corpus.videos.size() < 2) throw ValidationError("cross_validate: need at least 2 videos");
    std::vector<FoldResult> out;
    for (std::size_t held = 0; held < corpus.videos.size(); ++held) {
        const auto& test = corpus.videos[held];
        std::vector<const VideoData*> train;
        for (std::size_t i = 0; i < corpus.videos.size(); ++i)
            if (i != held) train.push_back(&corpus.videos[i]);
        FoldResult fold;
        fold.held_out_video = test.id;
        try {
            const auto model = train_model(train, corpus.activities, cfg);
            std::set<std::string> trained;
            for (const auto& a : model.hmm.activities) trained.insert(a.activity);
            for (const auto& s : test.segments) {
                const auto truth = ground_truth_for_segment(test.labels, s, corpus.activities);
                if (!trained.count(truth))
                    throw InsufficientDataError("activity '" + truth + "' has no training data (untrainable)");
            }
            fold = score_fold(test, decode_video(model, test), corpus.activities);
        } catch (const InsufficientDataError& e) {
            fold.failed = true;
            fold.failure = e.what();
        } catch (const NumericError& e) {
            fold.failed = true;
            fold.failure = e.what();
        }
        out.push_back(std::move(fold));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
    double s = 0;
    std::size_t m = 0;
    BlockSelection blocks;
    std::vector<FoldResult> folds;
    double mean_accuracy = 0;  // over folds that trained
    std::size_t failed_folds = 0;

    bool failed() const { return failed_folds > 0; }
};

struct SweepResult {
    std::vector<SweepCell> cells;
};

/// Produces the corpus for a given segmentation threshold.
using CorpusProvider = std::function<Corpus(double s)>;

inline double mean_accuracy(const std::vector<FoldResult>& folds, std::size_t* failed = nullptr) {
    double acc = 0;
    std::size_t ok = 0, bad = 0;
    for (const auto& f : folds) {
        if (f.failed) {
            ++bad;
        } else {
            acc += f.frame_weighted_accuracy;
            ++ok;
        }
    }
    if (failed) *failed = bad;
    return ok > 0 ? acc / static_cast<double>(ok) : 0.0;
}

/// Cartesian product s x m x descriptor configuration, each cell cross-validated.
inline SweepResult sweep(const CorpusProvider& provider, const std::vector<double>& s_values,
                         const std::vector<std::size_t>& m_values, const std::vector<BlockSelection>& configs,
                         const EvalConfig& base) {
    if (s_values.empty() || m_values.empty() || configs.empty()) throw ValidationError("sweep: empty grid");
    SweepResult r;
    for (double s : s_values) {
        const Corpus corpus = provider(s);
        for (const auto& blocks : configs)
            for (std::size_t m : m_values) {
                EvalConfig cfg = base;
                cfg.blocks = blocks;
                cfg.init.states = m;
                SweepCell cell{s, m, blocks, cross_validate(corpus, cfg), 0, 0};
                cell.mean_accuracy = mean_accuracy(cell.folds, &cell.failed_folds);
                r.cells.push_back(std::move(cell));
            }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {
inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}
}  // namespace detail

inline void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "s,m,blocks,fold,accuracy,status,segment_accuracy\n";
    for (const auto& c : r.cells)
        for (const auto& f : c.folds)
            out << detail::fmt("%.4g", c.s) << "," << c.m << "," << c.blocks.name() << "," << f.held_out_video << ","
                << (f.failed ? std::string("") : detail::fmt("%.6f", f.frame_weighted_accuracy)) << ","
                << (f.failed ? "failed" : "ok") << ","
                << (f.failed ? std::string("") : detail::fmt("%.6f", f.segment_accuracy)) << "\n";
}

/// Decoded activity per segment, in the label file layout.
inline void write_timeline_csv(const std::filesystem::path& path, const std::vector<Segment>& segments,
                               const std::vector<std::string>& predicted) {
    if (segments.size() != predicted.size()) throw ValidationError("timeline: one activity per segment required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "start_frame,end_frame,activity\n";
    for (std::size_t i = 0; i < segments.size(); ++i)
        out << segments[i].start_frame << "," << segments[i].end_frame << "," << predicted[i] << "\n";
}

inline void write_confusion_csv(const std::filesystem::path& path, const FoldResult& f,
                                const std::vector<std::string>& activities) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "truth\\predicted";
    for (const auto& a : activities) out << "," << a;
    out << "\n";
    for (std::size_t i = 0; i < activities.size(); ++i) {
        out << activities[i];
        for (std::size_t j = 0; j < activities.size(); ++j) out << "," << (f.failed ? 0 : f.confusion[i][j]);
        out << "\n";
    }
}

/// Accuracy versus s, one polyline per (descriptor configuration, m).
/// Failed cells are drawn at zero.
inline void write_curves_svg(const std::filesystem::path& path, const SweepResult& r) {
    std::map<std::string, std::vector<std::pair<double, double>>> curves;
    double smin = 1e300, smax = -1e300;
    for (const auto& c : r.cells) {
        curves[c.blocks.name() + " m=" + std::to_string(c.m)].emplace_back(c.s, c.failed() ? 0.0 : c.mean_accuracy);
        smin = std::min(smin, c.s);
        smax = std::max(smax, c.s);
    }
    if (smax <= smin) smax = smin + 1;
    const double W = 640, H = 400, L = 60, R = 200, T = 20, B = 40;
    auto px = [&](double s) { return L + (s - smin) / (smax - smin) * (W - L - R); };
    auto py = [&](double a) { return T + (1.0 - a) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double a = k / 4.0;
        out << "<text x=\"" << L - 35 << "\" y=\"" << py(a) + 4 << "\" font-size=\"11\">" << detail::fmt("%.2f", a) << "</text>\n";
    }
    out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" font-size=\"12\">s</text>\n";
    out << "<text x=\"" << L << "\" y=\"" << H - 22 << "\" font-size=\"11\">" << detail::fmt("%.3g", smin) << "</text>\n";
    out << "<text x=\"" << W - R - 20 << "\" y=\"" << H - 22 << "\" font-size=\"11\">" << detail::fmt("%.3g", smax) << "</text>\n";
    std::size_t ci = 0;
    for (auto& [name, pts] : curves) {
        std::sort(pts.begin(), pts.end());
        const char* color = colors[ci % 8];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [s, a] : pts) out << detail::fmt("%.2f", px(s)) << "," << detail::fmt("%.2f", py(a)) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (ci + 1) << "\" font-size=\"11\" fill=\"" << color << "\">"
            << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

}  // namespace eval
}  // namespace egoadl
