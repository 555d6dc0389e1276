#pragma once

// TOML inputs: corpus manifests and generator specs.
//
// corpus.toml
//   activities = ["tea", "coffee", "NR"]
//   base_s = 0.05            # feature-level corpora: granularity of the stored segments
//   [[video]]
//   id = "v1"
//   labels = "v1/labels.csv"
//   features = "v1/features.jsonl"       # feature-level video, or
//   frames = "v1/frames"                 # raw video: frames + (models | fields) + optional audio
//   models = "v1/models.jsonl"
//   fields = "v1/fields.jsonl"
//   audio = "v1/audio.wav"
//   fps = 30.0

#include <cmath>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <toml.hpp>

#include "egoadl/error.hpp"
#include "egoadl/eval.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/pipeline.hpp"
#include "egoadl/segmentation.hpp"
#include "egoadl/synth.hpp"

namespace egoadl::config {

struct VideoEntry {
    std::string id;
    std::filesystem::path labels;
    std::optional<std::filesystem::path> features, frames, models, fields, audio;
    double fps = 30.0;
};

struct Manifest {
    std::vector<std::string> activities;
    double base_s = 0.05;
    std::vector<VideoEntry> videos;
};

inline toml::table parse_file(const std::filesystem::path& path) {
    try {
        return toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        throw ParseError(path.string() + ": " + std::string(e.description()));
    }
}

inline std::vector<std::string> string_array(const toml::node_view<const toml::node>& n, const char* what) {
    std::vector<std::string> out;
    const auto* arr = n.as_array();
    if (!arr) throw ParseError(std::string(what) + " must be an array of strings");
    for (const auto& e : *arr) {
        auto s = e.value<std::string>();
        if (!s) throw ParseError(std::string(what) + " must be an array of strings");
        out.push_back(*s);
    }
    return out;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    const auto tbl = parse_file(path);
    const auto root = path.parent_path();
    const toml::node_view<const toml::node> view{tbl};
    Manifest m;
    m.activities = string_array(view["activities"], "activities");
    if (std::find(m.activities.begin(), m.activities.end(), kRejectClass) == m.activities.end())
        m.activities.push_back(kRejectClass);
    m.base_s = view["base_s"].value_or(0.05);
    const auto* videos = view["video"].as_array();
    if (!videos || videos->empty()) throw ParseError(path.string() + ": no [[video]] entries");
    for (const auto& node : *videos) {
        const auto* t = node.as_table();
        if (!t) throw ParseError(path.string() + ": [[video]] must be a table");
        const toml::node_view<const toml::node> v{*t};
        VideoEntry e;
        e.id = v["id"].value_or(std::string{});
        if (e.id.empty()) throw ParseError(path.string() + ": video without id");
        auto rel = [&root](const toml::node_view<const toml::node>& n) -> std::optional<std::filesystem::path> {
            if (auto s = n.value<std::string>()) return root / *s;
            return std::nullopt;
        };
        auto labels = rel(v["labels"]);
        if (!labels) throw ParseError(path.string() + ": video '" + e.id + "' has no labels");
        e.labels = *labels;
        e.features = rel(v["features"]);
        e.frames = rel(v["frames"]);
        e.models = rel(v["models"]);
        e.fields = rel(v["fields"]);
        e.audio = rel(v["audio"]);
        e.fps = v["fps"].value_or(30.0);
        if (!e.features && !e.frames)
            throw ParseError(path.string() + ": video '" + e.id + "' needs either features or frames");
        m.videos.push_back(std::move(e));
    }
    return m;
}

namespace detail {

struct RawVideo {
    std::string id;
    FrameSequence frames;
    std::vector<AffineMotionModel> transitions;
    std::optional<AudioTrack> audio;
    GroundTruthTrack labels;
};

}  // namespace detail

/// Corpus provider for a manifest. Feature-level videos are pooled by
/// round(s / base_s); raw videos are segmented with threshold s and described.
inline eval::CorpusProvider make_provider(const Manifest& m, SegmenterConfig seg_cfg = {},
                                          pipeline::ExtractConfig ext_cfg = {}) {
    auto features = std::make_shared<Corpus>();
    auto raw = std::make_shared<std::vector<detail::RawVideo>>();
    features->activities = m.activities;
    for (const auto& e : m.videos) {
        auto labels = ingest::load_labels(e.labels, m.activities);
        if (e.features) {
            features->videos.push_back(pipeline::video_from_features(e.id, desc::load_features(*e.features), std::move(labels)));
            continue;
        }
        detail::RawVideo r;
        r.id = e.id;
        r.frames = ingest::load_frames(*e.frames, e.fps);
        r.labels = std::move(labels);
        std::vector<motion::FrameMotion> models;
        if (e.models) models = motion::load_models(*e.models);
        else if (e.fields) models = pipeline::estimate_models(ingest::load_motion_fields(*e.fields));
        else models = pipeline::estimate_models(ingest::block_matching(r.frames));
        r.transitions = motion::transition_sequence(models);
        if (e.audio) {
            r.audio = ingest::load_audio(*e.audio);
        }
        raw->push_back(std::move(r));
    }
    const double base_s = m.base_s;
    return [features, raw, base_s, seg_cfg, ext_cfg](double s) {
        Corpus c = synth::pool_corpus(*features, synth::pooling_factor(s, base_s));
        auto cfg = seg_cfg;
        cfg.s = s;
        for (const auto& r : *raw) {
            const auto segs = seg::segment_video(r.transitions, static_cast<long long>(r.frames.frames.size()),
                                                 r.frames.width, r.frames.height, cfg);
            const auto feats = pipeline::extract(r.id, r.frames, r.transitions, segs, r.audio, ext_cfg);
            c.videos.push_back(pipeline::video_from_features(r.id, feats, r.labels));
        }
        return c;
    };
}

// ---------------------------------------------------------------------------
// Generator specs

inline MotionFieldSpec motion_spec(const toml::table& t) {
    const toml::node_view<const toml::node> v{t};
    MotionFieldSpec s;
    if (const auto* a = v["a"].as_array()) {
        if (a->size() != 6) throw ParseError("motion spec: a must have 6 entries");
        for (std::size_t k = 0; k < 6; ++k) s.model.a[k] = (*a)[k].value<double>().value_or(0.0);
    }
    s.width = v["width"].value_or(s.width);
    s.height = v["height"].value_or(s.height);
    s.block_size = v["block"].value_or(s.block_size);
    s.noise_sigma = v["noise_sigma"].value_or(s.noise_sigma);
    s.outlier_fraction = v["outlier_fraction"].value_or(s.outlier_fraction);
    s.outlier_range = v["outlier_range"].value_or(s.outlier_range);
    s.seed = static_cast<std::uint64_t>(v["seed"].value_or(static_cast<std::int64_t>(s.seed)));
    return s;
}

inline CorpusSpec corpus_spec(const toml::table& t) {
    const toml::node_view<const toml::node> v{t};
    CorpusSpec s;
    if (v["activities"]) s.activities = string_array(v["activities"], "activities");
    s.videos = static_cast<std::size_t>(v["videos"].value_or(static_cast<std::int64_t>(s.videos)));
    if (auto b = v["informative"].value<std::string>()) s.informative = BlockSelection::parse(*b);
    s.sigma = v["sigma"].value_or(s.sigma);
    s.separation = v["separation"].value_or(s.separation);
    s.segment_frames = static_cast<std::size_t>(v["segment_frames"].value_or(static_cast<std::int64_t>(s.segment_frames)));
    s.cycles = static_cast<std::size_t>(v["cycles"].value_or(static_cast<std::int64_t>(s.cycles)));
    s.min_run = static_cast<std::size_t>(v["min_run"].value_or(static_cast<std::int64_t>(s.min_run)));
    s.max_run = static_cast<std::size_t>(v["max_run"].value_or(static_cast<std::int64_t>(s.max_run)));
    s.base_s = v["base_s"].value_or(s.base_s);
    s.seed = static_cast<std::uint64_t>(v["seed"].value_or(static_cast<std::int64_t>(s.seed)));
    if (const auto* scripts = v["script"].as_array()) {
        // script = [["tea:5", "NR:3"], ["coffee:4"]]
        for (const auto& video : *scripts) {
            std::vector<ScriptRun> runs;
            const auto* arr = video.as_array();
            if (!arr) throw ParseError("corpus spec: script entries must be arrays");
            for (const auto& r : *arr) {
                auto str = r.value<std::string>();
                if (!str) throw ParseError("corpus spec: script runs must be \"activity:segments\"");
                const auto colon = str->rfind(':');
                if (colon == std::string::npos) throw ParseError("corpus spec: script run '" + *str + "' lacks ':'");
                const auto count = str->substr(colon + 1);
                if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos)
                    throw ParseError("corpus spec: script run '" + *str + "' needs a segment count");
                runs.push_back({str->substr(0, colon), static_cast<std::size_t>(std::stoull(count))});
            }
            s.scripts.push_back(std::move(runs));
        }
    }
    return s;
}

struct SequenceSpec {
    HierarchicalHMM hmm;
    std::size_t length = 100;
    std::uint64_t seed = 1;
};

inline std::vector<double> number_array(const toml::node_view<const toml::node>& n, const std::string& what) {
    const auto* arr = n.as_array();
    if (!arr) throw ParseError(what + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
        auto d = e.value<double>();
        if (!d) throw ParseError(what + " must be an array of numbers");
        out.push_back(*d);
    }
    return out;
}

inline Matrix number_matrix(const toml::node_view<const toml::node>& n, const std::string& what) {
    const auto* arr = n.as_array();
    if (!arr) throw ParseError(what + " must be an array of arrays");
    Matrix out;
    for (const auto& row : *arr) out.push_back(number_array(toml::node_view<const toml::node>{row}, what));
    return out;
}

/// Two-level HMM with one Gaussian per state:
///   length = 500
///   seed = 3
///   initial = [0.5, 0.5]
///   top = [[0.9, 0.1], [0.2, 0.8]]
///   [[activity]]
///   id = "tea"
///   entry = [1.0, 0.0]
///   transitions = [[0.8, 0.15], [0.0, 0.9]]
///   exit = [0.05, 0.1]
///   means = [[0.0, 0.0], [1.0, 1.0]]
///   variances = [[1.0, 1.0], [1.0, 1.0]]
inline SequenceSpec sequence_spec(const toml::table& t) {
    const toml::node_view<const toml::node> v{t};
    SequenceSpec s;
    s.length = static_cast<std::size_t>(v["length"].value_or(static_cast<std::int64_t>(s.length)));
    s.seed = static_cast<std::uint64_t>(v["seed"].value_or(static_cast<std::int64_t>(s.seed)));
    const auto* acts = v["activity"].as_array();
    if (!acts || acts->empty()) throw ParseError("sequence spec: no [[activity]] entries");
    for (const auto& node : *acts) {
        const auto* at = node.as_table();
        if (!at) throw ParseError("sequence spec: [[activity]] must be a table");
        const toml::node_view<const toml::node> a{*at};
        ActivityHMM h;
        h.activity = a["id"].value_or(std::string{});
        if (h.activity.empty()) throw ParseError("sequence spec: activity without id");
        const std::string where = "sequence spec: activity '" + h.activity + "' ";
        h.topology = a["topology"].value_or(std::string("ergodic")) == "left_to_right" ? Topology::left_to_right
                                                                                       : Topology::ergodic;
        h.entry = number_array(a["entry"], where + "entry");
        h.trans = number_matrix(a["transitions"], where + "transitions");
        h.exit = number_array(a["exit"], where + "exit");
        const auto means = number_matrix(a["means"], where + "means");
        const auto vars = number_matrix(a["variances"], where + "variances");
        const std::size_t m = h.entry.size();
        if (m == 0) throw ValidationError(where + "has no states");
        if (h.trans.size() != m || h.exit.size() != m || means.size() != m || vars.size() != m)
            throw ValidationError(where + "has inconsistent state counts");
        for (std::size_t j = 0; j < m; ++j) {
            if (h.trans[j].size() != m || vars[j].size() != means[j].size())
                throw ValidationError(where + "has inconsistent dimensions");
            for (double x : vars[j])
                if (!(x >= 0)) throw ValidationError(where + "has a negative variance");
            h.states.push_back(GaussianMixture{{GaussianComponent{1.0, means[j], vars[j]}}});
        }
        s.hmm.activities.push_back(std::move(h));
    }
    s.hmm.initial = number_array(v["initial"], "sequence spec: initial");
    s.hmm.top = number_matrix(v["top"], "sequence spec: top");
    const std::size_t K = s.hmm.size();
    if (s.hmm.initial.size() != K || s.hmm.top.size() != K)
        throw ValidationError("sequence spec: top level does not match the activity count");
    auto stochastic = [](const std::vector<double>& row, const std::string& what) {
        double sum = 0;
        for (double x : row) {
            if (!(x >= 0)) throw ValidationError(what + " has a negative probability");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(what + " does not sum to 1");
    };
    stochastic(s.hmm.initial, "sequence spec: initial");
    for (const auto& row : s.hmm.top) {
        if (row.size() != K) throw ValidationError("sequence spec: top must be K x K");
        stochastic(row, "sequence spec: top row");
    }
    for (const auto& a : s.hmm.activities) {
        stochastic(a.entry, "activity '" + a.activity + "' entry");
        for (std::size_t j = 0; j < a.size(); ++j) {
            auto row = a.trans[j];
            row.push_back(a.exit[j]);
            stochastic(row, "activity '" + a.activity + "' transitions + exit row");
        }
        if (a.states.front().dim() != s.hmm.activities.front().states.front().dim())
            throw ValidationError("sequence spec: activities disagree on observation dimension");
    }
    return s;
}

}  // namespace egoadl::config
