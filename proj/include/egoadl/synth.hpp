#pragma once

// Deterministic generators with known ground truth: motion fields from a
// given affine model, observation sequences sampled from a two-level HMM,
// and feature-level corpora for end-to-end evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "egoadl/descriptors.hpp"
#include "egoadl/error.hpp"
#include "egoadl/eval.hpp"
#include "egoadl/hhmm.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/motion.hpp"

namespace egoadl {

struct MotionFieldSpec {
    AffineMotionModel model;
    int width = 640;
    int height = 480;
    int block_size = 16;
    double noise_sigma = 0.0;
    double outlier_fraction = 0.0;
    double outlier_range = 16.0;  // outliers are uniform in [-range, range] per component
    std::uint64_t seed = 1;
    long long frame_index = 1;
};

struct GeneratedField {
    MotionVectorField field;
    std::vector<bool> inlier;  // false where the vector was replaced by an outlier
};

struct ScriptRun {
    std::string activity;
    std::size_t segments = 1;
};

/// Feature-level corpus description. Each activity gets one mean vector in
/// the full 35-dim layout; class information lives only in the blocks listed
/// in `informative`, the remaining blocks are shared noise.
struct CorpusSpec {
    std::vector<std::string> activities{"computer", "reading", "tea", "coffee", "dishes", "discussing", "NR"};
    std::size_t videos = 6;
    BlockSelection informative = BlockSelection::all();
    double sigma = 1.0;
    double separation = 4.0;          // minimum pairwise mean distance, in sigmas
    std::size_t segment_frames = 10;  // frames per generated segment
    std::size_t cycles = 2;           // passes over a permutation of the activities per video
    std::size_t min_run = 8;          // run length range, in segments
    std::size_t max_run = 16;
    std::vector<std::vector<ScriptRun>> scripts;  // explicit per-video scripts override the random ones
    double base_s = 0.05;
    std::uint64_t seed = 7;
};

namespace synth {

inline constexpr std::array<std::size_t, 5> kFullBlockSizes{5, 5, 8, 12, 5};
inline constexpr std::array<const char*, 5> kFullBlockNames{"htpe_x", "htpe_y", "hc", "cld", "audio"};

/// Vectors on the centered block grid, displaced exactly by the model, plus
/// Gaussian noise; a fixed share of them is replaced by uniform outliers.
inline GeneratedField gen_motion_field_with_truth(const MotionFieldSpec& spec) {
    if (!(spec.outlier_fraction >= 0 && spec.outlier_fraction < 0.5))
        throw ValidationError("motion field spec: outlier_fraction must lie in [0, 0.5)");
    if (spec.noise_sigma < 0) throw ValidationError("motion field spec: noise_sigma must be >= 0");
    if (spec.block_size < 1 || spec.width < spec.block_size || spec.height < spec.block_size)
        throw ValidationError("motion field spec: image smaller than one block");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> uni(-spec.outlier_range, spec.outlier_range);

    const int bs = spec.block_size;
    const int nbx = spec.width / bs, nby = spec.height / bs;
    const int ox = (spec.width % bs) / 2, oy = (spec.height % bs) / 2;
    GeneratedField g;
    g.field.frame_index = spec.frame_index;
    g.field.block_size = bs;
    for (int by = 0; by < nby; ++by)
        for (int bx = 0; bx < nbx; ++bx) {
            const Point2 c{ox + bx * bs + bs / 2.0, oy + by * bs + bs / 2.0};
            const Point2 d = motion::displacement(spec.model, c);
            MotionVector v{c.x, c.y, d.x, d.y};
            if (spec.noise_sigma > 0) {
                v.dx += spec.noise_sigma * noise(rng);
                v.dy += spec.noise_sigma * noise(rng);
            }
            g.field.vectors.push_back(v);
        }
    const std::size_t n = g.field.vectors.size();
    g.inlier.assign(n, true);
    const auto outliers = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < outliers; ++k) {
        auto& v = g.field.vectors[order[k]];
        v.dx = uni(rng);
        v.dy = uni(rng);
        g.inlier[order[k]] = false;
    }
    return g;
}

inline MotionVectorField gen_motion_field(const MotionFieldSpec& spec) {
    return gen_motion_field_with_truth(spec).field;
}

// ---------------------------------------------------------------------------

struct GeneratedSequence {
    ObservationSequence observations;
    std::vector<std::pair<std::size_t, std::size_t>> path;       // (activity, substate)
    std::vector<std::pair<std::size_t, std::size_t>> top_moves;  // (from, to) at every exit
};

namespace detail {

template <class Rng>
std::size_t sample_index(const std::vector<double>& p, Rng& rng) {
    double total = 0;
    for (double v : p) total += v;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t last = p.size();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] > 0)) continue;
        last = i;
        if (r < p[i]) return i;
        r -= p[i];
    }
    if (last == p.size()) throw ValidationError("sampling from an all-zero distribution");
    return last;
}

template <class Rng>
Observation sample_mixture(const GaussianMixture& gm, Rng& rng) {
    std::vector<double> w;
    for (const auto& c : gm.components) w.push_back(c.weight);
    const auto& comp = gm.components[sample_index(w, rng)];
    std::normal_distribution<double> n(0.0, 1.0);
    Observation o(comp.mean.size());
    for (std::size_t d = 0; d < o.size(); ++d) o[d] = comp.mean[d] + std::sqrt(comp.var[d]) * n(rng);
    return o;
}

}  // namespace detail

/// Ancestral sampling of T observations from a two-level HMM.
inline GeneratedSequence gen_hhmm_sequence(const HierarchicalHMM& h, std::size_t T, std::uint64_t seed) {
    if (h.size() == 0) throw ValidationError("gen_hhmm_sequence: empty model");
    std::mt19937_64 rng(seed);
    GeneratedSequence g;
    std::size_t a = detail::sample_index(h.initial, rng);
    std::size_t j = detail::sample_index(h.activities[a].entry, rng);
    for (std::size_t t = 0; t < T; ++t) {
        g.path.emplace_back(a, j);
        g.observations.push_back(detail::sample_mixture(h.activities[a].states[j], rng));
        const auto& A = h.activities[a];
        std::vector<double> row = A.trans[j];
        row.push_back(A.exit[j]);
        const std::size_t next = detail::sample_index(row, rng);
        if (next < A.size()) {
            j = next;
        } else {
            const std::size_t from = a;
            a = detail::sample_index(h.top[a], rng);
            g.top_moves.emplace_back(from, a);
            j = detail::sample_index(h.activities[a].entry, rng);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

/// Class means in the full layout; informative blocks get class-specific values,
/// the rest stay at zero for every class.
inline std::vector<std::vector<double>> class_means(const CorpusSpec& spec, std::mt19937_64& rng) {
    const bool on[5] = {spec.informative.htpe, spec.informative.htpe, spec.informative.hc, spec.informative.cld,
                        spec.informative.audio};
    std::vector<std::size_t> dims;
    std::size_t off = 0;
    for (std::size_t b = 0; b < 5; ++b) {
        for (std::size_t d = 0; d < kFullBlockSizes[b]; ++d)
            if (on[b]) dims.push_back(off + d);
        off += kFullBlockSizes[b];
    }
    if (dims.empty()) throw ValidationError("corpus spec: no informative blocks");
    const std::size_t K = spec.activities.size();
    // Spread so the expected pairwise distance is about twice the required separation.
    const double spread = spec.separation * spec.sigma * std::sqrt(6.0 / static_cast<double>(dims.size()));
    std::uniform_real_distribution<double> u(-spread, spread);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<std::vector<double>> means(K, std::vector<double>(off, 0.0));
        for (auto& m : means)
            for (std::size_t d : dims) m[d] = u(rng);
        bool ok = true;
        for (std::size_t i = 0; i < K && ok; ++i)
            for (std::size_t k = i + 1; k < K && ok; ++k)
                ok = std::sqrt(hhmm::detail::sq_dist(means[i], means[k])) >= spec.separation * spec.sigma;
        if (ok) return means;
    }
    throw ValidationError("corpus spec: could not place class means at the requested separation");
}

inline std::vector<std::vector<ScriptRun>> random_scripts(const CorpusSpec& spec, std::mt19937_64& rng) {
    if (spec.min_run < 1 || spec.max_run < spec.min_run) throw ValidationError("corpus spec: bad run length range");
    std::vector<std::vector<ScriptRun>> scripts;
    std::uniform_int_distribution<std::size_t> len(spec.min_run, spec.max_run);
    for (std::size_t v = 0; v < spec.videos; ++v) {
        std::vector<ScriptRun> s;
        for (std::size_t c = 0; c < spec.cycles; ++c) {
            std::vector<std::string> perm = spec.activities;
            std::shuffle(perm.begin(), perm.end(), rng);
            if (!s.empty() && perm.front() == s.back().activity) std::rotate(perm.begin(), perm.begin() + 1, perm.end());
            for (const auto& a : perm) s.push_back({a, len(rng)});
        }
        scripts.push_back(std::move(s));
    }
    return scripts;
}

inline DescriptorBlocks split_full(const std::vector<double>& v) {
    DescriptorBlocks b;
    std::vector<double>* dst[5] = {&b.htpe_x, &b.htpe_y, &b.hc, &b.cld, &b.audio};
    std::size_t off = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        dst[k]->assign(v.begin() + static_cast<std::ptrdiff_t>(off), v.begin() + static_cast<std::ptrdiff_t>(off + kFullBlockSizes[k]));
        off += kFullBlockSizes[k];
    }
    return b;
}

/// In-memory feature-level corpus.
inline Corpus gen_corpus_data(const CorpusSpec& spec) {
    if (spec.activities.empty() ||
        std::find(spec.activities.begin(), spec.activities.end(), kRejectClass) == spec.activities.end())
        throw ValidationError("corpus spec: activities must include NR");
    if (spec.segment_frames < 1) throw ValidationError("corpus spec: segment_frames must be >= 1");
    std::mt19937_64 rng(spec.seed);
    const auto means = class_means(spec, rng);
    const auto scripts = spec.scripts.empty() ? random_scripts(spec, rng) : spec.scripts;
    if (scripts.empty()) throw ValidationError("corpus spec: no videos");
    std::normal_distribution<double> n(0.0, spec.sigma);

    Corpus c;
    c.activities = spec.activities;
    for (std::size_t v = 0; v < scripts.size(); ++v) {
        VideoData vd;
        vd.id = "video" + std::to_string(v + 1);
        long long frame = 0;
        for (const auto& run : scripts[v]) {
            if (run.segments < 1) throw ValidationError("corpus spec: run durations must be >= 1");
            const std::size_t k = eval::activity_index(spec.activities, run.activity);
            const long long run_start = frame;
            for (std::size_t s = 0; s < run.segments; ++s) {
                const auto len = static_cast<long long>(spec.segment_frames);
                vd.segments.push_back(Segment::make(frame, frame + len - 1));
                std::vector<double> o = means[k];
                for (double& x : o) x += n(rng);
                vd.blocks.push_back(split_full(o));
                frame += len;
            }
            if (!vd.labels.entries.empty() && vd.labels.entries.back().activity == run.activity)
                vd.labels.entries.back().end_frame = frame - 1;
            else
                vd.labels.entries.push_back({run_start, frame - 1, run.activity});
        }
        vd.frame_count = frame;
        c.videos.push_back(std::move(vd));
    }
    return c;
}

/// Merges every `factor` consecutive segments into one; blocks are
/// frame-weighted means. Models coarser segmentation of the same video.
inline VideoData pool_segments(const VideoData& v, std::size_t factor) {
    if (factor <= 1) return v;
    VideoData out;
    out.id = v.id;
    out.frame_count = v.frame_count;
    out.labels = v.labels;
    for (std::size_t i = 0; i < v.segments.size(); i += factor) {
        const std::size_t e = std::min(v.segments.size(), i + factor);
        DescriptorBlocks acc = v.blocks[i];
        std::vector<double>* fields[5] = {&acc.htpe_x, &acc.htpe_y, &acc.hc, &acc.cld, &acc.audio};
        for (auto* f : fields) std::fill(f->begin(), f->end(), 0.0);
        double frames = 0;
        for (std::size_t k = i; k < e; ++k) {
            const double w = static_cast<double>(v.segments[k].length());
            const std::vector<double>* src[5] = {&v.blocks[k].htpe_x, &v.blocks[k].htpe_y, &v.blocks[k].hc,
                                                 &v.blocks[k].cld, &v.blocks[k].audio};
            for (std::size_t b = 0; b < 5; ++b)
                for (std::size_t d = 0; d < fields[b]->size(); ++d) (*fields[b])[d] += w * (*src[b])[d];
            frames += w;
        }
        for (auto* f : fields)
            for (double& x : *f) x /= frames;
        out.segments.push_back(Segment::make(v.segments[i].start_frame, v.segments[e - 1].end_frame));
        out.blocks.push_back(std::move(acc));
    }
    return out;
}

/// Pooling factor standing in for the segmentation threshold on feature-level corpora.
inline std::size_t pooling_factor(double s, double base_s) {
    if (!(base_s > 0)) throw ValidationError("base_s must be positive");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s / base_s)));
}

inline Corpus pool_corpus(const Corpus& c, std::size_t factor) {
    Corpus out;
    out.activities = c.activities;
    for (const auto& v : c.videos) out.videos.push_back(pool_segments(v, factor));
    return out;
}

/// Writes features, labels and a corpus.toml manifest under `dir`.
inline void write_corpus(const std::filesystem::path& dir, const Corpus& c, double base_s) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir / "corpus.toml", std::ios::binary);
    if (!manifest) throw LoadError("cannot write " + (dir / "corpus.toml").string());
    manifest << "activities = [";
    for (std::size_t i = 0; i < c.activities.size(); ++i) manifest << (i ? ", " : "") << "\"" << c.activities[i] << "\"";
    manifest << "]\nbase_s = " << eval::detail::fmt("%.17g", base_s) << "\n";
    for (const auto& v : c.videos) {
        std::vector<desc::SegmentFeatures> feats;
        for (std::size_t i = 0; i < v.segments.size(); ++i) feats.push_back({v.id, v.segments[i], v.blocks[i]});
        desc::save_features(dir / (v.id + "_features.jsonl"), feats);
        ingest::save_labels(dir / (v.id + "_labels.csv"), v.labels);
        manifest << "\n[[video]]\nid = \"" << v.id << "\"\nfeatures = \"" << v.id << "_features.jsonl\"\nlabels = \""
                 << v.id << "_labels.csv\"\n";
    }
}

inline Corpus gen_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
    auto c = gen_corpus_data(spec);
    write_corpus(dir, c, spec.base_s);
    return c;
}

}  // namespace synth
}  // namespace egoadl
