// Command-line front end for the indexing pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egoadl/config.hpp"
#include "egoadl/eval.hpp"
#include "egoadl/hhmm.hpp"
#include "egoadl/ingest.hpp"
#include "egoadl/motion.hpp"
#include "egoadl/pipeline.hpp"
#include "egoadl/segmentation.hpp"
#include "egoadl/synth.hpp"

using namespace egoadl;
namespace fs = std::filesystem;

namespace {

std::string num(double v) { return eval::detail::fmt("%.17g", v); }

// "0.1:0.5:0.1" (inclusive) or "0.1,0.2,0.4".
std::vector<double> parse_s_values(const std::string& text) {
    std::vector<double> out;
    const auto parts = ingest::split(text, ':');
    auto to_d = [&text](const std::string& t) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size() || t.empty()) throw ValidationError("bad threshold list '" + text + "'");
        return v;
    };
    if (parts.size() == 3) {
        const double a = to_d(parts[0]), b = to_d(parts[1]), step = to_d(parts[2]);
        if (!(step > 0) || b < a) throw ValidationError("bad threshold range '" + text + "'");
        for (int i = 0; a + i * step <= b + 1e-9 * step; ++i) out.push_back(a + i * step);
    } else if (parts.size() == 1) {
        for (const auto& t : ingest::split(text, ',')) out.push_back(to_d(t));
    } else {
        throw ValidationError("bad threshold list '" + text + "'");
    }
    return out;
}

Topology parse_topology(const std::string& t) {
    if (t == "ltr" || t == "left_to_right") return Topology::left_to_right;
    if (t == "ergodic") return Topology::ergodic;
    throw ValidationError("unknown topology '" + t + "'");
}

// Model options shared by train and crossval.
struct ModelOptions {
    std::size_t g = 1;
    std::string topology = "ltr";
    std::uint64_t seed = 1;
    int iterations = 20;
    double tolerance = 1e-4;
    double variance_floor = hhmm::kDefaultVarianceFloor;
    bool uniform_top = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--g", g, "Gaussians per state")->check(CLI::PositiveNumber);
        cmd->add_option("--topology", topology, "ltr or ergodic")->check(CLI::IsMember({"ltr", "left_to_right", "ergodic"}));
        cmd->add_option("--seed", seed, "Initialization seed");
        cmd->add_option("--iterations", iterations, "Baum-Welch iteration cap")->check(CLI::PositiveNumber);
        cmd->add_option("--tolerance", tolerance, "Relative log-likelihood stopping tolerance");
        cmd->add_option("--variance-floor", variance_floor, "Diagonal variance floor")->check(CLI::PositiveNumber);
        cmd->add_flag("--uniform-top", uniform_top, "Uniform activity transitions instead of label bigrams");
    }

    EvalConfig eval_config(std::size_t m) const {
        EvalConfig c;
        c.init.states = m;
        c.init.components = g;
        c.init.seed = seed;
        c.init.topology = parse_topology(topology);
        c.init.variance_floor = variance_floor;
        c.train.max_iterations = iterations;
        c.train.tolerance = tolerance;
        c.top_mode = uniform_top ? hhmm::TopMode::uniform : hhmm::TopMode::bigram;
        return c;
    }
};

// Activity list from --activities, or from label files in order of first use.
std::vector<std::string> activity_set(const std::string& given, const std::vector<GroundTruthTrack>& tracks) {
    std::vector<std::string> acts;
    if (!given.empty()) {
        acts = ingest::split(given, ',');
    } else {
        for (const auto& t : tracks)
            for (const auto& e : t.entries)
                if (std::find(acts.begin(), acts.end(), e.activity) == acts.end()) acts.push_back(e.activity);
    }
    acts.erase(std::remove(acts.begin(), acts.end(), std::string(kRejectClass)), acts.end());
    acts.push_back(kRejectClass);
    return acts;
}

void write_sequence_csv(const fs::path& path, const synth::GeneratedSequence& g, const HierarchicalHMM& h) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "t,activity,substate";
    const std::size_t dim = g.observations.empty() ? 0 : g.observations.front().size();
    for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
    out << "\n";
    for (std::size_t t = 0; t < g.observations.size(); ++t) {
        out << t << "," << h.activities[g.path[t].first].activity << "," << g.path[t].second;
        for (double v : g.observations[t]) out << "," << num(v);
        out << "\n";
    }
}

std::string cell_tag(const eval::SweepCell& c) {
    return "s" + eval::detail::fmt("%g", c.s) + "_m" + std::to_string(c.m) + "_" + c.blocks.name();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Egocentric activity indexing: motion, segmentation, descriptors, HHMM training and evaluation"};
    app.require_subcommand(1);
    std::function<void()> action;

    // motion fields / motion estimate
    auto* motion_cmd = app.add_subcommand("motion", "Motion vectors and affine models");
    motion_cmd->require_subcommand(1);
    {
        auto* c = motion_cmd->add_subcommand("fields", "Block matching between consecutive frames");
        static fs::path frames, out;
        static double fps = 30;
        static ingest::BlockMatchConfig bm;
        c->add_option("--frames", frames, "Directory of numbered PGM/PPM frames")->required()->check(CLI::ExistingDirectory);
        c->add_option("--out", out, "Motion fields (JSON lines)")->required();
        c->add_option("--fps", fps, "Frame rate")->check(CLI::PositiveNumber);
        c->add_option("--block", bm.block_size, "Block size in pixels")->check(CLI::PositiveNumber);
        c->add_option("--search", bm.search_range, "Search range in pixels")->check(CLI::NonNegativeNumber);
        c->callback([&action] {
            action = [] { ingest::save_motion_fields(out, ingest::block_matching(ingest::load_frames(frames, fps), bm)); };
        });
    }
    {
        auto* c = motion_cmd->add_subcommand("estimate", "Robust affine model per field");
        static fs::path fields, out;
        static std::string weight = "tukey";
        c->add_option("--fields", fields, "Motion fields (JSON lines)")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "Affine models (JSON lines)")->required();
        c->add_option("--weight", weight, "tukey or huber")->check(CLI::IsMember({"tukey", "huber"}));
        c->callback([&action] {
            action = [] {
                RobustConfig rc;
                rc.weight_function = weight == "huber" ? WeightFunction::huber : WeightFunction::tukey;
                std::vector<long long> failed;
                motion::save_models(out, pipeline::estimate_models(ingest::load_motion_fields(fields), rc, &failed));
                for (long long f : failed)
                    std::cerr << "warning: frame " << f << ": no model could be fitted, wrote the zero model\n";
            };
        });
    }

    // segment
    {
        auto* c = app.add_subcommand("segment", "Split a video where tracked corners leave the frame");
        static fs::path models, out;
        static int width = 0, height = 0;
        static SegmenterConfig sc;
        c->add_option("--models", models, "Affine models (JSON lines)")->required()->check(CLI::ExistingFile);
        c->add_option("--width", width, "Frame width")->required()->check(CLI::PositiveNumber);
        c->add_option("--height", height, "Frame height (default 3/4 of the width)")->check(CLI::PositiveNumber);
        c->add_option("--s", sc.s, "Threshold as a fraction of the width");
        c->add_option("--min-len", sc.min_len, "Minimum segment length in frames");
        c->add_option("--max-len", sc.max_len, "Maximum segment length in frames");
        c->add_option("--corners", sc.corners_required, "Corners that must leave the frame");
        c->add_option("--out", out, "Segments CSV")->required();
        c->callback([&action] {
            action = [] {
                const auto fm = motion::load_models(models);
                const auto tr = motion::transition_sequence(fm);
                const int h = height > 0 ? height : width * 3 / 4;
                seg::save_segments(out, seg::segment_video(tr, static_cast<long long>(tr.size()) + 1, width, h, sc));
            };
        });
    }

    // extract
    {
        auto* c = app.add_subcommand("extract", "Descriptor blocks for every segment");
        static fs::path frames, models, segments, audio, out;
        static std::string id;
        static double fps = 30;
        c->add_option("--frames", frames, "Directory of numbered PGM/PPM frames")->required()->check(CLI::ExistingDirectory);
        c->add_option("--models", models, "Affine models (JSON lines)")->required()->check(CLI::ExistingFile);
        c->add_option("--segments", segments, "Segments CSV")->required()->check(CLI::ExistingFile);
        c->add_option("--audio", audio, "Mono 16-bit PCM WAV")->check(CLI::ExistingFile);
        c->add_option("--fps", fps, "Frame rate")->check(CLI::PositiveNumber);
        c->add_option("--id", id, "Video id (default: frames directory name)");
        c->add_option("--out", out, "Features (JSON lines)")->required();
        c->callback([&action] {
            action = [] {
                const auto seq = ingest::load_frames(frames, fps);
                std::optional<AudioTrack> track;
                if (!audio.empty()) track = ingest::load_audio(audio);
                const auto tr = motion::transition_sequence(motion::load_models(models));
                const std::string vid = id.empty() ? fs::absolute(frames).lexically_normal().filename().string() : id;
                desc::save_features(out, pipeline::extract(vid, seq, tr, seg::load_segments(segments), track));
            };
        });
    }

    // train
    {
        auto* c = app.add_subcommand("train", "Train the two-level activity model");
        static std::vector<fs::path> features, labels;
        static fs::path out;
        static std::size_t m = 3;
        static std::string blocks = "all", activities;
        static ModelOptions mo;
        c->add_option("--features", features, "Features file per video")->required()->check(CLI::ExistingFile);
        c->add_option("--labels", labels, "Labels CSV per video, same order")->required()->check(CLI::ExistingFile);
        c->add_option("--m", m, "States per activity")->check(CLI::PositiveNumber);
        c->add_option("--blocks", blocks, "Descriptor blocks, e.g. htpe+hc or all");
        c->add_option("--activities", activities, "Comma-separated activity list (default: from labels)");
        c->add_option("--out", out, "Model JSON")->required();
        mo.add_to(c);
        c->callback([&action] {
            action = [] {
                if (features.size() != labels.size())
                    throw ValidationError("train: need one labels file per features file");
                std::vector<GroundTruthTrack> tracks;
                for (const auto& l : labels) tracks.push_back(ingest::load_labels(l));
                const auto acts = activity_set(activities, tracks);
                std::vector<VideoData> videos;
                for (std::size_t i = 0; i < features.size(); ++i) {
                    const auto f = desc::load_features(features[i]);
                    const std::string vid = f.empty() ? features[i].stem().string() : f.front().video;
                    videos.push_back(pipeline::video_from_features(vid, f, tracks[i]));
                }
                std::vector<const VideoData*> ptrs;
                for (const auto& v : videos) ptrs.push_back(&v);
                auto cfg = mo.eval_config(m);
                cfg.blocks = BlockSelection::parse(blocks);
                hhmm::save_model(out, eval::train_model(ptrs, acts, cfg));
            };
        });
    }

    // decode
    {
        auto* c = app.add_subcommand("decode", "Label every segment of a video");
        static fs::path features, model, out;
        c->add_option("--features", features, "Features (JSON lines)")->required()->check(CLI::ExistingFile);
        c->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "Timeline CSV")->required();
        c->callback([&action] {
            action = [] {
                const auto f = desc::load_features(features);
                const auto v = pipeline::video_from_features(f.empty() ? "video" : f.front().video, f, {});
                eval::write_timeline_csv(out, v.segments, eval::decode_video(hhmm::load_model(model), v));
            };
        });
    }

    // crossval
    {
        auto* c = app.add_subcommand("crossval", "Leave-one-video-out sweep over s, m and descriptor blocks");
        static fs::path corpus, out;
        static std::string s_text = "0.2";
        static std::vector<std::size_t> ms{3};
        static std::vector<std::string> blocks{"all"};
        static SegmenterConfig sc;
        static ModelOptions mo;
        c->add_option("--corpus", corpus, "corpus.toml manifest")->required()->check(CLI::ExistingFile);
        c->add_option("--s", s_text, "Thresholds: a:b:step or a,b,c");
        c->add_option("--m", ms, "State counts, e.g. 3,5,7")->delimiter(',')->check(CLI::PositiveNumber);
        c->add_option("--blocks", blocks, "Descriptor configurations, repeatable (e.g. --blocks all --blocks htpe+hc)");
        c->add_option("--min-len", sc.min_len, "Minimum segment length for raw videos");
        c->add_option("--max-len", sc.max_len, "Maximum segment length for raw videos");
        c->add_option("--out", out, "Output directory")->required();
        mo.add_to(c);
        c->callback([&action] {
            action = [] {
                std::vector<BlockSelection> sels;
                for (const auto& b : blocks) sels.push_back(BlockSelection::parse(b));
                const auto manifest = config::load_manifest(corpus);
                const auto r = eval::sweep(config::make_provider(manifest, sc), parse_s_values(s_text), ms, sels,
                                           mo.eval_config(ms.front()));
                fs::create_directories(out);
                eval::write_sweep_csv(out / "sweep.csv", r);
                eval::write_curves_svg(out / "curves.svg", r);
                for (const auto& cell : r.cells) {
                    for (const auto& f : cell.folds)
                        if (!f.failed)
                            eval::write_confusion_csv(out / ("confusion_" + cell_tag(cell) + "_" + f.held_out_video + ".csv"),
                                                      f, manifest.activities);
                    std::cout << cell_tag(cell) << ": "
                              << (cell.failed() ? std::to_string(cell.failed_folds) + " failed folds"
                                                : eval::detail::fmt("%.4f", cell.mean_accuracy))
                              << "\n";
                }
            };
        });
    }

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Synthetic data generators");
    synth_cmd->require_subcommand(1);
    {
        auto* c = synth_cmd->add_subcommand("motion", "Motion field from an affine model with noise and outliers");
        static fs::path spec, out;
        c->add_option("--spec", spec, "TOML spec")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "Motion fields (JSON lines)")->required();
        c->callback([&action] {
            action = [] { ingest::save_motion_fields(out, {synth::gen_motion_field(config::motion_spec(config::parse_file(spec)))}); };
        });
    }
    {
        auto* c = synth_cmd->add_subcommand("sequence", "Observation sequence sampled from a two-level model");
        static fs::path spec, out;
        c->add_option("--spec", spec, "TOML spec")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "CSV of t, activity, substate, observation")->required();
        c->callback([&action] {
            action = [] {
                const auto s = config::sequence_spec(config::parse_file(spec));
                write_sequence_csv(out, synth::gen_hhmm_sequence(s.hmm, s.length, s.seed), s.hmm);
            };
        });
    }
    {
        auto* c = synth_cmd->add_subcommand("corpus", "Labeled feature-level corpus with a manifest");
        static fs::path spec, out;
        c->add_option("--spec", spec, "TOML spec")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "Output directory")->required();
        c->callback([&action] {
            action = [] { synth::gen_corpus(config::corpus_spec(config::parse_file(spec)), out); };
        });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
