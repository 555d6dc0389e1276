#pragma once

// Input side of the pipeline: raster frames (PNM), motion-vector fields,
// ground-truth label tracks and PCM audio.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "egoadl/error.hpp"

namespace egoadl {

inline constexpr const char* kRejectClass = "NR";

/// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Raster() = default;
    Raster(int w, int h, int c = 1, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return width <= 0 || height <= 0; }

    /// BT.601 luma plane (copy for gray input).
    Raster luma() const {
        if (channels == 1) return *this;
        Raster out(width, height, 1);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double v = 0.299 * at(x, y, 0) + 0.587 * at(x, y, 1) + 0.114 * at(x, y, 2);
                out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        return out;
    }

    friend bool operator==(const Raster&, const Raster&) = default;
};

struct FrameSequence {
    int width = 0;
    int height = 0;
    double fps = 30.0;
    std::vector<Raster> frames;
};

namespace ingest {

namespace detail {

inline void skip_pnm_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (c != EOF && std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

inline int read_pnm_int(std::istream& in) {
    skip_pnm_space(in);
    int v = -1;
    if (!(in >> v) || v < 0) throw FormatError("malformed PNM header");
    return v;
}

}  // namespace detail

/// Reads one PNM image (P2/P3/P5/P6, maxval <= 255) from the stream.
inline Raster read_pnm(std::istream& in) {
    char p = 0, kind = 0;
    detail::skip_pnm_space(in);
    if (!in.get(p) || !in.get(kind) || p != 'P')
        throw FormatError("not a PNM image");
    int channels = 0;
    bool ascii = false;
    switch (kind) {
        case '2': channels = 1; ascii = true; break;
        case '3': channels = 3; ascii = true; break;
        case '5': channels = 1; break;
        case '6': channels = 3; break;
        default: throw FormatError(std::string("unsupported PNM type P") + kind);
    }
    const int w = detail::read_pnm_int(in);
    const int h = detail::read_pnm_int(in);
    const int maxval = detail::read_pnm_int(in);
    if (w <= 0 || h <= 0) throw FormatError("PNM with zero dimension");
    if (maxval <= 0 || maxval > 255) throw FormatError("PNM maxval must be in 1..255");

    Raster r(w, h, channels);
    if (ascii) {
        for (auto& px : r.data) {
            int v = detail::read_pnm_int(in);
            if (v > maxval) throw FormatError("PNM sample exceeds maxval");
            px = static_cast<std::uint8_t>(v * 255 / maxval);
        }
    } else {
        in.get();  // single whitespace after maxval
        in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
        if (in.gcount() != static_cast<std::streamsize>(r.data.size()))
            throw FormatError("truncated PNM raster");
        if (maxval != 255)
            for (auto& px : r.data) px = static_cast<std::uint8_t>(std::min(255, px * 255 / maxval));
    }
    return r;
}

inline Raster read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    return read_pnm(in);
}

/// Writes binary P5 (gray) or P6 (RGB).
inline void write_pnm(std::ostream& out, const Raster& r) {
    out << (r.channels == 1 ? "P5" : "P6") << "\n" << r.width << " " << r.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
}

inline void write_pnm(const std::filesystem::path& path, const Raster& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    write_pnm(out, r);
}

/// Loads a frame sequence from either a directory of numbered .pgm/.ppm
/// files or a single file holding concatenated PNM images.
inline FrameSequence load_frames(const std::filesystem::path& path, double fps = 30.0) {
    namespace fs = std::filesystem;
    if (!(fps > 0)) throw ValidationError("fps must be positive");
    FrameSequence seq;
    seq.fps = fps;

    auto check_dims = [&seq](const Raster& r, std::size_t index) {
        if (seq.frames.empty()) {
            seq.width = r.width;
            seq.height = r.height;
        } else if (r.width != seq.width || r.height != seq.height) {
            throw FormatError("frame " + std::to_string(index) + " has dimensions " +
                              std::to_string(r.width) + "x" + std::to_string(r.height) +
                              ", expected " + std::to_string(seq.width) + "x" +
                              std::to_string(seq.height));
        }
    };

    if (fs::is_directory(path)) {
        std::map<long long, fs::path> numbered;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
            if (ext != ".pgm" && ext != ".ppm") continue;
            const std::string stem = entry.path().stem().string();
            auto last = stem.find_last_of("0123456789");
            if (last == std::string::npos) continue;
            auto first = last;
            while (first > 0 && std::isdigit(static_cast<unsigned char>(stem[first - 1]))) --first;
            long long number = std::stoll(stem.substr(first, last - first + 1));
            if (!numbered.emplace(number, entry.path()).second)
                throw LoadError("duplicate frame number " + std::to_string(number));
        }
        if (numbered.empty()) throw LoadError("no frames found in " + path.string());
        long long expected = numbered.begin()->first;
        for (const auto& [number, file] : numbered) {
            const std::size_t index = seq.frames.size();
            if (number != expected)
                throw LoadError("frame " + std::to_string(index) + " missing (expected number " +
                                std::to_string(expected) + ")");
            Raster r;
            try {
                r = read_pnm(file);
            } catch (const FormatError& e) {
                throw LoadError("frame " + std::to_string(index) + " (" + file.filename().string() +
                                "): " + e.what());
            }
            check_dims(r, index);
            seq.frames.push_back(std::move(r));
            ++expected;
        }
    } else if (fs::is_regular_file(path)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw LoadError("cannot open " + path.string());
        for (;;) {
            detail::skip_pnm_space(in);
            if (in.peek() == EOF) break;
            const std::size_t index = seq.frames.size();
            Raster r;
            try {
                r = read_pnm(in);
            } catch (const FormatError& e) {
                throw LoadError("frame " + std::to_string(index) + ": " + e.what());
            }
            check_dims(r, index);
            seq.frames.push_back(std::move(r));
        }
        if (seq.frames.empty()) throw LoadError("no frames found in " + path.string());
    } else {
        throw LoadError("no frames found: " + path.string() + " does not exist");
    }
    return seq;
}

}  // namespace ingest

// ---------------------------------------------------------------------------
// Motion-vector fields

struct MotionVector {
    double x = 0, y = 0;    // block center
    double dx = 0, dy = 0;  // forward displacement prev -> curr
    friend bool operator==(const MotionVector&, const MotionVector&) = default;
};

struct MotionVectorField {
    long long frame_index = 0;
    int block_size = 16;
    std::vector<MotionVector> vectors;
    friend bool operator==(const MotionVectorField&, const MotionVectorField&) = default;
};

namespace ingest {

struct BlockMatchConfig {
    int block_size = 16;
    int search_range = 16;
};

/// Exhaustive SAD block matching from prev to curr on the luma planes.
///
/// Blocks lie on a grid centered in the image: the leftover border
/// (dimension mod block size) is split evenly on both sides and skipped.
/// Candidates that would leave the current image are not considered.
/// Ties go to the smallest displacement magnitude, then row-major (dy, dx).
inline MotionVectorField block_matching(const Raster& prev, const Raster& curr,
                                        BlockMatchConfig cfg = {}, long long frame_index = 0) {
    if (prev.width != curr.width || prev.height != curr.height)
        throw FormatError("block_matching: images differ in size");
    if (cfg.block_size < 1 || cfg.search_range < 0)
        throw ValidationError("block_matching: invalid block size or search range");
    const int bs = cfg.block_size;
    const int w = prev.width, h = prev.height;
    if (w < bs || h < bs) throw FormatError("block_matching: image smaller than one block");

    const Raster a = prev.luma();
    const Raster b = curr.luma();
    const int nbx = w / bs, nby = h / bs;
    const int ox = (w % bs) / 2, oy = (h % bs) / 2;
    const int range = cfg.search_range;

    MotionVectorField field;
    field.frame_index = frame_index;
    field.block_size = bs;
    field.vectors.reserve(static_cast<std::size_t>(nbx) * nby);

    for (int by = 0; by < nby; ++by) {
        for (int bx = 0; bx < nbx; ++bx) {
            const int x0 = ox + bx * bs, y0 = oy + by * bs;
            long best_sad = std::numeric_limits<long>::max();
            int best_mag = std::numeric_limits<int>::max();
            int best_dx = 0, best_dy = 0;
            for (int dy = -range; dy <= range; ++dy) {
                if (y0 + dy < 0 || y0 + dy + bs > h) continue;
                for (int dx = -range; dx <= range; ++dx) {
                    if (x0 + dx < 0 || x0 + dx + bs > w) continue;
                    long sad = 0;
                    for (int y = 0; y < bs && sad <= best_sad; ++y) {
                        const std::uint8_t* pa = &a.data[static_cast<std::size_t>(y0 + y) * w + x0];
                        const std::uint8_t* pb =
                            &b.data[static_cast<std::size_t>(y0 + dy + y) * w + x0 + dx];
                        for (int x = 0; x < bs; ++x) sad += std::abs(int(pa[x]) - int(pb[x]));
                    }
                    const int mag = dx * dx + dy * dy;
                    // Scan order is row-major, so a strict comparison keeps the first on full ties.
                    if (sad < best_sad || (sad == best_sad && mag < best_mag)) {
                        best_sad = sad;
                        best_mag = mag;
                        best_dx = dx;
                        best_dy = dy;
                    }
                }
            }
            field.vectors.push_back({x0 + bs / 2.0, y0 + bs / 2.0, double(best_dx), double(best_dy)});
        }
    }
    return field;
}

/// Block-matches consecutive frames; field k describes the transition k-1 -> k.
inline std::vector<MotionVectorField> block_matching(const FrameSequence& seq,
                                                     BlockMatchConfig cfg = {}) {
    std::vector<MotionVectorField> out;
    for (std::size_t k = 1; k < seq.frames.size(); ++k)
        out.push_back(block_matching(seq.frames[k - 1], seq.frames[k], cfg, static_cast<long long>(k)));
    return out;
}

inline std::string motion_field_to_json(const MotionVectorField& f) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& m : f.vectors) v.push_back({m.x, m.y, m.dx, m.dy});
    nlohmann::json j;
    j["frame"] = f.frame_index;
    j["block"] = f.block_size;
    j["v"] = std::move(v);
    return j.dump();
}

inline void save_motion_fields(const std::filesystem::path& path,
                               const std::vector<MotionVectorField>& fields) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    for (const auto& f : fields) out << motion_field_to_json(f) << "\n";
}

inline std::vector<MotionVectorField> load_motion_fields(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<MotionVectorField> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            MotionVectorField f;
            f.frame_index = j.at("frame").get<long long>();
            f.block_size = j.value("block", 16);
            for (const auto& v : j.at("v")) {
                if (v.size() != 4) throw FormatError("vector entry must have 4 numbers");
                f.vectors.push_back({v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
                                     v[3].get<double>()});
            }
            out.push_back(std::move(f));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace ingest

// ---------------------------------------------------------------------------
// Ground truth

struct LabelEntry {
    long long start_frame = 0;
    long long end_frame = 0;  // inclusive
    std::string activity;
    friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

struct GroundTruthTrack {
    std::vector<LabelEntry> entries;

    /// Activity at a frame; unlabeled frames map to the reject class.
    std::string activity_at(long long frame) const {
        auto it = std::upper_bound(entries.begin(), entries.end(), frame,
                                   [](long long f, const LabelEntry& e) { return f < e.start_frame; });
        if (it == entries.begin()) return kRejectClass;
        --it;
        return frame <= it->end_frame ? it->activity : std::string(kRejectClass);
    }
};

namespace ingest {

/// Sorts entries and checks ordering, overlap and (when given) membership.
inline void validate_labels(GroundTruthTrack& track, const std::vector<std::string>& activities = {}) {
    if (!activities.empty() &&
        std::find(activities.begin(), activities.end(), kRejectClass) == activities.end())
        throw ValidationError("activity set must contain the reject class NR");
    std::stable_sort(track.entries.begin(), track.entries.end(),
                     [](const LabelEntry& a, const LabelEntry& b) { return a.start_frame < b.start_frame; });
    for (std::size_t i = 0; i < track.entries.size(); ++i) {
        const auto& e = track.entries[i];
        if (e.start_frame < 0 || e.end_frame < e.start_frame)
            throw ValidationError("label interval [" + std::to_string(e.start_frame) + "," +
                                  std::to_string(e.end_frame) + "] is invalid");
        if (!activities.empty() &&
            std::find(activities.begin(), activities.end(), e.activity) == activities.end())
            throw ValidationError("unknown activity '" + e.activity + "'");
        if (i > 0 && e.start_frame <= track.entries[i - 1].end_frame)
            throw ValidationError("label intervals overlap at frame " + std::to_string(e.start_frame));
    }
}

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

/// Reads `start_frame,end_frame,activity` rows; an optional header row is skipped.
inline GroundTruthTrack load_labels(const std::filesystem::path& path,
                                    const std::vector<std::string>& activities = {}) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    GroundTruthTrack track;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split(line, ',');
        if (cols.size() != 3) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
        char* end = nullptr;
        long long s = std::strtoll(cols[0].c_str(), &end, 10);
        if (end == cols[0].c_str() || *end != '\0') {
            if (lineno == 1 || track.entries.empty()) continue;  // header
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad start frame");
        }
        long long e = std::strtoll(cols[1].c_str(), &end, 10);
        if (end == cols[1].c_str() || *end != '\0')
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad end frame");
        track.entries.push_back({s, e, cols[2]});
    }
    validate_labels(track, activities);
    return track;
}

inline void save_labels(const std::filesystem::path& path, const GroundTruthTrack& track) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "start_frame,end_frame,activity\n";
    for (const auto& e : track.entries) out << e.start_frame << "," << e.end_frame << "," << e.activity << "\n";
}

}  // namespace ingest

// ---------------------------------------------------------------------------
// Audio

struct AudioTrack {
    double sample_rate = 16000.0;
    std::vector<double> samples;  // mono, nominal range [-1, 1)
    double alignment = 0.0;       // audio time (s) of video frame 0

    double duration() const { return sample_rate > 0 ? samples.size() / sample_rate : 0.0; }
};

namespace ingest {

namespace detail {
inline std::uint32_t le32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
inline void put32(std::ostream& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::ostream& o, std::uint16_t v) {
    o.put(static_cast<char>(v & 0xff));
    o.put(static_cast<char>(v >> 8));
}
}  // namespace detail

/// Reads a RIFF/WAVE file with 16-bit PCM mono samples.
inline AudioTrack load_audio(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::string(buf.begin(), buf.begin() + 4) != "RIFF" ||
        std::string(buf.begin() + 8, buf.begin() + 12) != "WAVE")
        throw FormatError(path.string() + ": not a RIFF/WAVE file");

    AudioTrack track;
    bool have_fmt = false, have_data = false;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::string id(buf.begin() + pos, buf.begin() + pos + 4);
        const std::uint32_t size = detail::le32(&buf[pos + 4]);
        const std::size_t body = pos + 8;
        if (body + size > buf.size()) throw FormatError(path.string() + ": truncated chunk " + id);
        if (id == "fmt ") {
            if (size < 16) throw FormatError(path.string() + ": short fmt chunk");
            const auto format = detail::le16(&buf[body]);
            const auto channels = detail::le16(&buf[body + 2]);
            const auto rate = detail::le32(&buf[body + 4]);
            const auto bits = detail::le16(&buf[body + 14]);
            if (format != 1 || bits != 16) throw FormatError(path.string() + ": only 16-bit PCM is supported");
            if (channels != 1) throw FormatError(path.string() + ": only mono audio is supported");
            if (rate == 0) throw FormatError(path.string() + ": zero sample rate");
            track.sample_rate = rate;
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt chunk");
            track.samples.resize(size / 2);
            for (std::size_t i = 0; i < track.samples.size(); ++i) {
                auto v = static_cast<std::int16_t>(detail::le16(&buf[body + 2 * i]));
                track.samples[i] = v / 32768.0;
            }
            have_data = true;
        }
        pos = body + size + (size & 1);
    }
    if (!have_fmt || !have_data) throw FormatError(path.string() + ": missing fmt or data chunk");
    return track;
}

inline void save_audio(const std::filesystem::path& path, const AudioTrack& track) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    const auto rate = static_cast<std::uint32_t>(std::lround(track.sample_rate));
    const auto bytes = static_cast<std::uint32_t>(track.samples.size() * 2);
    out.write("RIFF", 4);
    detail::put32(out, 36 + bytes);
    out.write("WAVEfmt ", 8);
    detail::put32(out, 16);
    detail::put16(out, 1);
    detail::put16(out, 1);
    detail::put32(out, rate);
    detail::put32(out, rate * 2);
    detail::put16(out, 2);
    detail::put16(out, 16);
    out.write("data", 4);
    detail::put32(out, bytes);
    for (double s : track.samples) {
        const long q = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
        detail::put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
}

}  // namespace ingest
}  // namespace egoadl
