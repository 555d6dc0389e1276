#pragma once

// Five low-level audio descriptors over a time window: mean log energy,
// 4 Hz energy modulation, entropy modulation, and the rate and mean
// duration of segments found by a two-window Gaussian divergence detector.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <numeric>
#include <vector>

#include <fftw3.h>

#include "egoadl/error.hpp"
#include "egoadl/ingest.hpp"

namespace egoadl {

struct AudioDescriptor {
    double energy = 0;       // mean log short-term energy
    double mod4hz = 0;       // share of envelope energy in 2..8 Hz, [0, 1]
    double entropy_mod = 0;  // std of per-window spectral entropy
    double seg_rate = 0;     // change points per second
    double seg_dur = 0;      // mean segment duration, seconds

    std::vector<double> values() const { return {energy, mod4hz, entropy_mod, seg_rate, seg_dur}; }
};

struct AudioConfig {
    double window_s = 0.025;
    double hop_s = 0.010;
    double mod_low_hz = 2.0;
    double mod_high_hz = 8.0;
    double divergence_window_s = 0.5;
    double divergence_hop_s = 0.1;
    double divergence_threshold = 2.0;
};

namespace audio {

inline constexpr double kEnergyEpsilon = 1e-12;
inline constexpr double kFeatureVarianceFloor = 1e-6;
// Envelopes whose standard deviation is below this share of their mean are treated as constant.
inline constexpr double kConstantEnvelope = 1e-6;

namespace detail {

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

/// Power spectrum |X_k|^2, k = 0..n/2, of a real sequence (zero padded to n).
class PowerSpectrum {
public:
    explicit PowerSpectrum(std::size_t n)
        : n_(n),
          in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
          out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))),
          plan_(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE)) {}

    std::vector<double> operator()(const std::vector<double>& x) {
        std::fill(in_.get(), in_.get() + n_, 0.0);
        std::copy_n(x.begin(), std::min(x.size(), n_), in_.get());
        fftw_execute(plan_.get());
        std::vector<double> p(n_ / 2 + 1);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = out_.get()[k][0] * out_.get()[k][0] + out_.get()[k][1] * out_.get()[k][1];
        return p;
    }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::unique_ptr<double, FftwFree> in_;
    std::unique_ptr<fftw_complex, FftwFree> out_;
    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan_;
};

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

/// Short-term frames of a window: mean-square energy, spectral entropy,
/// spectral centroid (Hz) per 25 ms frame at 10 ms hop.
struct ShortTermFeatures {
    std::vector<double> energy;
    std::vector<double> entropy;
    std::vector<double> centroid;
    double frame_rate = 100.0;  // frames per second
};

inline ShortTermFeatures short_term_features(const AudioTrack& track, std::size_t first, std::size_t count,
                                             const AudioConfig& cfg = {}) {
    const auto win = static_cast<std::size_t>(std::lround(cfg.window_s * track.sample_rate));
    const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * track.sample_rate));
    if (win == 0 || hop == 0) throw ValidationError("audio: analysis window shorter than one sample");
    if (count < win) throw ValidationError("audio: window shorter than one analysis frame");

    ShortTermFeatures f;
    f.frame_rate = track.sample_rate / static_cast<double>(hop);
    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
    detail::PowerSpectrum spectrum(detail::next_pow2(win));
    std::vector<double> frame(win);
    const std::size_t frames = 1 + (count - win) / hop;
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t s0 = first + t * hop;
        double e = 0;
        for (std::size_t i = 0; i < win; ++i) {
            const double x = track.samples[s0 + i];
            e += x * x;
            frame[i] = x * hann[i];
        }
        f.energy.push_back(e / static_cast<double>(win));

        const auto p = spectrum(frame);
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        double h = 0, c = 0;
        if (total > 0) {
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double q = p[k] / total;
                if (q > 0) h -= q * std::log(q);
                c += q * static_cast<double>(k) * track.sample_rate / static_cast<double>(spectrum.size());
            }
        }
        f.entropy.push_back(h);
        f.centroid.push_back(c);
    }
    return f;
}

/// Share of the mean-removed envelope's energy that lies in [low, high] Hz.
inline double modulation_ratio(const std::vector<double>& envelope, double rate, double low, double high) {
    const std::size_t n = envelope.size();
    if (n < 2) return 0.0;
    const double m = detail::mean(envelope);
    const double sd = detail::stddev(envelope);
    if (!(sd > kConstantEnvelope * std::abs(m)) || sd == 0.0) return 0.0;
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = envelope[i] - m;
    detail::PowerSpectrum spectrum(n);
    const auto p = spectrum(centered);
    // One-sided spectrum; interior bins stand for two conjugate bins.
    double band = 0, total = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
        const double weight = (2 * k == n) ? 1.0 : 2.0;
        const double fk = static_cast<double>(k) * rate / static_cast<double>(n);
        total += weight * p[k];
        if (fk >= low && fk <= high) band += weight * p[k];
    }
    return total > 0 ? std::clamp(band / total, 0.0, 1.0) : 0.0;
}

/// Symmetric KL divergence between two diagonal Gaussians fitted to the
/// feature rows [a0, a1) and [b0, b1).
inline double symmetric_kl(const std::vector<std::vector<double>>& feats, std::size_t a0, std::size_t a1,
                           std::size_t b0, std::size_t b1) {
    double d = 0;
    for (const auto& dim : feats) {
        auto stats = [&dim](std::size_t lo, std::size_t hi) {
            double m = 0;
            for (std::size_t i = lo; i < hi; ++i) m += dim[i];
            m /= static_cast<double>(hi - lo);
            double v = 0;
            for (std::size_t i = lo; i < hi; ++i) v += (dim[i] - m) * (dim[i] - m);
            v = std::max(v / static_cast<double>(hi - lo), kFeatureVarianceFloor);
            return std::pair{m, v};
        };
        const auto [ma, va] = stats(a0, a1);
        const auto [mb, vb] = stats(b0, b1);
        const double dm2 = (ma - mb) * (ma - mb);
        d += 0.5 * (va / vb + vb / va - 2.0) + 0.5 * dm2 * (1.0 / va + 1.0 / vb);
    }
    return d;
}

/// Change points (frame indices) where the divergence between the windows
/// before and after exceeds the threshold and is a local maximum.
inline std::vector<std::size_t> change_points(const ShortTermFeatures& f, const AudioConfig& cfg = {}) {
    const std::size_t n = f.energy.size();
    const auto w = static_cast<std::size_t>(std::lround(cfg.divergence_window_s * f.frame_rate));
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.divergence_hop_s * f.frame_rate)));
    std::vector<std::size_t> out;
    if (w < 2 || n < 2 * w) return out;

    std::vector<double> log_energy(n);
    for (std::size_t i = 0; i < n; ++i) log_energy[i] = std::log(f.energy[i] + kEnergyEpsilon);
    const std::vector<std::vector<double>> feats{log_energy, f.centroid};

    std::vector<std::size_t> pos;
    std::vector<double> div;
    for (std::size_t t = w; t + w <= n; t += hop) {
        pos.push_back(t);
        div.push_back(symmetric_kl(feats, t - w, t, t, t + w));
    }
    for (std::size_t i = 0; i < div.size(); ++i) {
        if (!(div[i] > cfg.divergence_threshold)) continue;
        const bool left_ok = i == 0 || div[i] > div[i - 1];
        const bool right_ok = i + 1 == div.size() || div[i] >= div[i + 1];
        if (left_ok && right_ok) out.push_back(pos[i]);
    }
    return out;
}

/// Audio descriptor for the video-time window [start_s, end_s).
inline AudioDescriptor audio_features(const AudioTrack& track, double start_s, double end_s,
                                      const AudioConfig& cfg = {}) {
    if (!(track.sample_rate > 0)) throw ValidationError("audio: sample rate must be positive");
    if (!(end_s > start_s)) throw ValidationError("audio: empty time window");
    const double t0 = start_s + track.alignment, t1 = end_s + track.alignment;
    const double slack = cfg.hop_s;
    if (t0 < -slack || t1 > track.duration() + slack)
        throw ValidationError("audio: window [" + std::to_string(t0) + ", " + std::to_string(t1) +
                              ") s lies outside the track");
    const auto first = static_cast<std::size_t>(std::max(0.0, std::round(t0 * track.sample_rate)));
    const auto last = std::min(track.samples.size(),
                               static_cast<std::size_t>(std::max(0.0, std::round(t1 * track.sample_rate))));
    if (last <= first) throw ValidationError("audio: window shorter than one analysis frame");
    for (std::size_t i = first; i < last; ++i)
        if (!std::isfinite(track.samples[i])) throw NumericError("audio: non-finite sample");

    const auto f = short_term_features(track, first, last - first, cfg);
    AudioDescriptor d;
    double le = 0;
    for (double e : f.energy) le += std::log(e + kEnergyEpsilon);
    d.energy = le / static_cast<double>(f.energy.size());
    d.mod4hz = modulation_ratio(f.energy, f.frame_rate, cfg.mod_low_hz, cfg.mod_high_hz);
    d.entropy_mod = detail::stddev(f.entropy);

    const double duration = static_cast<double>(last - first) / track.sample_rate;
    const auto cps = change_points(f, cfg);
    d.seg_rate = static_cast<double>(cps.size()) / duration;
    d.seg_dur = duration / static_cast<double>(cps.size() + 1);
    return d;
}

}  // namespace audio
}  // namespace egoadl
