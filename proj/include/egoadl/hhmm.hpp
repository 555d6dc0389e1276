#pragma once

// Two-level HMM for activity labeling. The top level is a fully connected
// chain over activities; each activity expands into an m-state HMM with
// diagonal-covariance GMM emissions and non-emitting entry/exit states.
// Activity models are trained separately by Baum-Welch on labeled runs and
// decoded jointly on the flattened (composite) model.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egoadl/descriptors.hpp"
#include "egoadl/error.hpp"

namespace egoadl {

using Observation = std::vector<double>;
using ObservationSequence = std::vector<Observation>;
using Matrix = std::vector<std::vector<double>>;

struct GaussianComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> var;  // diagonal
    friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct GaussianMixture {
    std::vector<GaussianComponent> components;

    std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }

    static double component_log_pdf(const GaussianComponent& c, std::span<const double> o) {
        constexpr double log2pi = 1.8378770664093454835606594728112;
        double s = 0;
        for (std::size_t d = 0; d < o.size(); ++d) {
            const double diff = o[d] - c.mean[d];
            s += log2pi + std::log(c.var[d]) + diff * diff / c.var[d];
        }
        return -0.5 * s;
    }

    double log_pdf(std::span<const double> o) const {
        if (o.size() != dim()) throw ValidationError("observation dimension mismatch");
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(components.size());
        for (std::size_t k = 0; k < components.size(); ++k) {
            terms[k] = std::log(components[k].weight) + component_log_pdf(components[k], o);
            best = std::max(best, terms[k]);
        }
        if (!std::isfinite(best)) return best;
        double s = 0;
        for (double t : terms) s += std::exp(t - best);
        return best + std::log(s);
    }

    friend bool operator==(const GaussianMixture&, const GaussianMixture&) = default;
};

enum class Topology { left_to_right, ergodic };

/// Bottom-level model of one activity. Row i of `trans` plus `exit[i]` sums to 1.
struct ActivityHMM {
    std::string activity;
    Topology topology = Topology::left_to_right;
    std::vector<GaussianMixture> states;
    std::vector<double> entry;  // non-emitting entry -> state
    Matrix trans;               // state -> state
    std::vector<double> exit;   // state -> non-emitting exit

    std::size_t size() const { return states.size(); }
    /// Shortest observation run the topology can emit between entry and exit.
    std::size_t min_length() const { return topology == Topology::left_to_right ? size() : 1; }

    friend bool operator==(const ActivityHMM&, const ActivityHMM&) = default;
};

struct HierarchicalHMM {
    std::vector<ActivityHMM> activities;
    Matrix top;                   // K x K, activity -> activity after an exit
    std::vector<double> initial;  // K

    std::size_t size() const { return activities.size(); }
    friend bool operator==(const HierarchicalHMM&, const HierarchicalHMM&) = default;
};

/// Single-level equivalent of a HierarchicalHMM with the non-emitting states eliminated.
struct CompositeHMM {
    std::vector<GaussianMixture> states;
    Matrix trans;
    std::vector<double> initial;
    std::vector<std::pair<std::size_t, std::size_t>> owner;  // (activity, substate)
    std::vector<std::string> activity_names;

    std::size_t size() const { return states.size(); }
};

namespace hhmm {

inline constexpr double kDefaultVarianceFloor = 1e-4;
inline constexpr double kMinMixtureWeight = 1e-8;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct InitConfig {
    std::size_t states = 3;      // m
    std::size_t components = 1;  // G
    std::uint64_t seed = 1;
    Topology topology = Topology::left_to_right;
    double variance_floor = kDefaultVarianceFloor;
};

struct TrainConfig {
    int max_iterations = 20;
    double tolerance = 1e-4;
    double variance_floor = kDefaultVarianceFloor;
};

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline double sq_dist(const Observation& a, const Observation& b) {
    double s = 0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding; returns the cluster of each point.
inline std::vector<std::size_t> kmeans(const std::vector<Observation>& pts, std::size_t k, std::uint64_t seed,
                                       std::vector<Observation>* centers_out = nullptr, int max_iter = 100) {
    if (k == 0 || pts.size() < k) throw InsufficientDataError("kmeans: fewer points than clusters");
    std::mt19937_64 rng(seed);
    std::vector<Observation> centers;
    centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, pts.size() - 1)(rng)]);
    std::vector<double> d2(pts.size());
    while (centers.size() < k) {
        double total = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, detail::sq_dist(pts[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            while (pick + 1 < pts.size() && r >= d2[pick]) r -= d2[pick++];
        } else {
            pick = centers.size() % pts.size();
        }
        centers.push_back(pts[pick]);
    }

    std::vector<std::size_t> assign(pts.size(), k);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            std::size_t best = 0;
            double bd = detail::sq_dist(pts[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = detail::sq_dist(pts[i], centers[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        std::vector<std::size_t> counts(k, 0);
        for (auto& c : centers) std::fill(c.begin(), c.end(), 0.0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            ++counts[assign[i]];
            for (std::size_t d = 0; d < pts[i].size(); ++d) centers[assign[i]][d] += pts[i][d];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (auto& v : centers[c]) v /= static_cast<double>(counts[c]);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            // Re-seed an empty cluster with the point farthest from its center.
            std::size_t far = pts.size();
            double fd = -1;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (counts[assign[i]] < 2) continue;
                const double d = detail::sq_dist(pts[i], centers[assign[i]]);
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            if (far == pts.size()) throw InsufficientDataError("kmeans: cannot fill empty cluster");
            --counts[assign[far]];
            centers[c] = pts[far];
            assign[far] = c;
            counts[c] = 1;
            changed = true;
        }
        if (!changed) break;
    }
    if (centers_out) *centers_out = centers;
    return assign;
}

/// GMM fitted to a pool of observations by k-means (weights = cluster shares).
inline GaussianMixture init_mixture(const std::vector<Observation>& pool, std::size_t g, std::uint64_t seed,
                                    double variance_floor) {
    if (pool.size() < g) throw InsufficientDataError("insufficient data: fewer observations than mixture components");
    std::vector<Observation> centers;
    const auto assign = kmeans(pool, g, seed, &centers);
    const std::size_t dim = pool.front().size();
    GaussianMixture gm;
    for (std::size_t c = 0; c < g; ++c) {
        GaussianComponent comp;
        comp.mean.assign(dim, 0.0);
        comp.var.assign(dim, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (assign[i] != c) continue;
            ++n;
            for (std::size_t d = 0; d < dim; ++d) comp.mean[d] += pool[i][d];
        }
        for (auto& m : comp.mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (assign[i] != c) continue;
            for (std::size_t d = 0; d < dim; ++d) comp.var[d] += (pool[i][d] - comp.mean[d]) * (pool[i][d] - comp.mean[d]);
        }
        for (auto& v : comp.var) v = std::max(v / static_cast<double>(n), variance_floor);
        comp.weight = static_cast<double>(n) / static_cast<double>(pool.size());
        gm.components.push_back(std::move(comp));
    }
    return gm;
}

/// Transition structure before training: left-to-right rows use self 0.6,
/// forward 0.3 and (last state only) exit 0.1, renormalized.
inline void init_transitions(ActivityHMM& h) {
    const std::size_t m = h.size();
    h.entry.assign(m, 0.0);
    h.trans.assign(m, std::vector<double>(m, 0.0));
    h.exit.assign(m, 0.0);
    if (h.topology == Topology::left_to_right) {
        h.entry[0] = 1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const bool last = i + 1 == m;
            const double total = 0.6 + (last ? 0.1 : 0.3);
            h.trans[i][i] = 0.6 / total;
            if (last) h.exit[i] = 0.1 / total;
            else h.trans[i][i + 1] = 0.3 / total;
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            h.entry[i] = 1.0 / static_cast<double>(m);
            for (std::size_t j = 0; j < m; ++j) h.trans[i][j] = 0.9 / static_cast<double>(m);
            h.exit[i] = 0.1;
        }
    }
}

/// Sequences long enough to be emitted by the topology.
inline std::vector<ObservationSequence> usable_sequences(const std::vector<ObservationSequence>& seqs,
                                                          std::size_t min_length) {
    std::vector<ObservationSequence> out;
    for (const auto& s : seqs)
        if (s.size() >= std::max<std::size_t>(1, min_length)) out.push_back(s);
    return out;
}

/// Builds an untrained activity model. Every training run is cut into m
/// contiguous chunks; chunk j of every run initializes state j by k-means.
inline ActivityHMM init_activity_hmm(const std::string& activity, const std::vector<ObservationSequence>& sequences,
                                     const InitConfig& cfg) {
    const std::size_t m = cfg.states;
    if (m == 0 || cfg.components == 0) throw ValidationError("init_activity_hmm: m and G must be positive");
    ActivityHMM h;
    h.activity = activity;
    h.topology = cfg.topology;
    const std::size_t min_len = cfg.topology == Topology::left_to_right ? m : 1;
    const auto seqs = usable_sequences(sequences, min_len);
    std::size_t total = 0;
    for (const auto& s : seqs) total += s.size();
    if (total < m || seqs.empty())
        throw InsufficientDataError("insufficient data to train activity '" + activity + "': " +
                                    std::to_string(total) + " usable observations for " + std::to_string(m) + " states");
    const std::size_t dim = seqs.front().front().size();

    std::vector<std::vector<Observation>> pools(m);
    for (const auto& s : seqs)
        for (std::size_t t = 0; t < s.size(); ++t) {
            if (s[t].size() != dim) throw ValidationError("init_activity_hmm: inconsistent dimensions");
            pools[t * m / s.size()].push_back(s[t]);
        }
    if (std::any_of(pools.begin(), pools.end(), [](const auto& p) { return p.empty(); })) {
        std::vector<Observation> all;
        for (const auto& s : seqs) all.insert(all.end(), s.begin(), s.end());
        for (auto& p : pools) p.clear();
        for (std::size_t t = 0; t < all.size(); ++t) pools[t * m / all.size()].push_back(all[t]);
    }
    for (std::size_t j = 0; j < m; ++j)
        h.states.push_back(init_mixture(pools[j], cfg.components, cfg.seed + 7919 * j, cfg.variance_floor));
    init_transitions(h);
    return h;
}

// ---------------------------------------------------------------------------
// Baum-Welch

struct TrainResult {
    ActivityHMM model;
    std::vector<double> log_likelihood;  // one entry per evaluated model, in order
};

namespace detail {

struct Accumulators {
    std::vector<double> entry;
    Matrix trans;
    std::vector<double> exit;
    std::vector<double> occupancy;
    // per state, per component
    std::vector<std::vector<double>> resp;
    std::vector<std::vector<std::vector<double>>> s1, s2;  // centered on the current mean
    double log_likelihood = 0;
    std::size_t sequences = 0;
};

inline Accumulators make_accumulators(const ActivityHMM& h) {
    Accumulators a;
    const std::size_t m = h.size();
    a.entry.assign(m, 0.0);
    a.trans.assign(m, std::vector<double>(m, 0.0));
    a.exit.assign(m, 0.0);
    a.occupancy.assign(m, 0.0);
    a.resp.resize(m);
    a.s1.resize(m);
    a.s2.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t g = h.states[j].components.size(), d = h.states[j].dim();
        a.resp[j].assign(g, 0.0);
        a.s1[j].assign(g, std::vector<double>(d, 0.0));
        a.s2[j].assign(g, std::vector<double>(d, 0.0));
    }
    return a;
}

// Scaled forward-backward over one run that starts at the entry state and ends at the exit state.
inline void accumulate(const ActivityHMM& h, const ObservationSequence& seq, Accumulators& acc) {
    const std::size_t m = h.size(), T = seq.size();
    Matrix logb(T, std::vector<double>(m));
    std::vector<double> shift(T);
    Matrix b(T, std::vector<double>(m));
    for (std::size_t t = 0; t < T; ++t) {
        double mx = kNegInf;
        for (std::size_t j = 0; j < m; ++j) {
            logb[t][j] = h.states[j].log_pdf(seq[t]);
            mx = std::max(mx, logb[t][j]);
        }
        if (!std::isfinite(mx)) throw NumericError("baum_welch: observation has zero likelihood under every state");
        shift[t] = mx;
        for (std::size_t j = 0; j < m; ++j) b[t][j] = std::exp(logb[t][j] - mx);
    }

    Matrix alpha(T, std::vector<double>(m, 0.0));
    std::vector<double> scale(T, 0.0);
    for (std::size_t j = 0; j < m; ++j) alpha[0][j] = h.entry[j] * b[0][j];
    for (std::size_t t = 0;; ++t) {
        double c = 0;
        for (double v : alpha[t]) c += v;
        if (!(c > 0) || !std::isfinite(c)) throw NumericError("baum_welch: forward underflow despite scaling");
        for (double& v : alpha[t]) v /= c;
        scale[t] = c;
        if (t + 1 == T) break;
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0;
            for (std::size_t i = 0; i < m; ++i) s += alpha[t][i] * h.trans[i][j];
            alpha[t + 1][j] = s * b[t + 1][j];
        }
    }
    double end = 0;
    for (std::size_t i = 0; i < m; ++i) end += alpha[T - 1][i] * h.exit[i];
    if (!(end > 0)) throw NumericError("baum_welch: sequence cannot reach the exit state");

    double ll = std::log(end);
    for (std::size_t t = 0; t < T; ++t) ll += std::log(scale[t]) + shift[t];
    acc.log_likelihood += ll;
    ++acc.sequences;

    Matrix beta(T, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) beta[T - 1][i] = h.exit[i] / end;
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < m; ++j) s += h.trans[i][j] * b[t + 1][j] * beta[t + 1][j];
            beta[t][i] = s / scale[t + 1];
        }
    }

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < m; ++j) {
            const double gamma = alpha[t][j] * beta[t][j];
            if (t == 0) acc.entry[j] += gamma;
            if (t + 1 == T) acc.exit[j] += gamma;
            acc.occupancy[j] += gamma;
            if (t + 1 < T)
                for (std::size_t k = 0; k < m; ++k)
                    if (h.trans[j][k] > 0)
                        acc.trans[j][k] += alpha[t][j] * h.trans[j][k] * b[t + 1][k] * beta[t + 1][k] / scale[t + 1];
            if (gamma <= 0) continue;

            const auto& comps = h.states[j].components;
            std::vector<double> lw(comps.size());
            double mx = kNegInf;
            for (std::size_t k = 0; k < comps.size(); ++k) {
                lw[k] = std::log(comps[k].weight) + GaussianMixture::component_log_pdf(comps[k], seq[t]);
                mx = std::max(mx, lw[k]);
            }
            double z = 0;
            for (double& v : lw) z += (v = std::exp(v - mx));
            for (std::size_t k = 0; k < comps.size(); ++k) {
                const double r = gamma * lw[k] / z;
                acc.resp[j][k] += r;
                for (std::size_t d = 0; d < seq[t].size(); ++d) {
                    const double diff = seq[t][d] - comps[k].mean[d];
                    acc.s1[j][k][d] += r * diff;
                    acc.s2[j][k][d] += r * diff * diff;
                }
            }
        }
    }
}

inline ActivityHMM maximize(const ActivityHMM& h, const Accumulators& acc, double variance_floor) {
    ActivityHMM out = h;
    const std::size_t m = h.size();
    double entry_total = 0;
    for (double v : acc.entry) entry_total += v;
    for (std::size_t j = 0; j < m; ++j) out.entry[j] = acc.entry[j] / entry_total;

    for (std::size_t i = 0; i < m; ++i) {
        const double occ = acc.occupancy[i];
        if (!(occ > 0)) continue;  // unvisited state keeps its parameters
        double row = acc.exit[i];
        for (double v : acc.trans[i]) row += v;
        for (std::size_t j = 0; j < m; ++j) out.trans[i][j] = acc.trans[i][j] / row;
        out.exit[i] = acc.exit[i] / row;

        auto& comps = out.states[i].components;
        double wsum = 0;
        for (std::size_t k = 0; k < comps.size(); ++k) {
            const double r = acc.resp[i][k];
            if (r > 1e-300) {
                for (std::size_t d = 0; d < comps[k].mean.size(); ++d) {
                    const double delta = acc.s1[i][k][d] / r;
                    const double v = acc.s2[i][k][d] / r - delta * delta;
                    comps[k].mean[d] += delta;
                    comps[k].var[d] = std::max(v, variance_floor);
                }
            }
            comps[k].weight = std::max(r / occ, kMinMixtureWeight);
            wsum += comps[k].weight;
        }
        for (auto& c : comps) c.weight /= wsum;
    }
    return out;
}

}  // namespace detail

/// Log-likelihood of runs under an activity model (entry to exit).
inline double log_likelihood(const ActivityHMM& h, const std::vector<ObservationSequence>& sequences) {
    auto acc = detail::make_accumulators(h);
    for (const auto& s : sequences) detail::accumulate(h, s, acc);
    return acc.log_likelihood;
}

/// EM re-estimation of transitions, mixture weights, means and diagonal
/// variances. Stops when the log-likelihood gain drops below the tolerance
/// or after max_iterations M-steps.
inline TrainResult baum_welch(const ActivityHMM& model, const std::vector<ObservationSequence>& sequences,
                              const TrainConfig& cfg = {}) {
    const auto seqs = usable_sequences(sequences, model.min_length());
    if (seqs.empty())
        throw InsufficientDataError("baum_welch: no usable training sequences for '" + model.activity + "'");
    for (const auto& s : seqs)
        for (const auto& o : s)
            if (o.size() != model.states.front().dim()) throw ValidationError("baum_welch: dimension mismatch");

    TrainResult res{model, {}};
    bool converged = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        auto acc = detail::make_accumulators(res.model);
        for (const auto& s : seqs) detail::accumulate(res.model, s, acc);
        res.log_likelihood.push_back(acc.log_likelihood);
        if (it > 0 && acc.log_likelihood - res.log_likelihood[res.log_likelihood.size() - 2] < cfg.tolerance) {
            converged = true;
            break;
        }
        res.model = detail::maximize(res.model, acc, cfg.variance_floor);
    }
    if (!converged) res.log_likelihood.push_back(log_likelihood(res.model, seqs));
    return res;
}

// ---------------------------------------------------------------------------
// Top level

enum class TopMode { bigram, uniform };

struct TopLevel {
    Matrix transitions;
    std::vector<double> initial;
};

/// Add-one smoothed bigram estimate over per-segment label sequences
/// (activity indices in [0, K)).
inline TopLevel estimate_top_transitions(const std::vector<std::vector<std::size_t>>& label_sequences,
                                         std::size_t activity_count) {
    if (label_sequences.empty()) throw ValidationError("estimate_top_transitions: empty label set");
    if (activity_count == 0) throw ValidationError("estimate_top_transitions: no activities");
    const std::size_t K = activity_count;
    Matrix counts(K, std::vector<double>(K, 1.0));
    std::vector<double> first(K, 1.0);
    for (const auto& seq : label_sequences) {
        for (std::size_t l : seq)
            if (l >= K) throw ValidationError("estimate_top_transitions: label index out of range");
        if (!seq.empty()) first[seq.front()] += 1.0;
        for (std::size_t t = 1; t < seq.size(); ++t) counts[seq[t - 1]][seq[t]] += 1.0;
    }
    TopLevel top{counts, first};
    for (auto& row : top.transitions) {
        double s = 0;
        for (double v : row) s += v;
        for (double& v : row) v /= s;
    }
    double s = 0;
    for (double v : top.initial) s += v;
    for (double& v : top.initial) v /= s;
    return top;
}

inline TopLevel uniform_top(std::size_t activity_count) {
    const double p = 1.0 / static_cast<double>(activity_count);
    return {Matrix(activity_count, std::vector<double>(activity_count, p)), std::vector<double>(activity_count, p)};
}

// ---------------------------------------------------------------------------
// Flattening and decoding

/// Eliminates entry/exit states: (A, j) -> (B, j') gets
/// trans_A[j][j'] * [A == B] + exit_A[j] * top[A][B] * entry_B[j'].
inline CompositeHMM flatten(const HierarchicalHMM& h) {
    const std::size_t K = h.size();
    if (h.top.size() != K || h.initial.size() != K) throw ValidationError("flatten: top level does not match activities");
    CompositeHMM c;
    std::vector<std::size_t> offset(K + 1, 0);
    for (std::size_t a = 0; a < K; ++a) {
        offset[a + 1] = offset[a] + h.activities[a].size();
        c.activity_names.push_back(h.activities[a].activity);
        for (std::size_t j = 0; j < h.activities[a].size(); ++j) {
            c.states.push_back(h.activities[a].states[j]);
            c.owner.emplace_back(a, j);
        }
    }
    const std::size_t S = offset[K];
    if (S > 0) {
        const std::size_t dim = c.states.front().dim();
        for (const auto& st : c.states)
            if (st.dim() != dim) throw ValidationError("flatten: activities disagree on observation dimension");
    }
    c.trans.assign(S, std::vector<double>(S, 0.0));
    c.initial.assign(S, 0.0);
    for (std::size_t a = 0; a < K; ++a) {
        const auto& A = h.activities[a];
        for (std::size_t j = 0; j < A.size(); ++j) {
            c.initial[offset[a] + j] = h.initial[a] * A.entry[j];
            auto& row = c.trans[offset[a] + j];
            for (std::size_t jj = 0; jj < A.size(); ++jj) row[offset[a] + jj] += A.trans[j][jj];
            for (std::size_t b = 0; b < K; ++b) {
                const auto& B = h.activities[b];
                const double hop = A.exit[j] * h.top[a][b];
                for (std::size_t jj = 0; jj < B.size(); ++jj) row[offset[b] + jj] += hop * B.entry[jj];
            }
        }
    }
    return c;
}

/// Log emission score of every state for every observation (T x S).
inline Matrix emission_scores(const CompositeHMM& c, const ObservationSequence& obs) {
    Matrix out(obs.size(), std::vector<double>(c.size()));
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (obs[t].size() != c.states.front().dim())
            throw ValidationError("observation dimension " + std::to_string(obs[t].size()) + " does not match model dimension " +
                                  std::to_string(c.states.front().dim()));
        for (std::size_t j = 0; j < c.size(); ++j) out[t][j] = c.states[j].log_pdf(obs[t]);
    }
    return out;
}

/// Total log probability of the observations (paths may end in any state).
inline double forward_log_likelihood(const CompositeHMM& c, const ObservationSequence& obs) {
    if (obs.empty()) throw ValidationError("forward: empty observation sequence");
    const auto logb = emission_scores(c, obs);
    const std::size_t S = c.size();
    std::vector<double> alpha(S), next(S);
    double ll = 0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
        const double mx = *std::max_element(logb[t].begin(), logb[t].end());
        for (std::size_t j = 0; j < S; ++j) {
            double prior;
            if (t == 0) {
                prior = c.initial[j];
            } else {
                prior = 0;
                for (std::size_t i = 0; i < S; ++i) prior += alpha[i] * c.trans[i][j];
            }
            next[j] = prior * std::exp(logb[t][j] - mx);
        }
        double z = 0;
        for (double v : next) z += v;
        if (!(z > 0)) throw NumericError("forward: underflow despite scaling");
        for (std::size_t j = 0; j < S; ++j) alpha[j] = next[j] / z;
        ll += std::log(z) + mx;
    }
    return ll;
}

struct DecodeResult {
    std::vector<std::size_t> states;      // composite state per observation
    std::vector<std::size_t> activities;  // activity index per observation
    double log_probability = kNegInf;
};

/// Viterbi on precomputed log emission scores; ties go to the lower state index.
inline DecodeResult viterbi_scores(const CompositeHMM& c, const Matrix& log_emissions) {
    const std::size_t T = log_emissions.size(), S = c.size();
    if (T == 0) throw ValidationError("viterbi: empty observation sequence");
    auto lg = [](double p) { return p > 0 ? std::log(p) : kNegInf; };
    Matrix logA(S, std::vector<double>(S));
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < S; ++j) logA[i][j] = lg(c.trans[i][j]);

    std::vector<double> delta(S), next(S);
    std::vector<std::vector<std::size_t>> back(T, std::vector<std::size_t>(S, 0));
    for (std::size_t j = 0; j < S; ++j) delta[j] = lg(c.initial[j]) + log_emissions[0][j];
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t j = 0; j < S; ++j) {
            double best = kNegInf;
            std::size_t arg = 0;
            for (std::size_t i = 0; i < S; ++i) {
                const double v = delta[i] + logA[i][j];
                if (v > best) {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_emissions[t][j];
            back[t][j] = arg;
        }
        delta.swap(next);
    }
    DecodeResult r;
    std::size_t last = 0;
    for (std::size_t j = 0; j < S; ++j)
        if (delta[j] > r.log_probability) {
            r.log_probability = delta[j];
            last = j;
        }
    if (!std::isfinite(r.log_probability)) throw NumericError("viterbi: no path with nonzero probability");
    r.states.assign(T, 0);
    r.states[T - 1] = last;
    for (std::size_t t = T - 1; t > 0; --t) r.states[t - 1] = back[t][r.states[t]];
    for (std::size_t s : r.states) r.activities.push_back(c.owner[s].first);
    return r;
}

inline DecodeResult viterbi(const CompositeHMM& c, const ObservationSequence& obs) {
    if (obs.empty()) throw ValidationError("viterbi: empty observation sequence");
    return viterbi_scores(c, emission_scores(c, obs));
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr int kModelVersion = 1;
inline constexpr const char* kModelFormat = "egoadl-hhmm";

/// Everything decode needs: the HMM plus the observation-space contract it was trained on.
struct ModelBundle {
    HierarchicalHMM hmm;
    desc::Normalizer normalizer;
    BlockSelection blocks;
    std::vector<BlockLayoutEntry> layout;
};

inline nlohmann::json to_json(const ModelBundle& b) {
    using nlohmann::json;
    json acts = json::array();
    for (const auto& a : b.hmm.activities) {
        json states = json::array();
        for (const auto& s : a.states) {
            json comps = json::array();
            for (const auto& c : s.components) comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}});
            states.push_back({{"components", comps}});
        }
        acts.push_back({{"id", a.activity},
                        {"topology", a.topology == Topology::left_to_right ? "left_to_right" : "ergodic"},
                        {"entry", a.entry},
                        {"transitions", a.trans},
                        {"exit", a.exit},
                        {"states", states}});
    }
    json layout = json::array();
    for (const auto& l : b.layout) layout.push_back({{"name", l.name}, {"offset", l.offset}, {"size", l.size}});
    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["activities"] = acts;
    j["top"] = {{"initial", b.hmm.initial}, {"transitions", b.hmm.top}};
    j["normalization"] = {{"mean", b.normalizer.mean}, {"std", b.normalizer.stddev}};
    j["blocks"] = b.blocks.name();
    j["layout"] = layout;
    return j;
}

inline ModelBundle from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kModelFormat) throw ParseError("not an egoadl model file");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion)
        throw VersionError("model file version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kModelVersion) + ")");
    ModelBundle b;
    for (const auto& ja : j.at("activities")) {
        ActivityHMM a;
        a.activity = ja.at("id").get<std::string>();
        a.topology = ja.value("topology", std::string("left_to_right")) == "ergodic" ? Topology::ergodic : Topology::left_to_right;
        a.entry = ja.at("entry").get<std::vector<double>>();
        a.trans = ja.at("transitions").get<Matrix>();
        a.exit = ja.at("exit").get<std::vector<double>>();
        for (const auto& js : ja.at("states")) {
            GaussianMixture gm;
            for (const auto& jc : js.at("components"))
                gm.components.push_back({jc.at("weight").get<double>(), jc.at("mean").get<std::vector<double>>(),
                                         jc.at("var").get<std::vector<double>>()});
            a.states.push_back(std::move(gm));
        }
        if (a.entry.size() != a.size() || a.exit.size() != a.size() || a.trans.size() != a.size())
            throw ParseError("activity '" + a.activity + "' has inconsistent state counts");
        b.hmm.activities.push_back(std::move(a));
    }
    b.hmm.initial = j.at("top").at("initial").get<std::vector<double>>();
    b.hmm.top = j.at("top").at("transitions").get<Matrix>();
    b.normalizer.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    b.normalizer.stddev = j.at("normalization").at("std").get<std::vector<double>>();
    b.blocks = BlockSelection::parse(j.at("blocks").get<std::string>());
    for (const auto& jl : j.at("layout"))
        b.layout.push_back({jl.at("name").get<std::string>(), jl.at("offset").get<std::size_t>(), jl.at("size").get<std::size_t>()});
    if (b.hmm.initial.size() != b.hmm.size() || b.hmm.top.size() != b.hmm.size())
        throw ParseError("top level does not match the activity count");
    return b;
}

inline void save_model(const std::filesystem::path& path, const ModelBundle& b) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << to_json(b).dump(1) << "\n";
}

inline ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace hhmm
}  // namespace egoadl
