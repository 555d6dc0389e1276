#pragma once

// Brute-force references for the two-level HMM: random small models and
// exhaustive enumeration of every hierarchical event path.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "egoadl/hhmm.hpp"

namespace egoadl::testing {

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> p(n);
    double s = 0;
    for (auto& v : p) s += (v = u(rng));
    for (auto& v : p) v /= s;
    return p;
}

inline GaussianMixture random_mixture(std::mt19937_64& rng, std::size_t dim, std::size_t g) {
    std::normal_distribution<double> n(0, 1);
    std::uniform_real_distribution<double> var(0.3, 2.0);
    GaussianMixture gm;
    const auto w = random_simplex(rng, g);
    for (std::size_t k = 0; k < g; ++k) {
        GaussianComponent c;
        c.weight = w[k];
        for (std::size_t d = 0; d < dim; ++d) {
            c.mean.push_back(n(rng));
            c.var.push_back(var(rng));
        }
        gm.components.push_back(std::move(c));
    }
    return gm;
}

/// Ergodic activity with strictly positive entry, transitions and exits.
inline ActivityHMM random_activity(std::mt19937_64& rng, const std::string& id, std::size_t m, std::size_t dim,
                                   std::size_t g = 1) {
    ActivityHMM a;
    a.activity = id;
    a.topology = Topology::ergodic;
    a.entry = random_simplex(rng, m);
    for (std::size_t j = 0; j < m; ++j) {
        a.states.push_back(random_mixture(rng, dim, g));
        auto row = random_simplex(rng, m + 1);
        a.exit.push_back(row.back());
        row.pop_back();
        a.trans.push_back(row);
    }
    return a;
}

inline HierarchicalHMM random_hierarchy(std::mt19937_64& rng, std::size_t K, std::size_t m, std::size_t dim) {
    HierarchicalHMM h;
    for (std::size_t a = 0; a < K; ++a) {
        h.activities.push_back(random_activity(rng, "act" + std::to_string(a), m, dim));
        h.top.push_back(random_simplex(rng, K));
    }
    h.initial = random_simplex(rng, K);
    return h;
}

inline ObservationSequence random_observations(std::mt19937_64& rng, std::size_t T, std::size_t dim) {
    std::normal_distribution<double> n(0, 1);
    ObservationSequence obs(T, Observation(dim));
    for (auto& o : obs)
        for (auto& v : o) v = n(rng);
    return obs;
}

/// Probability of every (activity, substate) path, summed over the hidden
/// routes that produce it: at each step either an internal move, or an exit
/// followed by a top-level move and an entry. Keys are flat state indices
/// (activities laid out in order). Paths may end in any state.
inline std::map<std::vector<std::size_t>, double> enumerate_paths(const HierarchicalHMM& h,
                                                                  const ObservationSequence& obs) {
    std::vector<std::size_t> offset{0};
    for (const auto& a : h.activities) offset.push_back(offset.back() + a.size());
    std::map<std::vector<std::size_t>, double> out;
    std::vector<std::size_t> path;
    auto b = [&](std::size_t a, std::size_t j, std::size_t t) { return std::exp(h.activities[a].states[j].log_pdf(obs[t])); };
    std::function<void(std::size_t, std::size_t, std::size_t, double)> walk = [&](std::size_t a, std::size_t j,
                                                                                  std::size_t t, double p) {
        path.push_back(offset[a] + j);
        p *= b(a, j, t);
        if (t + 1 == obs.size()) {
            out[path] += p;
        } else {
            const auto& A = h.activities[a];
            for (std::size_t jj = 0; jj < A.size(); ++jj)
                if (A.trans[j][jj] > 0) walk(a, jj, t + 1, p * A.trans[j][jj]);
            for (std::size_t bb = 0; bb < h.size(); ++bb) {
                const auto& B = h.activities[bb];
                for (std::size_t jj = 0; jj < B.size(); ++jj) {
                    const double q = A.exit[j] * h.top[a][bb] * B.entry[jj];
                    if (q > 0) walk(bb, jj, t + 1, p * q);
                }
            }
        }
        path.pop_back();
    };
    for (std::size_t a = 0; a < h.size(); ++a)
        for (std::size_t j = 0; j < h.activities[a].size(); ++j) {
            const double q = h.initial[a] * h.activities[a].entry[j];
            if (q > 0) walk(a, j, 0, q);
        }
    return out;
}

/// Likelihood of one run under a single activity, entry to exit, by summing
/// every substate path.
inline double activity_likelihood_oracle(const ActivityHMM& A, const ObservationSequence& obs) {
    const std::size_t m = A.size(), T = obs.size();
    std::vector<std::size_t> idx(T, 0);
    double total = 0;
    while (true) {
        double p = A.entry[idx[0]] * A.exit[idx[T - 1]];
        for (std::size_t t = 0; t < T; ++t) {
            if (t > 0) p *= A.trans[idx[t - 1]][idx[t]];
            p *= std::exp(A.states[idx[t]].log_pdf(obs[t]));
        }
        total += p;
        std::size_t k = 0;
        while (k < T && ++idx[k] == m) idx[k++] = 0;
        if (k == T) break;
    }
    return total;
}

}  // namespace egoadl::testing
