#ifndef KACPOTTS_SAMPLER_HPP
#define KACPOTTS_SAMPLER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "kernel.hpp"
#include "potts.hpp"
#include "rng.hpp"
#include "torus.hpp"

namespace kacpotts {

enum class SamplerKind { heat_bath, cluster };

namespace stream {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t heat_bath = 2;
constexpr std::uint64_t bond = 3;
constexpr std::uint64_t cluster = 4;
}

/// Couplings J((x_i - x_j)/n) between the active sites, looked up either
/// from a dense matrix (small volumes) or from the stencil on the fly.
class SiteCouplings {
public:
    SiteCouplings() = default;

    SiteCouplings(const Subvolume& volume, const ScalarField& stencil) : volume_(volume), stencil_(stencil) {
        const std::size_t m = volume.size();
        constant_ = is_constant(stencil);
        if (!constant_ && m * m <= dense_limit) {
            dense_ = coupling_matrix(volume, stencil);
        }
    }

    double operator()(std::size_t i, std::size_t j) const {
        if (constant_) {
            return stencil_[0];
        }
        if (!dense_.empty()) {
            return dense_[i * volume_.size() + j];
        }
        auto s = volume_.sites();
        return stencil_[volume_.grid().difference(s[i], s[j])];
    }

    bool constant() const { return constant_; }
    double self() const { return stencil_[0]; }
    std::size_t size() const { return volume_.size(); }

    static constexpr std::size_t dense_limit = std::size_t{1} << 22;

private:
    Subvolume volume_;
    ScalarField stencil_;
    std::vector<double> dense_;
    bool constant_ = false;
};

/// Unnormalized heat-bath log weights at site i: (2 beta/|Lambda|) sum_{j != i} K_ij 1{c_j = a}.
inline std::vector<double> heat_bath_log_weights(std::span<const Color> colors, std::size_t i,
                                                 const SiteCouplings& k, double beta, int r) {
    std::vector<double> w(static_cast<std::size_t>(r), 0.0);
    for (std::size_t j = 0; j < colors.size(); ++j) {
        if (j != i) {
            w[static_cast<std::size_t>(colors[j])] += k(i, j);
        }
    }
    const double scale = 2.0 * beta / static_cast<double>(colors.size());
    for (auto& v : w) {
        v *= scale;
    }
    return w;
}

/// A single Markov chain targeting mu_{Lambda,beta,r}.
///
/// Random decisions are pure functions of (key, sweep, site, stream color),
/// where the stream color of color a is labels()[a]. Relabeling the colors of
/// the initial state by a permutation p and replacing labels by labels o p^-1
/// makes the chain follow the p-image of the original trajectory.
class ChainState {
public:
    ChainState() = default;

    ChainState(ColorConfiguration cfg, double beta, const ScalarField& stencil, std::uint64_t key)
        : cfg_(std::move(cfg)), beta_(beta), couplings_(cfg_.domain(), stencil), key_(key) {
        require(!cfg_.domain().empty(), "ChainState: empty subvolume");
        require(beta >= 0.0 && std::isfinite(beta), "ChainState: beta must be finite and nonnegative");
        labels_.resize(static_cast<std::size_t>(cfg_.num_colors()));
        std::iota(labels_.begin(), labels_.end(), 0);
        resync();
    }

    /// Chain started from i.i.d. uniform colors drawn from the key.
    static ChainState random_start(const Subvolume& volume, int r, double beta, const ScalarField& stencil,
                                   std::uint64_t key) {
        std::vector<Color> c(volume.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i] = static_cast<Color>(splitmix64(hash_key({key, stream::init, i})) % static_cast<std::uint64_t>(r));
        }
        return ChainState(ColorConfiguration(volume, std::move(c), r), beta, stencil, key);
    }

    const ColorConfiguration& configuration() const { return cfg_; }
    int r() const { return cfg_.num_colors(); }
    double beta() const { return beta_; }
    std::uint64_t key() const { return key_; }
    std::uint64_t sweeps() const { return sweeps_; }
    const SiteCouplings& couplings() const { return couplings_; }

    std::span<const int> labels() const { return labels_; }
    void set_labels(std::vector<int> labels) {
        require(labels.size() == labels_.size(), "ChainState: label map must cover every color");
        labels_ = std::move(labels);
    }

    /// Cached field sum_{j != i} K_ij 1{c_j = a}.
    double field(std::size_t i, Color a) const {
        if (couplings_.constant()) {
            auto c = cfg_.colors();
            double cnt = static_cast<double>(counts_[static_cast<std::size_t>(a)]) - (c[i] == a ? 1.0 : 0.0);
            return couplings_.self() * cnt;
        }
        return fields_[i * static_cast<std::size_t>(r()) + static_cast<std::size_t>(a)];
    }

    std::span<const std::size_t> counts() const { return counts_; }

    /// Largest deviation between cached and recomputed local fields.
    double cache_error() const {
        double worst = 0.0;
        auto c = cfg_.colors();
        for (std::size_t i = 0; i < c.size(); ++i) {
            auto w = heat_bath_log_weights(c, i, couplings_, 1.0, r());
            const double unscale = static_cast<double>(c.size()) / 2.0;
            for (int a = 0; a < r(); ++a) {
                worst = std::max(worst, std::abs(w[static_cast<std::size_t>(a)] * unscale - field(i, a)));
            }
        }
        return worst;
    }

    void resync() {
        const std::size_t m = cfg_.size();
        const auto rr = static_cast<std::size_t>(r());
        auto c = cfg_.colors();
        counts_.assign(rr, 0);
        for (Color a : c) {
            ++counts_[static_cast<std::size_t>(a)];
        }
        if (couplings_.constant()) {
            fields_.clear();
            return;
        }
        fields_.assign(m * rr, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    fields_[i * rr + static_cast<std::size_t>(c[j])] += couplings_(i, j);
                }
            }
        }
    }

    void set_color(std::size_t i, Color to) {
        auto c = cfg_.colors();
        Color from = c[i];
        if (from == to) {
            return;
        }
        c[i] = to;
        --counts_[static_cast<std::size_t>(from)];
        ++counts_[static_cast<std::size_t>(to)];
        if (couplings_.constant()) {
            return;
        }
        const auto rr = static_cast<std::size_t>(r());
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (j != i) {
                double kji = couplings_(j, i);
                fields_[j * rr + static_cast<std::size_t>(from)] -= kji;
                fields_[j * rr + static_cast<std::size_t>(to)] += kji;
            }
        }
    }

    void replace_colors(std::span<const Color> colors) {
        auto c = cfg_.colors();
        std::copy(colors.begin(), colors.end(), c.begin());
        resync();
    }

    void finish_sweep() {
        ++sweeps_;
        if (sweeps_ % resync_interval == 0) {
            resync();
        }
    }

    static constexpr std::uint64_t resync_interval = 64;

private:
    ColorConfiguration cfg_;
    double beta_ = 0.0;
    SiteCouplings couplings_;
    std::uint64_t key_ = 0;
    std::uint64_t sweeps_ = 0;
    std::vector<int> labels_;
    std::vector<double> fields_;
    std::vector<std::size_t> counts_;
};

/// One systematic-scan sweep of heat-bath updates, drawn by Gumbel-max.
inline void heat_bath_sweep(ChainState& state) {
    const std::size_t m = state.configuration().size();
    const int r = state.r();
    const double scale = 2.0 * state.beta() / static_cast<double>(m);
    auto labels = state.labels();
    for (std::size_t i = 0; i < m; ++i) {
        Color best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (Color a = 0; a < r; ++a) {
            std::uint64_t bits = hash_key({state.key(), stream::heat_bath, state.sweeps(), i,
                                           static_cast<std::uint64_t>(labels[static_cast<std::size_t>(a)])});
            double score = scale * state.field(i, a) + gumbel(bits);
            if (score > best_score) {
                best_score = score;
                best = a;
            }
        }
        state.set_color(i, best);
    }
    state.finish_sweep();
}

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) {
            return;
        }
        if (size_[a] < size_[b]) {
            std::swap(a, b);
        }
        parent_[b] = a;
        size_[a] += size_[b];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

/// One Swendsen-Wang update: open bonds between equal colors with
/// p = 1 - exp(-2 beta K_ij / |Lambda|), then recolor each cluster uniformly.
inline void cluster_sweep(ChainState& state) {
    auto colors = state.configuration().colors();
    const std::size_t m = colors.size();
    const int r = state.r();
    const double scale = 2.0 * state.beta() / static_cast<double>(m);
    const auto& k = state.couplings();
    auto labels = state.labels();
    DisjointSets sets(m);
    if (scale > 0.0) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                if (colors[i] != colors[j]) {
                    continue;
                }
                double p = -std::expm1(-scale * k(i, j));
                if (p <= 0.0) {
                    continue;
                }
                double u = to_open_unit(hash_key({state.key(), stream::bond, state.sweeps(), i, j}));
                if (u < p) {
                    sets.unite(i, j);
                }
            }
        }
    }
    // Clusters are keyed by their smallest site, so the draw does not depend on
    // the union-find root choice.
    std::vector<std::size_t> root_min(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t root = sets.find(i);
        root_min[root] = std::min(root_min[root], i);
    }
    std::vector<Color> fresh(m);
    std::vector<Color> cluster_color(m, -1);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t root = sets.find(i);
        if (cluster_color[root] < 0) {
            Color best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (Color a = 0; a < r; ++a) {
                double g = gumbel(hash_key({state.key(), stream::cluster, state.sweeps(), root_min[root],
                                            static_cast<std::uint64_t>(labels[static_cast<std::size_t>(a)])}));
                if (g > best_score) {
                    best_score = g;
                    best = a;
                }
            }
            cluster_color[root] = best;
        }
        fresh[i] = cluster_color[root];
    }
    state.replace_colors(fresh);
    state.finish_sweep();
}

inline void sweep(ChainState& state, SamplerKind kind) {
    if (kind == SamplerKind::heat_bath) {
        heat_bath_sweep(state);
    } else {
        cluster_sweep(state);
    }
}

struct SamplingPlan {
    std::size_t sweeps = 1000;
    std::size_t burn_in = 100;
    std::size_t thinning = 1;
    std::uint64_t seed = 0;
    std::uint64_t chain = 0;
    SamplerKind kind = SamplerKind::heat_bath;

    void validate() const {
        require(sweeps > 0, "SamplingPlan: sweeps must be positive");
        require(thinning > 0, "SamplingPlan: thinning must be positive");
    }

    std::uint64_t key() const { return hash_key({seed, chain}); }
};

/// Runs burn-in then `sweeps` sweeps, calling observe after every thinning-th sweep.
inline void run_chain(ChainState& state, const SamplingPlan& plan,
                      const std::function<void(const ChainState&)>& observe) {
    plan.validate();
    for (std::size_t s = 0; s < plan.burn_in; ++s) {
        sweep(state, plan.kind);
    }
    for (std::size_t s = 1; s <= plan.sweeps; ++s) {
        sweep(state, plan.kind);
        if (s % plan.thinning == 0) {
            observe(state);
        }
    }
}

/// Thinned post-burn-in configurations of one chain from a uniform random start.
inline std::vector<ColorConfiguration> sample_profiles(const ModelParams& params, const Subvolume& volume, int r,
                                                       const SamplingPlan& plan) {
    params.validate();
    require(!volume.empty(), "sample_profiles: empty subvolume");
    auto stencil = discretize_kernel(params.kernel, volume.grid(), params.renormalize_stencil);
    auto state = ChainState::random_start(volume, r, params.beta, stencil, plan.key());
    std::vector<ColorConfiguration> out;
    out.reserve(plan.sweeps / plan.thinning);
    run_chain(state, plan, [&](const ChainState& s) { out.push_back(s.configuration()); });
    return out;
}

/// One-sweep transition matrix of the systematic-scan heat-bath chain,
/// row-stochastic over the ExactDistribution state indexing.
inline std::vector<double> heat_bath_transition_matrix(double beta, const Subvolume& volume, int r,
                                                       const ScalarField& stencil, std::size_t cap = 4096) {
    const std::size_t m = volume.size();
    std::size_t states = checked_state_count(r, m, cap);
    if (states > cap) {
        throw CapExceeded("heat_bath_transition_matrix: too many states");
    }
    SiteCouplings k(volume, stencil);
    ExactDistribution index{volume, r, {}};
    std::vector<double> t(states * states, 0.0);
    for (std::size_t s = 0; s < states; ++s) {
        t[s * states + s] = 1.0;
    }
    std::vector<double> next(states * states);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(next.begin(), next.end(), 0.0);
        std::vector<std::vector<double>> site_probs(states);
        for (std::size_t s = 0; s < states; ++s) {
            auto c = index.decode(s);
            auto w = heat_bath_log_weights(c, i, k, beta, r);
            double lz = log_sum_exp(w);
            for (auto& v : w) {
                v = std::exp(v - lz);
            }
            site_probs[s] = std::move(w);
        }
        std::size_t stride = 1;
        for (std::size_t p = 0; p < i; ++p) {
            stride *= static_cast<std::size_t>(r);
        }
        for (std::size_t row = 0; row < states; ++row) {
            for (std::size_t mid = 0; mid < states; ++mid) {
                double v = t[row * states + mid];
                if (v == 0.0) {
                    continue;
                }
                std::size_t digit = (mid / stride) % static_cast<std::size_t>(r);
                std::size_t base = mid - digit * stride;
                for (int a = 0; a < r; ++a) {
                    next[row * states + base + static_cast<std::size_t>(a) * stride] +=
                        v * site_probs[mid][static_cast<std::size_t>(a)];
                }
            }
        }
        std::swap(t, next);
    }
    return t;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), "total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += std::abs(p[i] - q[i]);
    }
    return 0.5 * s;
}

/// Fraction of the most frequent color, mapped to [0,1]: (r * maxfrac - 1)/(r - 1).
inline double order_parameter(std::span<const std::size_t> counts) {
    std::size_t total = 0;
    std::size_t best = 0;
    for (auto c : counts) {
        total += c;
        best = std::max(best, c);
    }
    const double r = static_cast<double>(counts.size());
    return (r * static_cast<double>(best) / static_cast<double>(total) - 1.0) / (r - 1.0);
}

}

#endif
