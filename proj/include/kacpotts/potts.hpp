#ifndef KACPOTTS_POTTS_HPP
#define KACPOTTS_POTTS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "kernel.hpp"
#include "torus.hpp"

namespace kacpotts {

/// Colors are stored 0-based: a q-color configuration uses values 0..q-1.
using Color = int;

struct ModelParams {
    int q = 2;
    double beta = 0.0;
    KacKernel kernel = KacKernel::uniform();
    bool renormalize_stencil = true;

    void validate() const {
        require(q >= 2, "ModelParams: q must be at least 2");
        require(beta >= 0.0 && std::isfinite(beta), "ModelParams: beta must be finite and nonnegative");
    }
};

/// An explicit set of distinct sites of a grid, kept sorted.
class Subvolume {
public:
    Subvolume() = default;

    Subvolume(const TorusGrid& grid, std::vector<std::size_t> sites) : grid_(grid), sites_(std::move(sites)) {
        std::sort(sites_.begin(), sites_.end());
        require(std::adjacent_find(sites_.begin(), sites_.end()) == sites_.end(), "Subvolume: sites must be distinct");
        require(sites_.empty() || sites_.back() < grid_.size(), "Subvolume: site out of range");
    }

    static Subvolume full(const TorusGrid& grid) {
        std::vector<std::size_t> all(grid.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = i;
        }
        return Subvolume(grid, std::move(all));
    }

    /// The torus with one site removed (the perforation at floor(n u)).
    static Subvolume perforated(const TorusGrid& grid, std::size_t hole) {
        require(hole < grid.size(), "Subvolume::perforated: site out of range");
        std::vector<std::size_t> rest;
        rest.reserve(grid.size() - 1);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (i != hole) {
                rest.push_back(i);
            }
        }
        return Subvolume(grid, std::move(rest));
    }

    const TorusGrid& grid() const { return grid_; }
    std::span<const std::size_t> sites() const { return sites_; }
    std::size_t size() const { return sites_.size(); }
    bool empty() const { return sites_.empty(); }
    bool is_full() const { return sites_.size() == grid_.size(); }

    bool contains(std::size_t site) const { return std::binary_search(sites_.begin(), sites_.end(), site); }

    bool operator==(const Subvolume&) const = default;

private:
    TorusGrid grid_;
    std::vector<std::size_t> sites_;
};

/// Colors on the active sites of a subvolume; colors[i] belongs to domain.sites()[i].
class ColorConfiguration {
public:
    ColorConfiguration() = default;

    ColorConfiguration(Subvolume domain, std::vector<Color> colors, int num_colors)
        : domain_(std::move(domain)), colors_(std::move(colors)), num_colors_(num_colors) {
        require(colors_.size() == domain_.size(), "ColorConfiguration: one color per active site");
        for (Color c : colors_) {
            require(c >= 0 && c < num_colors_, "ColorConfiguration: color out of range");
        }
    }

    static ColorConfiguration monochrome(Subvolume domain, int num_colors, Color c = 0) {
        std::vector<Color> colors(domain.size(), c);
        return ColorConfiguration(std::move(domain), std::move(colors), num_colors);
    }

    const Subvolume& domain() const { return domain_; }
    const TorusGrid& grid() const { return domain_.grid(); }
    std::span<const Color> colors() const { return colors_; }
    std::span<Color> colors() { return colors_; }
    int num_colors() const { return num_colors_; }
    std::size_t size() const { return colors_.size(); }

    /// Color of an active site, or -1 if the site is inactive.
    Color color_at_site(std::size_t site) const {
        auto s = domain_.sites();
        auto it = std::lower_bound(s.begin(), s.end(), site);
        if (it == s.end() || *it != site) {
            return -1;
        }
        return colors_[static_cast<std::size_t>(it - s.begin())];
    }

    bool operator==(const ColorConfiguration&) const = default;

private:
    Subvolume domain_;
    std::vector<Color> colors_;
    int num_colors_ = 2;
};

/// Sum over ordered pairs (x,y) of the domain, x=y included, of J(x-y) 1{sigma(x)=sigma(y)}.
inline double coincidence_sum(const ColorConfiguration& cfg, const ScalarField& stencil) {
    const TorusGrid& grid = cfg.grid();
    if (!(stencil.grid() == grid)) {
        throw GridMismatch("coincidence_sum: stencil grid differs from configuration grid");
    }
    auto sites = cfg.domain().sites();
    auto colors = cfg.colors();
    double s = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        for (std::size_t j = 0; j < sites.size(); ++j) {
            if (colors[i] == colors[j]) {
                s += stencil[grid.difference(sites[i], sites[j])];
            }
        }
    }
    return s;
}

/// H_n(sigma) = -n^-d sum_{x,y} J((x-y)/n) 1{sigma(x)=sigma(y)} on the full torus.
inline double hamiltonian(const ColorConfiguration& cfg, const ScalarField& stencil) {
    if (!cfg.domain().is_full()) {
        throw InvalidArgument("hamiltonian: configuration must cover the full torus");
    }
    return -coincidence_sum(cfg, stencil) / static_cast<double>(cfg.grid().size());
}

inline double hamiltonian(const ColorConfiguration& cfg, const ModelParams& params) {
    return hamiltonian(cfg, discretize_kernel(params.kernel, cfg.grid(), params.renormalize_stencil));
}

/// H_Lambda(sigma) = -|Lambda|^-1 sum_{x,y in Lambda} J((x-y)/n) 1{sigma(x)=sigma(y)}.
inline double hamiltonian_diluted(const ColorConfiguration& cfg, const ScalarField& stencil) {
    if (cfg.domain().empty()) {
        throw InvalidArgument("hamiltonian_diluted: empty subvolume");
    }
    return -coincidence_sum(cfg, stencil) / static_cast<double>(cfg.size());
}

inline double hamiltonian_diluted(const ColorConfiguration& cfg, const ModelParams& params) {
    return hamiltonian_diluted(cfg, discretize_kernel(params.kernel, cfg.grid(), params.renormalize_stencil));
}

constexpr std::size_t default_enumeration_cap = std::size_t{1} << 24;

/// Number of states r^k, or nullopt-like max() on overflow past the cap.
inline std::size_t checked_state_count(int r, std::size_t k, std::size_t cap) {
    std::size_t count = 1;
    for (std::size_t i = 0; i < k; ++i) {
        if (count > cap / static_cast<std::size_t>(r)) {
            return std::numeric_limits<std::size_t>::max();
        }
        count *= static_cast<std::size_t>(r);
    }
    return count;
}

/// Dense matrix of couplings J(x_i - x_j) between the sites of a subvolume.
inline std::vector<double> coupling_matrix(const Subvolume& volume, const ScalarField& stencil) {
    auto sites = volume.sites();
    const std::size_t m = sites.size();
    std::vector<double> k(m * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            k[i * m + j] = stencil[volume.grid().difference(sites[i], sites[j])];
        }
    }
    return k;
}

/// Visits every coloring of m sites with r colors in odometer order (site 0
/// fastest), passing (state index, colors, off-diagonal coincidence sum
/// sum_{i != j} K_ij 1{c_i = c_j}). The sum is updated incrementally and
/// recomputed from scratch periodically to bound round-off drift.
inline void for_each_coloring(std::span<const double> couplings, std::size_t m, int r,
                              const std::function<void(std::size_t, std::span<const Color>, double)>& visit) {
    std::vector<Color> c(m, 0);
    std::vector<double> h(m * static_cast<std::size_t>(r), 0.0);
    auto rebuild = [&]() {
        std::fill(h.begin(), h.end(), 0.0);
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i != j) {
                    h[i * r + c[j]] += couplings[i * m + j];
                }
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            s += h[i * r + c[i]];
        }
        return s;
    };
    double pair_sum = rebuild();
    std::size_t state = 0;
    for (;;) {
        visit(state, c, pair_sum);
        ++state;
        std::size_t i = 0;
        while (i < m) {
            Color from = c[i];
            Color to = (from + 1) % r;
            pair_sum += 2.0 * (h[i * r + to] - h[i * r + from]);
            for (std::size_t j = 0; j < m; ++j) {
                if (j != i) {
                    h[j * r + from] -= couplings[j * m + i];
                    h[j * r + to] += couplings[j * m + i];
                }
            }
            c[i] = to;
            if (to != 0) {
                break;
            }
            ++i;
        }
        if (i == m) {
            return;
        }
        if ((state & 0xfffU) == 0) {
            pair_sum = rebuild();
        }
    }
}

/// Full Gibbs distribution of the diluted KPM mu_{Lambda,beta,r}.
///
/// State index encodes colors in base r with the first site of the volume as
/// the least significant digit.
struct ExactDistribution {
    Subvolume volume;
    int r = 2;
    std::vector<double> probabilities;

    std::vector<Color> decode(std::size_t state) const {
        std::vector<Color> c(volume.size());
        for (auto& v : c) {
            v = static_cast<Color>(state % static_cast<std::size_t>(r));
            state /= static_cast<std::size_t>(r);
        }
        return c;
    }

    std::size_t encode(std::span<const Color> colors) const {
        std::size_t s = 0;
        for (std::size_t i = colors.size(); i-- > 0;) {
            s = s * static_cast<std::size_t>(r) + static_cast<std::size_t>(colors[i]);
        }
        return s;
    }

    double probability(const ColorConfiguration& cfg) const { return probabilities[encode(cfg.colors())]; }
};

inline double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        mx = std::max(mx, x);
    }
    if (!std::isfinite(mx)) {
        return mx;
    }
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - mx);
    }
    return mx + std::log(s);
}

/// Log Boltzmann weights -beta H_Lambda for every coloring of the volume.
inline std::vector<double> exact_log_weights(double beta, const Subvolume& volume, int r, const ScalarField& stencil,
                                             std::size_t cap = default_enumeration_cap) {
    require(r >= 1, "exact_log_weights: need at least one local state");
    if (volume.empty()) {
        throw InvalidArgument("exact enumeration: empty subvolume");
    }
    std::size_t states = checked_state_count(r, volume.size(), cap);
    if (states > cap) {
        throw CapExceeded("exact enumeration: r^|Lambda| exceeds the state cap");
    }
    const std::size_t m = volume.size();
    auto k = coupling_matrix(volume, stencil);
    const double self = stencil[0] * static_cast<double>(m);
    const double scale = beta / static_cast<double>(m);
    std::vector<double> lw(states);
    for_each_coloring(k, m, r, [&](std::size_t s, std::span<const Color>, double pair_sum) {
        lw[s] = scale * (pair_sum + self);
    });
    return lw;
}

inline ExactDistribution exact_distribution(double beta, const Subvolume& volume, int r, const ScalarField& stencil,
                                            std::size_t cap = default_enumeration_cap) {
    auto lw = exact_log_weights(beta, volume, r, stencil, cap);
    double lz = log_sum_exp(lw);
    ExactDistribution d{volume, r, std::vector<double>(lw.size())};
    for (std::size_t s = 0; s < lw.size(); ++s) {
        d.probabilities[s] = std::exp(lw[s] - lz);
    }
    return d;
}

inline ExactDistribution exact_distribution(const ModelParams& params, const Subvolume& volume, int r,
                                            std::size_t cap = default_enumeration_cap) {
    params.validate();
    return exact_distribution(params.beta, volume, r,
                              discretize_kernel(params.kernel, volume.grid(), params.renormalize_stencil), cap);
}

/// Visits every composition (N_0, ..., N_{r-1}) of m into r nonnegative parts.
inline void for_each_composition(std::size_t m, int r, const std::function<void(std::span<const std::size_t>)>& visit) {
    std::vector<std::size_t> parts(static_cast<std::size_t>(r), 0);
    std::function<void(int, std::size_t)> rec = [&](int idx, std::size_t left) {
        if (idx == r - 1) {
            parts[static_cast<std::size_t>(idx)] = left;
            visit(parts);
            return;
        }
        for (std::size_t k = 0; k <= left; ++k) {
            parts[static_cast<std::size_t>(idx)] = k;
            rec(idx + 1, left - k);
        }
    };
    rec(0, m);
}

/// Log of the multinomial coefficient m! / prod N_a!.
inline double log_multinomial(std::span<const std::size_t> parts) {
    std::size_t m = 0;
    double s = 0.0;
    for (auto k : parts) {
        m += k;
        s -= std::lgamma(static_cast<double>(k) + 1.0);
    }
    return s + std::lgamma(static_cast<double>(m) + 1.0);
}

}

#endif
