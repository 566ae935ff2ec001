#ifndef KACPOTTS_FUZZY_HPP
#define KACPOTTS_FUZZY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "convolution.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "meanfield.hpp"
#include "parallel.hpp"
#include "potts.hpp"
#include "profiles.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "torus.hpp"

namespace kacpotts {

/// Consecutive blocks of colors: class k holds colors first(k) .. first(k)+r_k-1.
class FuzzyPartition {
public:
    FuzzyPartition() = default;

    explicit FuzzyPartition(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        q_ = 0;
        for (int r : sizes_) {
            require(r >= 1, "FuzzyPartition: class sizes must be positive");
            first_.push_back(q_);
            q_ += r;
        }
        const int s = static_cast<int>(sizes_.size());
        require(s > 1 && s < q_, "FuzzyPartition: need 1 < s < q");
        class_of_.resize(static_cast<std::size_t>(q_));
        for (int k = 0; k < s; ++k) {
            for (int j = 0; j < sizes_[static_cast<std::size_t>(k)]; ++j) {
                class_of_[static_cast<std::size_t>(first_[static_cast<std::size_t>(k)] + j)] = k;
            }
        }
    }

    int q() const { return q_; }
    int s() const { return static_cast<int>(sizes_.size()); }
    int size(int k) const { return sizes_[static_cast<std::size_t>(k)]; }
    std::span<const int> sizes() const { return sizes_; }
    int first(int k) const { return first_[static_cast<std::size_t>(k)]; }
    int class_of(Color a) const { return class_of_[static_cast<std::size_t>(a)]; }

    std::string describe() const {
        std::string out = "(";
        for (std::size_t k = 0; k < sizes_.size(); ++k) {
            out += (k ? "," : "") + std::to_string(sizes_[k]);
        }
        return out + ")";
    }

    bool operator==(const FuzzyPartition&) const = default;

private:
    std::vector<int> sizes_;
    std::vector<int> first_;
    std::vector<int> class_of_;
    int q_ = 0;
};

inline ColorConfiguration fuzzy_map(const ColorConfiguration& cfg, const FuzzyPartition& p) {
    require(cfg.num_colors() == p.q(), "fuzzy_map: configuration colors must match the partition");
    std::vector<Color> out(cfg.size());
    auto c = cfg.colors();
    for (std::size_t i = 0; i < c.size(); ++i) {
        out[i] = p.class_of(c[i]);
    }
    return ColorConfiguration(cfg.domain(), std::move(out), p.s());
}

/// Single-site question: class probabilities at `site` given the fuzzy
/// boundary on the torus with that site removed.
struct KernelQuery {
    std::size_t site = 0;
    ColorConfiguration boundary;

    void validate(const FuzzyPartition& p) const {
        const auto& dom = boundary.domain();
        require(boundary.num_colors() == p.s(), "KernelQuery: boundary must carry fuzzy classes");
        require(dom.size() + 1 == dom.grid().size() && !dom.contains(site),
                "KernelQuery: boundary must cover the torus minus the queried site");
    }
};

struct LevelSets {
    std::vector<Subvolume> sets;
    std::vector<double> betas;
};

/// Lambda_l = sites with boundary class l; beta_l = beta |Lambda_l| / n^d.
inline LevelSets level_sets(const ColorConfiguration& boundary, double beta) {
    const TorusGrid& grid = boundary.grid();
    std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(boundary.num_colors()));
    auto sites = boundary.domain().sites();
    auto c = boundary.colors();
    for (std::size_t i = 0; i < sites.size(); ++i) {
        by[static_cast<std::size_t>(c[i])].push_back(sites[i]);
    }
    LevelSets out;
    for (auto& v : by) {
        double b = beta * static_cast<double>(v.size()) / static_cast<double>(grid.size());
        out.sets.emplace_back(grid, std::move(v));
        out.betas.push_back(b);
    }
    return out;
}

/// Exact conditional class probabilities by summing exp(-beta H_n) over every
/// pre-image of the fuzzy configuration. Each state is evaluated with the
/// plain double-sum Hamiltonian, so this stays independent of the factorized path.
inline std::vector<double> kernel_direct(const ModelParams& params, const FuzzyPartition& partition,
                                         const KernelQuery& query, std::size_t cap = default_enumeration_cap) {
    params.validate();
    require(params.q == partition.q(), "kernel_direct: q must match the partition");
    query.validate(partition);
    const TorusGrid& grid = query.boundary.grid();
    const std::size_t sites = grid.size();
    auto stencil = discretize_kernel(params.kernel, grid, params.renormalize_stencil);

    std::vector<int> boundary_class(sites, -1);
    {
        auto dom = query.boundary.domain().sites();
        auto c = query.boundary.colors();
        for (std::size_t i = 0; i < dom.size(); ++i) {
            boundary_class[dom[i]] = c[i];
        }
    }
    double total_states = 0.0;
    for (int k = 0; k < partition.s(); ++k) {
        double s = partition.size(k);
        for (std::size_t x = 0; x < sites; ++x) {
            if (x != query.site) {
                s *= partition.size(boundary_class[x]);
            }
        }
        total_states += s;
    }
    if (total_states > static_cast<double>(cap)) {
        throw CapExceeded("kernel_direct: pre-image count exceeds the state cap");
    }

    std::vector<double> log_mass(static_cast<std::size_t>(partition.s()));
    auto full = Subvolume::full(grid);
    std::vector<int> cls(sites);
    std::vector<Color> colors(sites);
    std::vector<double> terms;
    for (int k = 0; k < partition.s(); ++k) {
        for (std::size_t x = 0; x < sites; ++x) {
            cls[x] = x == query.site ? k : boundary_class[x];
            colors[x] = partition.first(cls[x]);
        }
        terms.clear();
        for (;;) {
            ColorConfiguration xi(full, colors, partition.q());
            terms.push_back(-params.beta * hamiltonian(xi, stencil));
            std::size_t x = 0;
            for (; x < sites; ++x) {
                int k2 = cls[x];
                if (colors[x] + 1 < partition.first(k2) + partition.size(k2)) {
                    ++colors[x];
                    break;
                }
                colors[x] = partition.first(k2);
            }
            if (x == sites) {
                break;
            }
        }
        log_mass[static_cast<std::size_t>(k)] = log_sum_exp(terms);
    }
    double lz = log_sum_exp(log_mass);
    std::vector<double> out(log_mass.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = std::exp(log_mass[k] - lz);
    }
    return out;
}

enum class EstimationKind { exact, mcmc };

struct EstimationMode {
    EstimationKind kind = EstimationKind::exact;
    std::size_t sweeps = 20000;
    std::size_t burn_in = 1000;
    std::size_t chains = 8;
    std::uint64_t seed = 0;
    SamplerKind sampler = SamplerKind::heat_bath;
    unsigned threads = 1;
    std::size_t cap = default_enumeration_cap;

    static EstimationMode exact() { return EstimationMode{}; }
    static EstimationMode mcmc(std::size_t sweeps, std::size_t chains, std::uint64_t seed) {
        EstimationMode m;
        m.kind = EstimationKind::mcmc;
        m.sweeps = sweeps;
        m.chains = chains;
        m.seed = seed;
        m.burn_in = std::max<std::size_t>(100, sweeps / 10);
        return m;
    }
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Jackknife mean and standard error over equally weighted chain means.
inline Estimate jackknife_mean(std::span<const double> means) {
    const double c = static_cast<double>(means.size());
    require(means.size() >= 2, "jackknife_mean: need at least two chains");
    double total = std::accumulate(means.begin(), means.end(), 0.0);
    double mean = total / c;
    double ss = 0.0;
    for (double m : means) {
        double loo = (total - m) / (c - 1.0);
        ss += (loo - mean) * (loo - mean);
    }
    return Estimate{mean, std::sqrt((c - 1.0) / c * ss)};
}

/// A = E exp((2 beta_eff/|Lambda|) sum_{y in Lambda, sigma(y)=1} J(o - y)) under
/// mu_{Lambda, beta_eff, r}. With beta_eff = beta |Lambda|/n^d the exponent is
/// 2 beta n^-d sum J, the form in which the class factors enter the kernel.
inline Estimate estimate_A(std::size_t site, double beta_eff, int r, const Subvolume& volume,
                           const ScalarField& stencil, const EstimationMode& mode = {}) {
    require(r >= 1, "estimate_A: r must be positive");
    require(beta_eff >= 0.0 && std::isfinite(beta_eff), "estimate_A: beta must be finite and nonnegative");
    require(!volume.contains(site), "estimate_A: the queried site must lie outside the subvolume");
    if (volume.empty() || beta_eff == 0.0) {
        return Estimate{1.0, 0.0};
    }
    const std::size_t m = volume.size();
    const double scale = 2.0 * beta_eff / static_cast<double>(m);
    const TorusGrid& grid = volume.grid();
    std::vector<double> jo(m);
    for (std::size_t i = 0; i < m; ++i) {
        jo[i] = stencil[grid.difference(site, volume.sites()[i])];
    }
    if (r == 1) {
        return Estimate{std::exp(scale * std::accumulate(jo.begin(), jo.end(), 0.0)), 0.0};
    }

    if (mode.kind == EstimationKind::exact) {
        if (is_constant(stencil)) {
            // Mean-field couplings: only the color counts matter.
            const double j0 = stencil[0];
            const double inv = beta_eff / static_cast<double>(m);
            std::vector<double> lw;
            std::vector<double> obs;
            for_each_composition(m, r, [&](std::span<const std::size_t> n) {
                double sq = 0.0;
                for (auto k : n) {
                    sq += static_cast<double>(k) * static_cast<double>(k);
                }
                lw.push_back(log_multinomial(n) + inv * j0 * sq);
                obs.push_back(scale * j0 * static_cast<double>(n[0]));
            });
            double lz = log_sum_exp(lw);
            for (std::size_t i = 0; i < lw.size(); ++i) {
                lw[i] += obs[i];
            }
            return Estimate{std::exp(log_sum_exp(lw) - lz), 0.0};
        }
        auto lw = exact_log_weights(beta_eff, volume, r, stencil, mode.cap);
        double lz = log_sum_exp(lw);
        ExactDistribution idx{volume, r, {}};
        for (std::size_t s = 0; s < lw.size(); ++s) {
            std::size_t code = s;
            double e = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                if (code % static_cast<std::size_t>(r) == 0) {
                    e += jo[i];
                }
                code /= static_cast<std::size_t>(r);
            }
            lw[s] += scale * e;
        }
        return Estimate{std::exp(log_sum_exp(lw) - lz), 0.0};
    }

    require(mode.chains >= 2, "estimate_A: MCMC needs at least two chains");
    auto chain_means = parallel_map(mode.chains, mode.threads, [&](std::size_t c) {
        SamplingPlan plan;
        plan.sweeps = mode.sweeps;
        plan.burn_in = mode.burn_in;
        plan.seed = mode.seed;
        plan.chain = c;
        plan.kind = mode.sampler;
        auto state = ChainState::random_start(volume, r, beta_eff, stencil, plan.key());
        double acc = 0.0;
        std::size_t count = 0;
        std::vector<double> per(static_cast<std::size_t>(r));
        run_chain(state, plan, [&](const ChainState& s) {
            std::fill(per.begin(), per.end(), 0.0);
            auto col = s.configuration().colors();
            for (std::size_t i = 0; i < m; ++i) {
                per[static_cast<std::size_t>(col[i])] += jo[i];
            }
            // Color symmetry of mu lets every color stand in for color 1.
            double v = 0.0;
            for (double p : per) {
                v += std::exp(scale * p);
            }
            acc += v / r;
            ++count;
        });
        return acc / static_cast<double>(count);
    });
    return jackknife_mean(chain_means);
}

struct KernelEstimate {
    std::vector<double> probabilities;
    std::vector<double> stderrs;
    std::vector<Estimate> factors;
    LevelSets levels;
};

/// gamma(k) = r_k A_k / sum_l r_l A_l with A_l = A(beta_l, r_l, Lambda_l);
/// MCMC errors propagate by the delta method.
inline KernelEstimate kernel_factorized(const ModelParams& params, const FuzzyPartition& partition,
                                        const KernelQuery& query, const EstimationMode& mode = {}) {
    params.validate();
    require(params.q == partition.q(), "kernel_factorized: q must match the partition");
    query.validate(partition);
    const TorusGrid& grid = query.boundary.grid();
    auto stencil = discretize_kernel(params.kernel, grid, params.renormalize_stencil);
    KernelEstimate out;
    out.levels = level_sets(query.boundary, params.beta);
    const auto s = static_cast<std::size_t>(partition.s());
    EstimationMode inner = mode;
    inner.threads = 1;
    out.factors = parallel_map(s, mode.threads, [&](std::size_t l) {
        EstimationMode m = inner;
        m.seed = hash_key({mode.seed, 0x6b65726eULL, l});
        return estimate_A(query.site, out.levels.betas[l], partition.size(static_cast<int>(l)), out.levels.sets[l],
                          stencil, m);
    });
    double w = 0.0;
    for (std::size_t l = 0; l < s; ++l) {
        w += partition.size(static_cast<int>(l)) * out.factors[l].value;
    }
    out.probabilities.resize(s);
    out.stderrs.assign(s, 0.0);
    for (std::size_t k = 0; k < s; ++k) {
        double wk = partition.size(static_cast<int>(k)) * out.factors[k].value;
        out.probabilities[k] = wk / w;
        double var = 0.0;
        for (std::size_t l = 0; l < s; ++l) {
            double rl = partition.size(static_cast<int>(l));
            double d = rl * ((k == l ? 1.0 / w : 0.0) - wk / (w * w));
            var += d * d * out.factors[l].std_error * out.factors[l].std_error;
        }
        out.stderrs[k] = std::sqrt(var);
    }
    return out;
}

enum class Gibbsianness { gibbs, non_gibbs, outside_theorem };

inline std::string to_string(Gibbsianness g) {
    switch (g) {
    case Gibbsianness::gibbs:
        return "Gibbs";
    case Gibbsianness::non_gibbs:
        return "non-Gibbs";
    case Gibbsianness::outside_theorem:
        return "outside-theorem";
    }
    return "?";
}

/// Smallest class size >= 3, or 0 when there is none.
inline int smallest_large_class(const FuzzyPartition& p) {
    int best = 0;
    for (int r : p.sizes()) {
        if (r >= 3 && (best == 0 || r < best)) {
            best = r;
        }
    }
    return best;
}

inline Gibbsianness gng_classify(const FuzzyPartition& p, MeanFieldBeta beta) {
    const int rstar = smallest_large_class(p);
    const bool has_two = std::find(p.sizes().begin(), p.sizes().end(), 2) != p.sizes().end();
    if (beta.value <= beta_critical(2)) {
        return Gibbsianness::gibbs;
    }
    if (rstar != 0 && beta.value >= beta_critical(rstar)) {
        return Gibbsianness::non_gibbs;
    }
    if (!has_two) {
        return Gibbsianness::gibbs;
    }
    return Gibbsianness::outside_theorem;
}

struct LimitingKernel {
    std::vector<double> probabilities;
    bool guaranteed = false;
};

/// r_k exp(2 beta r_k^-1 (J*rho_k)(u)) normalized over classes, beta the Kac beta,
/// for a class-density profile on a mesh and a mesh cell u.
inline LimitingKernel limiting_kernel(const ModelParams& params, const FuzzyPartition& partition, std::size_t cell,
                                      const DensityProfile& rho) {
    require(rho.q() == partition.s(), "limiting_kernel: profile must have one component per class");
    require(cell < rho.cells(), "limiting_kernel: cell out of range");
    auto stencil = discretize_kernel(params.kernel, rho.mesh(), true);
    std::vector<double> logs(static_cast<std::size_t>(partition.s()));
    for (int k = 0; k < partition.s(); ++k) {
        double jr = convolve(stencil, rho.component(k))[cell];
        logs[static_cast<std::size_t>(k)] = std::log(static_cast<double>(partition.size(k))) +
                                            2.0 * params.beta * jr / partition.size(k);
    }
    double lz = log_sum_exp(logs);
    LimitingKernel out;
    for (double l : logs) {
        out.probabilities.push_back(std::exp(l - lz));
    }
    out.guaranteed = gng_classify(partition, from_kac_beta(params.beta)) == Gibbsianness::gibbs;
    return out;
}

struct BadProfilePair {
    int critical_class = 0;
    std::vector<double> alpha;
    std::vector<double> minus;
    std::vector<double> plus;
    /// Other classes whose dilution also sits exactly at their critical value.
    std::vector<int> also_critical;
};

/// alpha[i] = beta_c(r_i)/beta for the lowest-index class i with r_i >= 3 and
/// beta_c(r_i) < beta; the other classes share the rest equally. The pair is
/// alpha[i] +- 1/m, alpha[l] -+ 1/((s-1) m).
inline BadProfilePair bad_profile_pair(const FuzzyPartition& p, MeanFieldBeta beta, int m) {
    require(m >= 1, "bad_profile_pair: m must be positive");
    int i = -1;
    for (int k = 0; k < p.s(); ++k) {
        if (p.size(k) >= 3 && beta_critical(p.size(k)) <= beta.value) {
            i = k;
            break;
        }
    }
    if (i < 0) {
        throw Infeasible("bad_profile_pair: no bad point for these parameters (Gibbs branch)");
    }
    BadProfilePair out;
    out.critical_class = i;
    const auto s = static_cast<std::size_t>(p.s());
    const double ai = beta_critical(p.size(i)) / beta.value;
    const double rest = (1.0 - ai) / static_cast<double>(s - 1);
    out.alpha.assign(s, rest);
    out.alpha[static_cast<std::size_t>(i)] = ai;
    out.minus = out.alpha;
    out.plus = out.alpha;
    const double di = 1.0 / m;
    const double dl = 1.0 / (static_cast<double>(s - 1) * m);
    for (std::size_t k = 0; k < s; ++k) {
        if (static_cast<int>(k) == i) {
            out.minus[k] -= di;
            out.plus[k] += di;
        } else {
            out.minus[k] += dl;
            out.plus[k] -= dl;
            int r = p.size(static_cast<int>(k));
            if (r >= 3 && std::abs(beta.value * out.alpha[k] - beta_critical(r)) < 1e-12) {
                out.also_critical.push_back(static_cast<int>(k));
            }
        }
    }
    for (std::size_t k = 0; k < s; ++k) {
        if (!(out.minus[k] > 0.0 && out.minus[k] < 1.0 && out.plus[k] > 0.0 && out.plus[k] < 1.0)) {
            throw Infeasible("bad_profile_pair: perturbed profiles leave the open simplex (increase m)");
        }
    }
    return out;
}

/// Flat fuzzy boundary on the torus minus `site`, realized periodically.
inline ColorConfiguration flat_fuzzy_boundary(std::span<const double> alpha, const TorusGrid& grid, std::size_t site) {
    auto mesh = TorusGrid(grid.dim(), 1);
    auto real = realize_profile(DensityProfile::flat(mesh, alpha), grid);
    auto dom = Subvolume::perforated(grid, site);
    std::vector<Color> c;
    c.reserve(dom.size());
    for (std::size_t x : dom.sites()) {
        c.push_back(real.configuration.colors()[x]);
    }
    return ColorConfiguration(dom, std::move(c), static_cast<int>(alpha.size()));
}

struct KernelGap {
    int critical_class = 0;
    std::vector<double> gamma_minus;
    std::vector<double> gamma_plus;
    double gap = 0.0;
};

namespace detail {

inline KernelGap one_sided_limits(const FuzzyPartition& p, MeanFieldBeta beta, const BadProfilePair& bad,
                                  double exponent_factor) {
    const auto s = static_cast<std::size_t>(p.s());
    const auto i = static_cast<std::size_t>(bad.critical_class);
    auto factor = [&](std::size_t k, PhaseSide side) {
        int r = p.size(static_cast<int>(k));
        MeanFieldBeta b(beta.value * bad.alpha[k]);
        return class_factor_limit(exponent_factor * beta.value * bad.alpha[k], b, r, side);
    };
    // Only classes sitting exactly at beta_c(r_k) have two branches; a base
    // profile below the threshold gives equal one-sided limits.
    auto is_critical = [&](std::size_t k) {
        int r = p.size(static_cast<int>(k));
        return r >= 3 && std::abs(beta.value * bad.alpha[k] - beta_critical(r)) <= 1e-12 * beta_critical(r);
    };
    KernelGap out;
    out.critical_class = bad.critical_class;
    for (int sign : {-1, 1}) {
        std::vector<double> w(s);
        double total = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
            PhaseSide side = PhaseSide::automatic;
            if (is_critical(k)) {
                // class i moves by +-1/m, the others by -+1/((s-1)m)
                bool up = (k == i) ? sign > 0 : sign < 0;
                side = up ? PhaseSide::ordered : PhaseSide::disordered;
            }
            w[k] = p.size(static_cast<int>(k)) * factor(k, side);
            total += w[k];
        }
        for (auto& v : w) {
            v /= total;
        }
        (sign < 0 ? out.gamma_minus : out.gamma_plus) = std::move(w);
    }
    out.gap = out.gamma_plus[i] - out.gamma_minus[i];
    return out;
}

}

/// One-sided limits of the class-i kernel along nu_m^-+ in the closed form
/// phi^-(r_i), phi^+(r_i) and phi(k) = (1/r_k) sum_a exp(2 beta alpha[k] v_a)
/// with v the minimizer at mean-field temperature beta alpha[k]. Normalized
/// over all classes, class i included.
inline KernelGap kernel_gap(const FuzzyPartition& p, MeanFieldBeta beta, const BadProfilePair& bad) {
    require(p.size(bad.critical_class) >= 3, "kernel_gap: the critical class must have r_i >= 3");
    auto out = detail::one_sided_limits(p, beta, bad, 2.0);
    if (!(out.gap > 0.0)) {
        throw std::logic_error("kernel_gap: expected a positive gap for r_i >= 3");
    }
    return out;
}

/// One-sided limits at an arbitrary flat base profile (pair.alpha) with the
/// closed-form exponent (closed_form) or the finite-n one. Classes below their
/// critical dilution have equal one-sided limits.
inline KernelGap one_sided_limits(const FuzzyPartition& p, MeanFieldBeta beta, const BadProfilePair& pair,
                                  bool closed_form) {
    return detail::one_sided_limits(p, beta, pair, closed_form ? 2.0 : 1.0);
}

/// The same one-sided limits with the class factor exponent the finite-n
/// kernel actually carries, 2 beta_kac alpha[k] v_a = beta alpha[k] v_a.
inline KernelGap kac_one_sided_limits(const FuzzyPartition& p, MeanFieldBeta beta, const BadProfilePair& bad) {
    require(p.size(bad.critical_class) >= 3, "kac_one_sided_limits: the critical class must have r_i >= 3");
    return detail::one_sided_limits(p, beta, bad, 1.0);
}

}

#endif
