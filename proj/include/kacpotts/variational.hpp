#ifndef KACPOTTS_VARIATIONAL_HPP
#define KACPOTTS_VARIATIONAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "convolution.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "meanfield.hpp"
#include "parallel.hpp"
#include "profiles.hpp"
#include "rng.hpp"
#include "torus.hpp"

namespace kacpotts {

/// Everything that defines I_rho~: Kac beta, kernel, dilution and number of colors.
class RateFunctionalContext {
public:
    RateFunctionalContext(double beta, const KacKernel& kernel, DilutionField dilution, int r)
        : beta_(beta), kernel_(kernel), dilution_(std::move(dilution)), r_(r) {
        require(beta >= 0.0 && std::isfinite(beta), "RateFunctionalContext: beta must be finite and nonnegative");
        require(r >= 2, "RateFunctionalContext: r must be at least 2");
        require(dilution_.mass() > 0.0, "RateFunctionalContext: dilution mass must be positive");
        stencil_ = discretize_kernel(kernel_, mesh(), true);
        rho_tilde_ = dilution_.normalized();
        j_rho_tilde_ = convolve(stencil_, rho_tilde_);
    }

    double beta() const { return beta_; }
    const KacKernel& kernel() const { return kernel_; }
    const DilutionField& dilution() const { return dilution_; }
    const TorusGrid& mesh() const { return dilution_.mesh(); }
    int r() const { return r_; }
    const ScalarField& stencil() const { return stencil_; }
    const ScalarField& rho_tilde() const { return rho_tilde_; }
    /// J * rho~ on the mesh.
    const ScalarField& j_rho_tilde() const { return j_rho_tilde_; }

    void check(const DensityProfile& p) const {
        if (!(p.mesh() == mesh())) {
            throw GridMismatch("rate functional: profile mesh differs from context mesh");
        }
        require(p.q() == r_, "rate functional: profile has the wrong number of colors");
    }

private:
    double beta_;
    KacKernel kernel_;
    DilutionField dilution_;
    int r_;
    ScalarField stencil_;
    ScalarField rho_tilde_;
    ScalarField j_rho_tilde_;
};

/// sum_a alpha_a log(r alpha_a) with 0 log 0 = 0.
inline double relative_entropy_eq(std::span<const double> alpha) {
    const double r = static_cast<double>(alpha.size());
    double s = 0.0;
    for (double a : alpha) {
        if (a > 0.0) {
            s += a * std::log(r * a);
        }
    }
    return s;
}

namespace detail {

inline std::vector<ScalarField> weighted_components(const RateFunctionalContext& ctx, const DensityProfile& p) {
    std::vector<ScalarField> out;
    out.reserve(static_cast<std::size_t>(ctx.r()));
    for (int a = 0; a < ctx.r(); ++a) {
        ScalarField f(ctx.mesh());
        for (std::size_t c = 0; c < f.size(); ++c) {
            f[c] = ctx.rho_tilde()[c] * p.at(c, a);
        }
        out.push_back(std::move(f));
    }
    return out;
}

}

/// -beta sum_a <J*(rho~ alpha_a), rho~ alpha_a> + <S(alpha|eq), rho~>.
inline double rate_eval_direct(const RateFunctionalContext& ctx, const DensityProfile& p) {
    ctx.check(p);
    auto w = detail::weighted_components(ctx, p);
    double quad = 0.0;
    for (const auto& f : w) {
        quad += inner(convolve(ctx.stencil(), f), f);
    }
    double ent = 0.0;
    for (std::size_t c = 0; c < p.cells(); ++c) {
        ent += ctx.rho_tilde()[c] * relative_entropy_eq(p.cell(c));
    }
    ent /= static_cast<double>(p.cells());
    return -ctx.beta() * quad + ent;
}

struct RateDecomposition {
    double inhomogeneity = 0.0;
    double local = 0.0;
    double total = 0.0;
};

/// (beta/2) sum_a int int rho~ rho~ [alpha_a(u) - alpha_a(v)]^2 J(u-v)
/// plus int rho~ (-b sum_a alpha_a^2 + S(alpha|eq)) with b = beta J * rho~.
inline RateDecomposition rate_eval_decomposed(const RateFunctionalContext& ctx, const DensityProfile& p) {
    ctx.check(p);
    const TorusGrid& mesh = ctx.mesh();
    const std::size_t cells = mesh.size();
    const auto& rt = ctx.rho_tilde();
    double inhom = 0.0;
    for (std::size_t u = 0; u < cells; ++u) {
        if (rt[u] == 0.0) {
            continue;
        }
        for (std::size_t v = 0; v < cells; ++v) {
            double sq = 0.0;
            for (int a = 0; a < ctx.r(); ++a) {
                double d = p.at(u, a) - p.at(v, a);
                sq += d * d;
            }
            inhom += rt[u] * rt[v] * sq * ctx.stencil()[mesh.difference(u, v)];
        }
    }
    const double cn = static_cast<double>(cells);
    inhom *= 0.5 * ctx.beta() / (cn * cn);
    double local = 0.0;
    for (std::size_t u = 0; u < cells; ++u) {
        double b = ctx.beta() * ctx.j_rho_tilde()[u];
        double sq = 0.0;
        for (double a : p.cell(u)) {
            sq += a * a;
        }
        local += rt[u] * (-b * sq + relative_entropy_eq(p.cell(u)));
    }
    local /= cn;
    return RateDecomposition{inhom, local, inhom + local};
}

enum class DilutionNorm { raw, normalized };

/// b(u) = beta int rho(v) J(u-v) dv with rho raw or normalized.
inline ScalarField local_temperature(const RateFunctionalContext& ctx, DilutionNorm norm = DilutionNorm::raw) {
    ScalarField b = norm == DilutionNorm::raw ? convolve(ctx.stencil(), ctx.dilution().raw()) : ctx.j_rho_tilde();
    for (double& v : b.values()) {
        v *= ctx.beta();
    }
    return b;
}

constexpr double entropy_floor = 1e-12;

/// Per-cell bracket -2 beta (J*(rho~ alpha_a))(u) + log(r alpha_a(u)) + 1; the
/// Euclidean gradient is this times rho~(u)/cells.
inline std::vector<double> rate_gradient_bracket(const RateFunctionalContext& ctx, const DensityProfile& p) {
    ctx.check(p);
    auto w = detail::weighted_components(ctx, p);
    const auto r = static_cast<std::size_t>(ctx.r());
    std::vector<double> g(p.cells() * r);
    for (std::size_t a = 0; a < r; ++a) {
        auto conv = convolve(ctx.stencil(), w[a]);
        for (std::size_t c = 0; c < p.cells(); ++c) {
            double v = std::max(p.at(c, static_cast<int>(a)), entropy_floor);
            g[c * r + a] = -2.0 * ctx.beta() * conv[c] + std::log(static_cast<double>(r) * v) + 1.0;
        }
    }
    return g;
}

/// dI/d alpha_a(u) for the quadrature objective, laid out like DensityProfile::values().
inline std::vector<double> rate_gradient(const RateFunctionalContext& ctx, const DensityProfile& p) {
    auto g = rate_gradient_bracket(ctx, p);
    const auto r = static_cast<std::size_t>(ctx.r());
    const double cn = static_cast<double>(p.cells());
    for (std::size_t c = 0; c < p.cells(); ++c) {
        for (std::size_t a = 0; a < r; ++a) {
            g[c * r + a] *= ctx.rho_tilde()[c] / cn;
        }
    }
    return g;
}

/// Largest per-cell alpha-weighted deviation of the gradient bracket from its
/// alpha-mean, over cells with rho~ > 0. Zero exactly at the KKT points
/// reachable by entropic mirror descent.
inline double stationarity_gap(const RateFunctionalContext& ctx, const DensityProfile& p,
                               std::span<const double> bracket) {
    const auto r = static_cast<std::size_t>(ctx.r());
    double worst = 0.0;
    for (std::size_t c = 0; c < p.cells(); ++c) {
        if (ctx.rho_tilde()[c] == 0.0) {
            continue;
        }
        double mean = 0.0;
        for (std::size_t a = 0; a < r; ++a) {
            mean += p.at(c, static_cast<int>(a)) * bracket[c * r + a];
        }
        double var = 0.0;
        for (std::size_t a = 0; a < r; ++a) {
            double d = bracket[c * r + a] - mean;
            var += p.at(c, static_cast<int>(a)) * d * d;
        }
        worst = std::max(worst, std::sqrt(var));
    }
    return worst;
}

struct MinimizeOptions {
    std::size_t max_iterations = 20000;
    double tolerance = 1e-9;
    double initial_step = 1.0;
    double armijo = 1e-4;
    std::size_t starts = 16;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct TraceRow {
    std::size_t iteration = 0;
    double objective = 0.0;
    double gradient_norm = 0.0;
};

struct MinimizeResult {
    DensityProfile minimizer;
    double value = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::string status;
    std::vector<TraceRow> trace;
};

/// Max over cells and colors of |alpha_a(u) - mean_u alpha_a|.
inline double flatness_deviation(const DensityProfile& p) {
    double worst = 0.0;
    for (int a = 0; a < p.q(); ++a) {
        double mean = p.component(a).mean();
        for (std::size_t c = 0; c < p.cells(); ++c) {
            worst = std::max(worst, std::abs(p.at(c, a) - mean));
        }
    }
    return worst;
}

/// Entropic mirror descent with Armijo backtracking on the per-cell simplices.
inline MinimizeResult minimize_rate(const RateFunctionalContext& ctx, DensityProfile init,
                                    const MinimizeOptions& opt = {}) {
    ctx.check(init);
    const auto r = static_cast<std::size_t>(ctx.r());
    const std::size_t cells = init.cells();
    const double cn = static_cast<double>(cells);
    std::vector<double> x(init.values().begin(), init.values().end());
    for (std::size_t c = 0; c < cells; ++c) {
        double s = 0.0;
        for (std::size_t a = 0; a < r; ++a) {
            x[c * r + a] = std::max(x[c * r + a], entropy_floor);
            s += x[c * r + a];
        }
        for (std::size_t a = 0; a < r; ++a) {
            x[c * r + a] /= s;
        }
    }
    auto make = [&](const std::vector<double>& v) { return DensityProfile(ctx.mesh(), ctx.r(), v); };

    MinimizeResult res;
    DensityProfile cur = make(x);
    double f = rate_eval_direct(ctx, cur);
    double step = opt.initial_step;
    std::vector<double> trial(x.size());
    for (std::size_t it = 0;; ++it) {
        auto g = rate_gradient_bracket(ctx, cur);
        double gap = stationarity_gap(ctx, cur, g);
        res.trace.push_back(TraceRow{it, f, gap});
        res.iterations = it;
        if (gap < opt.tolerance) {
            res.converged = true;
            res.status = "converged";
            break;
        }
        if (it >= opt.max_iterations) {
            res.status = "iteration cap reached";
            break;
        }
        bool accepted = false;
        while (step > 1e-16) {
            double directional = 0.0;
            for (std::size_t c = 0; c < cells; ++c) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t a = 0; a < r; ++a) {
                    mx = std::max(mx, -step * g[c * r + a]);
                }
                double s = 0.0;
                for (std::size_t a = 0; a < r; ++a) {
                    trial[c * r + a] = x[c * r + a] * std::exp(-step * g[c * r + a] - mx);
                    s += trial[c * r + a];
                }
                for (std::size_t a = 0; a < r; ++a) {
                    trial[c * r + a] = std::max(trial[c * r + a] / s, 1e-300);
                    directional += ctx.rho_tilde()[c] / cn * g[c * r + a] * (trial[c * r + a] - x[c * r + a]);
                }
            }
            DensityProfile cand = make(trial);
            double ft = rate_eval_direct(ctx, cand);
            // Once the predicted decrease is below the round-off of f the
            // Armijo test is noise; accept on a smaller stationarity gap instead.
            const double noise = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
            bool ok = -directional < noise ? stationarity_gap(ctx, cand, rate_gradient_bracket(ctx, cand)) < gap
                                           : ft <= f + opt.armijo * directional && ft <= f + 1e-12;
            if (ok) {
                x = trial;
                cur = std::move(cand);
                f = ft;
                accepted = true;
                step = std::min(step * 2.0, 1e6);
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            res.status = "line search stalled";
            break;
        }
    }
    res.minimizer = cur;
    res.value = f;
    res.gradient_norm = res.trace.back().gradient_norm;
    return res;
}

/// Start profiles: flat equidistribution, the r clipped pure-color corners,
/// then per-cell Dirichlet(1) draws keyed by (seed, start index).
inline std::vector<DensityProfile> multistart_inits(const TorusGrid& mesh, int r, std::size_t count, std::uint64_t seed) {
    std::vector<DensityProfile> out;
    const auto rr = static_cast<std::size_t>(r);
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> v(mesh.size() * rr);
        if (k == 0) {
            std::fill(v.begin(), v.end(), 1.0 / r);
        } else if (k <= rr) {
            std::vector<double> corner(rr, entropy_floor);
            corner[k - 1] = 1.0 - (r - 1) * entropy_floor;
            for (std::size_t c = 0; c < mesh.size(); ++c) {
                std::copy(corner.begin(), corner.end(), v.begin() + static_cast<std::ptrdiff_t>(c * rr));
            }
        } else {
            CounterRng rng(hash_key({seed, 0x6d756c7469ULL, k}));
            std::gamma_distribution<double> gamma(1.0, 1.0);
            for (std::size_t c = 0; c < mesh.size(); ++c) {
                double s = 0.0;
                for (std::size_t a = 0; a < rr; ++a) {
                    v[c * rr + a] = std::max(gamma(rng), 1e-300);
                    s += v[c * rr + a];
                }
                for (std::size_t a = 0; a < rr; ++a) {
                    v[c * rr + a] /= s;
                }
            }
        }
        out.emplace_back(mesh, r, std::move(v));
    }
    return out;
}

struct MultistartResult {
    std::vector<MinimizeResult> runs;
    std::size_t best = 0;
    /// Indices of runs within 1e-8 of the best value.
    std::vector<std::size_t> ties;
};

inline MultistartResult minimize_rate_multistart(const RateFunctionalContext& ctx, const MinimizeOptions& opt = {}) {
    auto inits = multistart_inits(ctx.mesh(), ctx.r(), opt.starts, opt.seed);
    MultistartResult out;
    out.runs = parallel_map(inits.size(), opt.threads, [&](std::size_t k) { return minimize_rate(ctx, inits[k], opt); });
    for (std::size_t k = 1; k < out.runs.size(); ++k) {
        if (out.runs[k].value < out.runs[out.best].value) {
            out.best = k;
        }
    }
    for (std::size_t k = 0; k < out.runs.size(); ++k) {
        if (out.runs[k].value <= out.runs[out.best].value + 1e-8) {
            out.ties.push_back(k);
        }
    }
    return out;
}

/// Phi_u(m) = -b (1+m^2)/2 + ((1+m)/2) log(1+m) + ((1-m)/2) log(1-m).
inline double ising_local(double m, double b) {
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return -b * 0.5 * (1.0 + m * m) + 0.5 * xlogx(1.0 + m) + 0.5 * xlogx(1.0 - m);
}

inline DensityProfile ising_to_profile(const TorusGrid& mesh, std::span<const double> m) {
    require(m.size() == mesh.size(), "ising_to_profile: one magnetization per cell");
    std::vector<double> v(2 * m.size());
    for (std::size_t c = 0; c < m.size(); ++c) {
        require(m[c] >= -1.0 && m[c] <= 1.0, "ising_to_profile: magnetization outside [-1,1]");
        v[2 * c] = 0.5 * (1.0 + m[c]);
        v[2 * c + 1] = 0.5 * (1.0 - m[c]);
    }
    return DensityProfile(mesh, 2, std::move(v));
}

/// (beta/4) int int rho~ rho~ [m(u)-m(v)]^2 J(u-v) + int rho~ Phi_u(m(u)).
/// Throws if the value disagrees with rate_eval_direct under alpha = ((1+m)/2, (1-m)/2).
inline double ising_profile_functional(const RateFunctionalContext& ctx, std::span<const double> m) {
    if (ctx.r() != 2) {
        throw InvalidArgument("ising_profile_functional: requires r = 2");
    }
    const TorusGrid& mesh = ctx.mesh();
    require(m.size() == mesh.size(), "ising_profile_functional: one magnetization per cell");
    const std::size_t cells = mesh.size();
    const auto& rt = ctx.rho_tilde();
    double inhom = 0.0;
    for (std::size_t u = 0; u < cells; ++u) {
        for (std::size_t v = 0; v < cells; ++v) {
            double d = m[u] - m[v];
            inhom += rt[u] * rt[v] * d * d * ctx.stencil()[mesh.difference(u, v)];
        }
    }
    const double cn = static_cast<double>(cells);
    inhom *= 0.25 * ctx.beta() / (cn * cn);
    double local = 0.0;
    for (std::size_t u = 0; u < cells; ++u) {
        local += rt[u] * ising_local(m[u], ctx.beta() * ctx.j_rho_tilde()[u]);
    }
    double value = inhom + local / cn;
    double check = rate_eval_direct(ctx, ising_to_profile(mesh, m));
    if (std::abs(value - check) > 1e-10 * std::max(1.0, std::abs(check))) {
        throw std::logic_error("ising_profile_functional: disagrees with the rate functional");
    }
    return value;
}

struct IsingMinimum {
    std::vector<double> magnetization;
    double value = 0.0;
    bool flat = false;
    std::size_t hits = 0;
};

struct IsingExploration {
    std::vector<IsingMinimum> minima;
    double best_flat_value = 0.0;
    double best_flat_magnetization = 0.0;
    bool nonflat_beats_flat = false;
};

/// Best value of the functional over flat magnetizations m = const, by golden section on [0,1)
/// (the functional is even in m).
inline std::pair<double, double> best_flat_ising(const RateFunctionalContext& ctx) {
    std::vector<double> m(ctx.mesh().size());
    auto f = [&](double c) {
        std::fill(m.begin(), m.end(), c);
        return rate_eval_direct(ctx, ising_to_profile(ctx.mesh(), m));
    };
    double best_c = 0.0;
    double best = f(0.0);
    // coarse scan first, the flat problem can have a local max at 0
    const int grid = 200;
    for (int i = 1; i < grid; ++i) {
        double c = static_cast<double>(i) / grid;
        double v = f(c);
        if (v < best) {
            best = v;
            best_c = c;
        }
    }
    double lo = std::max(0.0, best_c - 1.0 / grid);
    double hi = std::min(1.0 - 1e-15, best_c + 1.0 / grid);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
        double a = hi - g * (hi - lo);
        double b = lo + g * (hi - lo);
        if (f(a) < f(b)) {
            hi = b;
        } else {
            lo = a;
        }
    }
    double c = 0.5 * (lo + hi);
    double v = f(c);
    if (v < best) {
        best = v;
        best_c = c;
    }
    return {best_c, best};
}

/// Multistart minimization of the Ising-class functional; minima closer than
/// `merge_distance` in the weak metric are merged. Asserts nothing about
/// whether inhomogeneous minima exist.
inline IsingExploration explore_ising_inhomogeneity(const RateFunctionalContext& ctx, const MinimizeOptions& opt = {},
                                                    double merge_distance = 1e-6, double flat_tolerance = 1e-6) {
    if (ctx.r() != 2) {
        throw InvalidArgument("explore_ising_inhomogeneity: requires r = 2");
    }
    auto ms = minimize_rate_multistart(ctx, opt);
    IsingExploration out;
    std::vector<AtomicMeasure> reps;
    for (const auto& run : ms.runs) {
        auto meas = to_measure(run.minimizer);
        std::size_t found = out.minima.size();
        for (std::size_t k = 0; k < reps.size(); ++k) {
            if (weak_distance(meas, reps[k]).value < merge_distance &&
                std::abs(run.value - out.minima[k].value) < 1e-8) {
                found = k;
                break;
            }
        }
        if (found < out.minima.size()) {
            ++out.minima[found].hits;
            continue;
        }
        IsingMinimum mn;
        mn.magnetization.resize(run.minimizer.cells());
        for (std::size_t c = 0; c < run.minimizer.cells(); ++c) {
            mn.magnetization[c] = run.minimizer.at(c, 0) - run.minimizer.at(c, 1);
        }
        mn.value = run.value;
        mn.flat = flatness_deviation(run.minimizer) < flat_tolerance;
        mn.hits = 1;
        out.minima.push_back(std::move(mn));
        reps.push_back(std::move(meas));
    }
    auto [c, v] = best_flat_ising(ctx);
    out.best_flat_magnetization = c;
    out.best_flat_value = v;
    for (const auto& mn : out.minima) {
        if (!mn.flat && mn.value < v - 1e-10) {
            out.nonflat_beats_flat = true;
        }
    }
    return out;
}

}

#endif
