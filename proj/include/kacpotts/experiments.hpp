#ifndef KACPOTTS_EXPERIMENTS_HPP
#define KACPOTTS_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "fuzzy.hpp"
#include "meanfield.hpp"
#include "output.hpp"
#include "parallel.hpp"
#include "potts.hpp"
#include "profile_io.hpp"
#include "profiles.hpp"
#include "sampler.hpp"
#include "variational.hpp"

namespace kacpotts {

namespace detail {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

inline ModelParams model_at(const ExperimentConfig& cfg, double beta_kac) {
    ModelParams p;
    p.q = cfg.q;
    p.beta = beta_kac;
    p.kernel = cfg.kernel.build();
    p.validate();
    return p;
}

inline FuzzyPartition partition_of(const ExperimentConfig& cfg) {
    if (cfg.partition.empty()) {
        throw SchemaError("config fuzzy.partition: required for " + cfg.experiment);
    }
    return FuzzyPartition(cfg.partition);
}

inline EstimationMode estimation_mode(const ExperimentConfig& cfg, std::uint64_t seed, unsigned threads) {
    EstimationMode m = cfg.mode == "mcmc" ? EstimationMode::mcmc(cfg.sweeps, cfg.chains, seed) : EstimationMode::exact();
    if (cfg.mode == "mcmc") {
        m.burn_in = cfg.burn_in;
    }
    m.sampler = cfg.sampler_kind();
    m.threads = threads;
    return m;
}

inline DilutionField dilution_of(const ExperimentConfig& cfg, const TorusGrid& mesh) {
    if (cfg.dilution.type == "constant") {
        return DilutionField::constant(mesh, cfg.dilution.level);
    }
    std::vector<double> rho(mesh.size());
    for (std::size_t c = 0; c < mesh.size(); ++c) {
        rho[c] = mesh.point(c)[0] < 0.5 ? cfg.dilution.level : cfg.dilution.low;
    }
    return DilutionField(mesh, std::move(rho));
}

inline std::string boundary_string(const ColorConfiguration& b) {
    std::string s;
    for (Color c : b.colors()) {
        s += static_cast<char>('0' + c);
    }
    return s;
}

inline double class_fraction(const ColorConfiguration& boundary, int k) {
    auto c = boundary.colors();
    auto cnt = static_cast<double>(std::count(c.begin(), c.end(), k));
    return cnt / static_cast<double>(boundary.grid().size());
}

inline std::uint64_t substream(const ExperimentConfig& cfg, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint64_t> words{cfg.seed, fnv1a64(cfg.experiment)};
    words.insert(words.end(), path.begin(), path.end());
    std::uint64_t h = 0;
    for (auto w : words) {
        h = hash_key({h, w});
    }
    return h;
}

/// First upward crossing of `level` by linear interpolation; NaN if none.
inline double upward_crossing(std::span<const double> x, std::span<const double> y, double level) {
    for (std::size_t i = 1; i < x.size(); ++i) {
        if (y[i - 1] < level && y[i] >= level) {
            return x[i - 1] + (level - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1]);
        }
    }
    return nan;
}

/// Jackknife over leave-one-out estimates.
inline double jackknife_error(std::span<const double> loo) {
    const double c = static_cast<double>(loo.size());
    double mean = 0.0;
    for (double v : loo) {
        mean += v / c;
    }
    double ss = 0.0;
    for (double v : loo) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt((c - 1.0) / c * ss);
}

/// Builds the +-1/m pair around an arbitrary base profile for class i.
inline BadProfilePair pair_around(const FuzzyPartition& p, MeanFieldBeta beta, int i, double ai, int m) {
    BadProfilePair out;
    out.critical_class = i;
    const auto s = static_cast<std::size_t>(p.s());
    out.alpha.assign(s, (1.0 - ai) / static_cast<double>(s - 1));
    out.alpha[static_cast<std::size_t>(i)] = ai;
    out.minus = out.alpha;
    out.plus = out.alpha;
    for (std::size_t k = 0; k < s; ++k) {
        if (static_cast<int>(k) == i) {
            out.minus[k] -= 1.0 / m;
            out.plus[k] += 1.0 / m;
        } else {
            out.minus[k] += 1.0 / (static_cast<double>(s - 1) * m);
            out.plus[k] -= 1.0 / (static_cast<double>(s - 1) * m);
            int r = p.size(static_cast<int>(k));
            if (r >= 3 && std::abs(beta.value * out.alpha[k] - beta_critical(r)) <= 1e-12 * beta_critical(r)) {
                out.also_critical.push_back(static_cast<int>(k));
            }
        }
    }
    for (std::size_t k = 0; k < s; ++k) {
        if (!(out.minus[k] > 0.0 && out.minus[k] < 1.0 && out.plus[k] > 0.0 && out.plus[k] < 1.0)) {
            throw Infeasible("threshold-scan: perturbed profiles leave the open simplex (increase m)");
        }
    }
    return out;
}

}

inline ExperimentResult run_prop23_identity(const ExperimentConfig& cfg, unsigned threads) {
    auto part = detail::partition_of(cfg);
    Table rows({"beta", "n", "boundary", "class", "direct", "factorized", "abs_diff", "stderr", "mode"});
    Table per({"beta", "n", "boundary", "max_abs_diff"});
    double worst = 0.0;
    std::size_t boundaries = 0;
    for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
        TorusGrid grid(cfg.d, cfg.n_ladder[ni]);
        require(cfg.site < grid.size(), "options.site lies outside the torus");
        auto dom = Subvolume::perforated(grid, cfg.site);
        std::size_t count = checked_state_count(part.s(), dom.size(), std::size_t{1} << 20);
        if (count == std::numeric_limits<std::size_t>::max()) {
            throw CapExceeded("prop23-identity: too many fuzzy boundaries to enumerate");
        }
        for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
            auto params = detail::model_at(cfg, cfg.kac_beta(cfg.beta_grid[bi]));
            auto mode = detail::estimation_mode(cfg, detail::substream(cfg, {ni, bi}), 1);
            struct Item {
                std::vector<double> direct;
                KernelEstimate fact;
                std::string label;
            };
            auto items = parallel_map(count, threads, [&](std::size_t state) {
                std::vector<Color> c(dom.size());
                std::size_t x = state;
                for (auto& v : c) {
                    v = static_cast<Color>(x % static_cast<std::size_t>(part.s()));
                    x /= static_cast<std::size_t>(part.s());
                }
                KernelQuery query{cfg.site, ColorConfiguration(dom, std::move(c), part.s())};
                EstimationMode mm = mode;
                mm.seed = hash_key({mode.seed, state});
                return Item{kernel_direct(params, part, query), kernel_factorized(params, part, query, mm),
                            detail::boundary_string(query.boundary)};
            });
            for (const auto& it : items) {
                double local = 0.0;
                for (int k = 0; k < part.s(); ++k) {
                    auto kk = static_cast<std::size_t>(k);
                    double diff = std::abs(it.direct[kk] - it.fact.probabilities[kk]);
                    local = std::max(local, diff);
                    rows.add({cfg.beta_grid[bi], grid.n(), it.label, k, it.direct[kk], it.fact.probabilities[kk], diff,
                              it.fact.stderrs[kk], cfg.mode});
                }
                per.add({cfg.beta_grid[bi], grid.n(), it.label, local});
                worst = std::max(worst, local);
                ++boundaries;
            }
        }
    }
    ExperimentResult res;
    res.tables["kernels"] = std::move(rows);
    res.tables["boundaries"] = std::move(per);
    res.report = {{"partition", part.describe()},
                  {"boundaries", boundaries},
                  {"max_abs_diff", worst},
                  {"tolerance", 1e-12},
                  {"identity_holds", cfg.mode == "exact" ? nlohmann::json(worst < 1e-12) : nlohmann::json(nullptr)}};
    return res;
}

inline ExperimentResult run_threshold_scan(const ExperimentConfig& cfg, unsigned threads) {
    auto part = detail::partition_of(cfg);
    int i = -1;
    for (int k = 0; k < part.s(); ++k) {
        if (part.size(k) >= 3) {
            i = k;
            break;
        }
    }
    if (i < 0) {
        throw Infeasible("threshold-scan: the partition has no class with r >= 3");
    }
    const int m = cfg.m_values.front();
    const int ri = part.size(i);
    Table t({"beta", "n", "class", "gamma_minus", "gamma_plus", "gap", "stderr", "estimator", "classification",
             "critical", "alpha", "raw_difference"});
    nlohmann::json above = nlohmann::json::array();
    for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
        MeanFieldBeta beta = cfg.mf_beta(cfg.beta_grid[bi]);
        if (!(beta.value > 0.0)) {
            continue;
        }
        double ai = std::min(beta_critical(ri) / beta.value, 1.0 - 2.0 / m);
        auto pair = detail::pair_around(part, beta, i, ai, m);
        bool critical = std::abs(beta.value * ai - beta_critical(ri)) <= 1e-12 * beta_critical(ri);
        std::string cls = to_string(gng_classify(part, beta));
        auto closed = one_sided_limits(part, beta, pair, true);
        auto kac = one_sided_limits(part, beta, pair, false);
        for (const auto& [name, g] : {std::pair{"limit-closed-form", closed}, std::pair{"limit-kac", kac}}) {
            auto ii = static_cast<std::size_t>(i);
            t.add({cfg.beta_grid[bi], nullptr, i, g.gamma_minus[ii], g.gamma_plus[ii], g.gap, 0.0, name, cls, critical, ai,
                   g.gap});
        }
        auto pair2 = detail::pair_around(part, beta, i, ai, 2 * m);
        for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
            TorusGrid grid(cfg.d, cfg.n_ladder[ni]);
            auto params = detail::model_at(cfg, to_kac_beta(beta));
            // g[pair][side], pair 0 at 1/m and pair 1 at 1/(2m)
            double g[2][2];
            double se[2][2];
            for (int w = 0; w < 2; ++w) {
                for (int side = 0; side < 2; ++side) {
                    const auto& pr = w == 0 ? pair : pair2;
                    const auto& prof = side == 0 ? pr.minus : pr.plus;
                    KernelQuery query{cfg.site, flat_fuzzy_boundary(prof, grid, cfg.site)};
                    auto mode = detail::estimation_mode(
                        cfg, detail::substream(cfg, {bi, ni, static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(side)}),
                        threads);
                    auto est = kernel_factorized(params, part, query, mode);
                    g[w][side] = est.probabilities[static_cast<std::size_t>(i)];
                    se[w][side] = est.stderrs[static_cast<std::size_t>(i)];
                }
            }
            double d1 = g[0][1] - g[0][0];
            double d2 = g[1][1] - g[1][0];
            double jump = 2.0 * d2 - d1;
            double jump_se = std::sqrt(4.0 * (se[1][0] * se[1][0] + se[1][1] * se[1][1]) + se[0][0] * se[0][0] +
                                       se[0][1] * se[0][1]);
            t.add({cfg.beta_grid[bi], grid.n(), i, g[0][0], g[0][1], jump, jump_se, std::string("finite-n-") + cfg.mode,
                   cls, critical, ai, d1});
        }
        if (critical) {
            above.push_back(cfg.beta_grid[bi]);
        }
    }
    ExperimentResult res;
    res.tables["threshold_scan"] = std::move(t);
    res.report = {{"partition", part.describe()},
                  {"class", i},
                  {"m", m},
                  {"beta_units", cfg.beta_units},
                  {"threshold_beta_mf", beta_critical(ri) / (1.0 - 2.0 / m)},
                  {"critical_betas", above}};
    return res;
}

inline ExperimentResult run_badpoint_demo(const ExperimentConfig& cfg, unsigned threads) {
    auto part = detail::partition_of(cfg);
    Table t({"m", "side", "n", "beta", "partition", "class", "estimate", "stderr", "mode", "realized_alpha",
             "limit_closed_form", "limit_kac"});
    Table summary({"m", "n", "beta", "gamma_minus", "gamma_plus", "gap", "stderr", "disjoint_3sigma",
                   "ordered_like_limit"});
    for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
        MeanFieldBeta beta = cfg.mf_beta(cfg.beta_grid[bi]);
        auto params = detail::model_at(cfg, to_kac_beta(beta));
        for (int m : cfg.m_values) {
            auto pair = bad_profile_pair(part, beta, m);
            const int i = pair.critical_class;
            const auto ii = static_cast<std::size_t>(i);
            auto closed = kernel_gap(part, beta, pair);
            auto kac = kac_one_sided_limits(part, beta, pair);
            for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
                TorusGrid grid(cfg.d, cfg.n_ladder[ni]);
                double g[2];
                double se[2];
                for (int side = 0; side < 2; ++side) {
                    const auto& prof = side == 0 ? pair.minus : pair.plus;
                    KernelQuery query{cfg.site, flat_fuzzy_boundary(prof, grid, cfg.site)};
                    auto mode = detail::estimation_mode(
                        cfg, detail::substream(cfg, {bi, static_cast<std::uint64_t>(m), ni, static_cast<std::uint64_t>(side)}),
                        threads);
                    auto est = kernel_factorized(params, part, query, mode);
                    g[side] = est.probabilities[ii];
                    se[side] = est.stderrs[ii];
                    t.add({m, side == 0 ? "minus" : "plus", grid.n(), cfg.beta_grid[bi], part.describe(), i, g[side],
                           se[side], cfg.mode, detail::class_fraction(query.boundary, i),
                           side == 0 ? closed.gamma_minus[ii] : closed.gamma_plus[ii],
                           side == 0 ? kac.gamma_minus[ii] : kac.gamma_plus[ii]});
                }
                bool disjoint = g[0] + 3.0 * se[0] < g[1] - 3.0 * se[1] || g[1] + 3.0 * se[1] < g[0] - 3.0 * se[0];
                bool ordered = (g[1] - g[0]) * closed.gap > 0.0;
                summary.add({m, grid.n(), cfg.beta_grid[bi], g[0], g[1], g[1] - g[0], std::hypot(se[0], se[1]), disjoint,
                             ordered});
            }
        }
    }
    ExperimentResult res;
    res.tables["badpoint"] = std::move(t);
    res.tables["badpoint_summary"] = std::move(summary);
    res.report = {{"partition", part.describe()}, {"beta_units", cfg.beta_units}, {"mode", cfg.mode}};
    return res;
}

inline ExperimentResult run_minimize_rate(const ExperimentConfig& cfg, unsigned threads) {
    Table runs({"beta", "start_id", "iterations", "objective", "flatness_deviation", "gradient_norm", "converged",
                "equidistribution_deviation", "status"});
    Table traces({"beta", "start_id", "iteration", "objective", "gradient_norm"});
    ExperimentResult res;
    nlohmann::json per_beta = nlohmann::json::array();
    TorusGrid mesh(cfg.d, cfg.n_ladder.front());
    for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
        RateFunctionalContext ctx(cfg.kac_beta(cfg.beta_grid[bi]), cfg.kernel.build(), detail::dilution_of(cfg, mesh), cfg.q);
        MinimizeOptions opt;
        opt.max_iterations = cfg.max_iterations;
        opt.tolerance = cfg.tolerance;
        opt.starts = cfg.starts;
        opt.seed = detail::substream(cfg, {bi});
        opt.threads = threads;
        auto ms = minimize_rate_multistart(ctx, opt);
        double worst_eq = 0.0;
        bool all_converged = true;
        for (std::size_t k = 0; k < ms.runs.size(); ++k) {
            const auto& r = ms.runs[k];
            double eq = 0.0;
            for (double v : r.minimizer.values()) {
                eq = std::max(eq, std::abs(v - 1.0 / cfg.q));
            }
            worst_eq = std::max(worst_eq, eq);
            all_converged = all_converged && r.converged;
            runs.add({cfg.beta_grid[bi], k, r.iterations, r.value, flatness_deviation(r.minimizer), r.gradient_norm,
                      r.converged, eq, r.status});
            for (const auto& tr : r.trace) {
                traces.add({cfg.beta_grid[bi], k, tr.iteration, tr.objective, tr.gradient_norm});
            }
        }
        std::ostringstream bin;
        write_profile_binary(bin, ms.runs[ms.best].minimizer);
        res.binaries["best_profile_" + std::to_string(bi) + ".kpdp"] = bin.str();
        per_beta.push_back({{"beta", cfg.beta_grid[bi]},
                            {"best_start", ms.best},
                            {"best_value", ms.runs[ms.best].value},
                            {"equidistribution_value",
                             rate_eval_direct(ctx, DensityProfile::equidistribution(mesh, cfg.q))},
                            {"max_equidistribution_deviation", worst_eq},
                            {"all_converged", all_converged},
                            {"ties", ms.ties}});
    }
    res.tables["runs"] = std::move(runs);
    res.tables["traces"] = std::move(traces);
    res.report = {{"n", mesh.n()}, {"q", cfg.q}, {"results", per_beta}};
    return res;
}

inline ExperimentResult run_ising_explore(const ExperimentConfig& cfg, unsigned threads) {
    if (cfg.q != 2) {
        throw SchemaError("config model.q: ising-explore requires q = 2");
    }
    Table minima({"beta", "minimum_id", "value", "flat", "hits", "min_magnetization", "max_magnetization"});
    Table profiles({"beta", "minimum_id", "cell", "magnetization"});
    nlohmann::json per_beta = nlohmann::json::array();
    TorusGrid mesh(cfg.d, cfg.n_ladder.front());
    for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
        RateFunctionalContext ctx(cfg.kac_beta(cfg.beta_grid[bi]), cfg.kernel.build(), detail::dilution_of(cfg, mesh), 2);
        MinimizeOptions opt;
        opt.max_iterations = cfg.max_iterations;
        opt.tolerance = cfg.tolerance;
        opt.starts = cfg.starts;
        opt.seed = detail::substream(cfg, {bi});
        opt.threads = threads;
        auto ex = explore_ising_inhomogeneity(ctx, opt);
        for (std::size_t k = 0; k < ex.minima.size(); ++k) {
            const auto& mn = ex.minima[k];
            auto [lo, hi] = std::minmax_element(mn.magnetization.begin(), mn.magnetization.end());
            minima.add({cfg.beta_grid[bi], k, mn.value, mn.flat, mn.hits, *lo, *hi});
            for (std::size_t c = 0; c < mn.magnetization.size(); ++c) {
                profiles.add({cfg.beta_grid[bi], k, c, mn.magnetization[c]});
            }
        }
        per_beta.push_back({{"beta", cfg.beta_grid[bi]},
                            {"distinct_minima", ex.minima.size()},
                            {"best_flat_value", ex.best_flat_value},
                            {"best_flat_magnetization", ex.best_flat_magnetization},
                            {"nonflat_beats_flat", ex.nonflat_beats_flat}});
    }
    ExperimentResult res;
    res.tables["minima"] = std::move(minima);
    res.tables["minima_profiles"] = std::move(profiles);
    res.report = {{"n", mesh.n()}, {"dilution", cfg.dilution.type}, {"results", per_beta}};
    return res;
}

inline ExperimentResult run_sampler_diagnostics(const ExperimentConfig& cfg, unsigned threads) {
    Table obs({"beta", "n", "sampler", "observable", "mean", "stderr", "chains", "sweeps"});
    Table tv({"beta", "n", "sampler", "states", "samples", "tv_exact"});
    nlohmann::json agreement = nlohmann::json::array();
    const SamplerKind kinds[] = {SamplerKind::heat_bath, SamplerKind::cluster};
    const char* names[] = {"heat-bath", "cluster"};
    for (std::size_t ni = 0; ni < cfg.n_ladder.size(); ++ni) {
        TorusGrid grid(cfg.d, cfg.n_ladder[ni]);
        auto vol = Subvolume::full(grid);
        auto kernel = cfg.kernel.build();
        auto stencil = discretize_kernel(kernel, grid, true);
        const double self = stencil[0];
        std::size_t states = checked_state_count(cfg.q, vol.size(), 4096);
        bool small = states != std::numeric_limits<std::size_t>::max();
        for (std::size_t bi = 0; bi < cfg.beta_grid.size(); ++bi) {
            const double beta = cfg.kac_beta(cfg.beta_grid[bi]);
            ExactDistribution exact;
            if (small) {
                exact = exact_distribution(beta, vol, cfg.q, stencil, 4096);
            }
            Estimate est[2][2];
            for (int s = 0; s < 2; ++s) {
                struct ChainOut {
                    double order = 0.0;
                    double energy = 0.0;
                    std::vector<std::size_t> hist;
                };
                auto outs = parallel_map(cfg.chains, threads, [&](std::size_t c) {
                    SamplingPlan plan;
                    plan.sweeps = cfg.sweeps;
                    plan.burn_in = cfg.burn_in;
                    plan.kind = kinds[s];
                    plan.seed = detail::substream(cfg, {ni, bi, static_cast<std::uint64_t>(s)});
                    plan.chain = c;
                    auto state = ChainState::random_start(vol, cfg.q, beta, stencil, plan.key());
                    ChainOut o;
                    if (small) {
                        o.hist.assign(states, 0);
                    }
                    run_chain(state, plan, [&](const ChainState& st) {
                        o.order += order_parameter(st.counts());
                        auto col = st.configuration().colors();
                        double coinc = self * static_cast<double>(col.size());
                        for (std::size_t j = 0; j < col.size(); ++j) {
                            coinc += st.field(j, col[j]);
                        }
                        double n_sites = static_cast<double>(col.size());
                        o.energy += -coinc / (n_sites * n_sites);
                        if (small) {
                            ++o.hist[exact.encode(col)];
                        }
                    });
                    o.order /= static_cast<double>(cfg.sweeps);
                    o.energy /= static_cast<double>(cfg.sweeps);
                    return o;
                });
                std::vector<double> order;
                std::vector<double> energy;
                std::vector<double> hist(small ? states : 0, 0.0);
                for (const auto& o : outs) {
                    order.push_back(o.order);
                    energy.push_back(o.energy);
                    for (std::size_t k = 0; k < o.hist.size(); ++k) {
                        hist[k] += static_cast<double>(o.hist[k]);
                    }
                }
                est[s][0] = jackknife_mean(order);
                est[s][1] = jackknife_mean(energy);
                obs.add({cfg.beta_grid[bi], grid.n(), names[s], "order_parameter", est[s][0].value, est[s][0].std_error,
                         cfg.chains, cfg.sweeps});
                obs.add({cfg.beta_grid[bi], grid.n(), names[s], "energy_per_site", est[s][1].value, est[s][1].std_error,
                         cfg.chains, cfg.sweeps});
                if (small) {
                    double total = static_cast<double>(cfg.chains * cfg.sweeps);
                    for (auto& h : hist) {
                        h /= total;
                    }
                    tv.add({cfg.beta_grid[bi], grid.n(), names[s], states, cfg.chains * cfg.sweeps,
                            total_variation(hist, exact.probabilities)});
                }
            }
            for (int o = 0; o < 2; ++o) {
                double z = std::abs(est[0][o].value - est[1][o].value) /
                           std::max(1e-300, std::hypot(est[0][o].std_error, est[1][o].std_error));
                agreement.push_back({{"beta", cfg.beta_grid[bi]},
                                     {"n", grid.n()},
                                     {"observable", o == 0 ? "order_parameter" : "energy_per_site"},
                                     {"z", z},
                                     {"agree_3sigma", z < 3.0}});
            }
        }
    }
    ExperimentResult res;
    res.tables["observables"] = std::move(obs);
    if (tv.size() > 0) {
        res.tables["tv_exact"] = std::move(tv);
    }
    res.report = {{"q", cfg.q}, {"kernel", cfg.kernel.type}, {"agreement", agreement}};
    return res;
}

struct ProbeChain {
    double ordered = 0.0;
    double order = 0.0;
    double magnetization0 = 0.0;
    double m2 = 0.0;
    double m4 = 0.0;
};

/// Ordered-phase indicator threshold on m = (q maxfrac - 1)/(q - 1): halfway
/// between the disordered value 0 and the jump height (q-2)/(q-1).
inline double probe_threshold(int q) { return 0.5 * (q - 2.0) / (q - 1.0); }

struct ExactProbePoint {
    double ordered = 0.0;
    double binder = 0.0;
};

/// Exact ordered fraction and Binder cumulant of the uniform-kernel model via
/// color-count enumeration.
inline ExactProbePoint exact_probe_point(int q, std::size_t sites, double beta, double coupling) {
    std::vector<double> logw;
    std::vector<double> ord;
    std::vector<double> m2;
    const double n = static_cast<double>(sites);
    const double th = probe_threshold(q);
    for_each_composition(sites, q, [&](std::span<const std::size_t> parts) {
        double s2 = 0.0;
        std::size_t mx = 0;
        for (auto k : parts) {
            s2 += static_cast<double>(k) * static_cast<double>(k);
            mx = std::max(mx, k);
        }
        logw.push_back(log_multinomial(parts) + beta * coupling * s2 / n);
        double m = (q * static_cast<double>(mx) / n - 1.0) / (q - 1.0);
        ord.push_back(m > th ? 1.0 : 0.0);
        double signed_m = q == 2 ? (static_cast<double>(parts[0]) - static_cast<double>(parts[1])) / n : m;
        m2.push_back(signed_m * signed_m);
    });
    double lz = log_sum_exp(logw);
    ExactProbePoint out;
    double e2 = 0.0;
    double e4 = 0.0;
    for (std::size_t k = 0; k < logw.size(); ++k) {
        double w = std::exp(logw[k] - lz);
        out.ordered += w * ord[k];
        e2 += w * m2[k];
        e4 += w * m2[k] * m2[k];
    }
    out.binder = 1.0 - e4 / (3.0 * e2 * e2);
    return out;
}

inline double binder_crossing(std::span<const double> beta, std::span<const double> ua, std::span<const double> ub) {
    double best = detail::nan;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < beta.size(); ++k) {
        double d0 = ua[k - 1] - ub[k - 1];
        double d1 = ua[k] - ub[k];
        if (d0 < 0.0 && d1 >= 0.0) {
            double x = beta[k - 1] + (-d0) * (beta[k] - beta[k - 1]) / (d1 - d0);
            double mid = 0.25 * (ua[k - 1] + ub[k - 1] + ua[k] + ub[k]);
            double dist = std::abs(mid - 1.0 / 3.0);
            if (dist < best_dist) {
                best_dist = dist;
                best = x;
            }
        }
    }
    return best;
}

inline ExperimentResult run_convention_probe(const ExperimentConfig& cfg, unsigned threads) {
    const int q = cfg.q;
    const int n = cfg.n_ladder.front();
    if (n < 4 || n % 2 != 0) {
        throw Infeasible("convention-probe: n must be even and at least 4");
    }
    const std::vector<int> sizes{n, n / 2};
    std::vector<double> betas;
    for (double b : cfg.beta_grid) {
        betas.push_back(cfg.kac_beta(b));
    }
    std::vector<std::size_t> order(betas.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return betas[a] < betas[b]; });
    std::vector<double> sorted;
    for (auto k : order) {
        sorted.push_back(betas[k]);
    }
    betas = sorted;
    const std::size_t nb = betas.size();
    const std::size_t nc = cfg.chains;
    const double th = probe_threshold(q);
    auto kernel = KacKernel::uniform();

    // data[size][beta][chain]
    std::vector<std::vector<std::vector<ProbeChain>>> data(2, std::vector<std::vector<ProbeChain>>(nb));
    std::vector<double> coupling(2);
    for (std::size_t si = 0; si < 2; ++si) {
        TorusGrid grid(cfg.d, sizes[si]);
        auto vol = Subvolume::full(grid);
        auto stencil = discretize_kernel(kernel, grid, true);
        coupling[si] = stencil[0];
        auto flat = parallel_map(nb * nc, threads, [&](std::size_t item) {
            std::size_t bi = item / nc;
            std::size_t c = item % nc;
            SamplingPlan plan;
            plan.sweeps = cfg.sweeps;
            plan.burn_in = cfg.burn_in;
            plan.kind = cfg.sampler_kind();
            plan.seed = detail::substream(cfg, {si, bi});
            plan.chain = c;
            auto state = ChainState::random_start(vol, q, betas[bi], stencil, plan.key());
            ProbeChain pc;
            const double sites = static_cast<double>(vol.size());
            run_chain(state, plan, [&](const ChainState& st) {
                auto counts = st.counts();
                double m = order_parameter(counts);
                pc.order += m;
                pc.ordered += m > th ? 1.0 : 0.0;
                pc.magnetization0 += (q * static_cast<double>(counts[0]) / sites - 1.0) / (q - 1.0);
                double sm = q == 2 ? (static_cast<double>(counts[0]) - static_cast<double>(counts[1])) / sites : m;
                pc.m2 += sm * sm;
                pc.m4 += sm * sm * sm * sm;
            });
            const double k = static_cast<double>(cfg.sweeps);
            pc.ordered /= k;
            pc.order /= k;
            pc.magnetization0 /= k;
            pc.m2 /= k;
            pc.m4 /= k;
            return pc;
        });
        for (std::size_t item = 0; item < flat.size(); ++item) {
            data[si][item / nc].push_back(flat[item]);
        }
    }

    // curves with chain `skip` left out (skip == nc keeps all)
    auto curve = [&](std::size_t si, std::size_t skip, auto field) {
        std::vector<double> y(nb, 0.0);
        for (std::size_t bi = 0; bi < nb; ++bi) {
            double cnt = 0.0;
            for (std::size_t c = 0; c < nc; ++c) {
                if (c != skip) {
                    y[bi] += field(data[si][bi][c]);
                    cnt += 1.0;
                }
            }
            y[bi] /= cnt;
        }
        return y;
    };
    auto binder = [&](std::size_t si, std::size_t skip) {
        auto m2 = curve(si, skip, [](const ProbeChain& p) { return p.m2; });
        auto m4 = curve(si, skip, [](const ProbeChain& p) { return p.m4; });
        std::vector<double> u(nb);
        for (std::size_t k = 0; k < nb; ++k) {
            u[k] = 1.0 - m4[k] / (3.0 * m2[k] * m2[k]);
        }
        return u;
    };
    auto ordered_of = [](const ProbeChain& p) { return p.ordered; };
    auto onset = [&](std::size_t si, std::size_t skip) {
        return detail::upward_crossing(betas, curve(si, skip, ordered_of), 0.5);
    };

    nlohmann::json report;
    double center = detail::nan;
    double half = detail::nan;
    double se = detail::nan;
    std::vector<double> loo(nc);
    if (q >= 3) {
        double on_n = onset(0, nc);
        double on_h = onset(1, nc);
        center = 2.0 * on_n - on_h;
        for (std::size_t c = 0; c < nc; ++c) {
            loo[c] = 2.0 * onset(0, c) - onset(1, c);
        }
        se = detail::jackknife_error(loo);
        half = std::abs(on_n - on_h) + 3.0 * se;
        report["method"] = "equal-weight ordered fraction, Richardson 2 on(n) - on(n/2)";
        report["onset_n"] = on_n;
        report["onset_half_n"] = on_h;
    } else {
        center = binder_crossing(betas, binder(0, nc), binder(1, nc));
        for (std::size_t c = 0; c < nc; ++c) {
            loo[c] = binder_crossing(betas, binder(0, c), binder(1, c));
        }
        se = detail::jackknife_error(loo);
        double spacing = 0.0;
        for (std::size_t k = 1; k < nb; ++k) {
            if (betas[k - 1] <= center && center <= betas[k]) {
                spacing = betas[k] - betas[k - 1];
            }
        }
        half = 3.0 * se + spacing;
        report["method"] = "Binder cumulant crossing of n and n/2";
    }
    const double bc = beta_critical(q);
    bool covers_full = std::abs(bc - center) <= half;
    bool covers_half = std::abs(0.5 * bc - center) <= half;
    report["q"] = q;
    report["n"] = n;
    report["d"] = cfg.d;
    report["sampler"] = cfg.sampler;
    report["onset_estimate"] = center;
    report["onset_stderr"] = se;
    report["ci_low"] = center - half;
    report["ci_high"] = center + half;
    report["beta_c"] = bc;
    report["beta_c_half"] = 0.5 * bc;
    report["covers_beta_c"] = covers_full;
    report["covers_beta_c_half"] = covers_half;
    report["covers_exactly_one"] = covers_full != covers_half;
    report["adopted_conversion"] = "beta_mf = 2 beta_kac";
    report["adopted_threshold_kac"] = to_kac_beta(MeanFieldBeta(bc));
    report["consistent_with_adopted"] = covers_half && !covers_full;

    Table t({"n", "beta", "ordered_fraction", "ordered_fraction_stderr", "order_parameter", "order_parameter_stderr",
             "magnetization0", "magnetization0_stderr", "binder", "exact_ordered_fraction", "exact_binder"});
    for (std::size_t si = 0; si < 2; ++si) {
        auto u = binder(si, nc);
        TorusGrid grid(cfg.d, sizes[si]);
        double compositions = 1.0;
        for (int k = 1; k < q; ++k) {
            compositions *= static_cast<double>(grid.size() + static_cast<std::size_t>(k)) / k;
        }
        bool exact_ok = compositions <= 2e6;
        std::vector<double> exact_ord(nb, detail::nan);
        for (std::size_t bi = 0; bi < nb; ++bi) {
            std::vector<double> ord;
            std::vector<double> op;
            std::vector<double> m0;
            for (const auto& pc : data[si][bi]) {
                ord.push_back(pc.ordered);
                op.push_back(pc.order);
                m0.push_back(pc.magnetization0);
            }
            auto e1 = jackknife_mean(ord);
            auto e2 = jackknife_mean(op);
            auto e3 = jackknife_mean(m0);
            ExactProbePoint ex{detail::nan, detail::nan};
            if (exact_ok) {
                ex = exact_probe_point(q, grid.size(), betas[bi], coupling[si]);
                exact_ord[bi] = ex.ordered;
            }
            t.add({sizes[si], betas[bi], e1.value, e1.std_error, e2.value, e2.std_error, e3.value, e3.std_error, u[bi],
                   ex.ordered, ex.binder});
            if (si == 0 && betas[bi] == 0.0) {
                report["beta0_magnetization"] = e3.value;
                report["beta0_magnetization_stderr"] = e3.std_error;
                report["beta0_zero_within_ci"] = std::abs(e3.value) <= 3.0 * e3.std_error + 1e-15;
            }
        }
        if (exact_ok && q >= 3) {
            report[si == 0 ? "exact_onset_n" : "exact_onset_half_n"] = detail::upward_crossing(betas, exact_ord, 0.5);
        }
    }
    ExperimentResult res;
    res.tables["probe_curve"] = std::move(t);
    res.report = report;
    return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned threads = 1) {
    const auto& k = cfg.experiment;
    if (k == "prop23-identity") {
        return run_prop23_identity(cfg, threads);
    }
    if (k == "threshold-scan") {
        return run_threshold_scan(cfg, threads);
    }
    if (k == "badpoint-demo") {
        return run_badpoint_demo(cfg, threads);
    }
    if (k == "minimize-rate") {
        return run_minimize_rate(cfg, threads);
    }
    if (k == "sampler-diagnostics") {
        return run_sampler_diagnostics(cfg, threads);
    }
    if (k == "convention-probe") {
        return run_convention_probe(cfg, threads);
    }
    if (k == "ising-explore") {
        return run_ising_explore(cfg, threads);
    }
    throw SchemaError("config experiment: unknown kind '" + k + "'");
}

}

#endif
