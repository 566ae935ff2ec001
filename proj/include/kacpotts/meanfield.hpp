#ifndef KACPOTTS_MEANFIELD_HPP
#define KACPOTTS_MEANFIELD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"

namespace kacpotts {

/// Inverse temperature in mean-field units, the convention in which
/// beta_c(3) = 4 log 2 and u(beta_c(r)) = (r-2)/(r-1).
///
/// The Kac-Potts weight exp(-beta H_n) and the rate function
/// -beta sum alpha^2 + S(alpha|eq) share one beta; that beta is half of the
/// mean-field one. Every crossing between the two goes through
/// from_kac_beta / to_kac_beta.
struct MeanFieldBeta {
    double value = 0.0;

    constexpr MeanFieldBeta() = default;
    constexpr explicit MeanFieldBeta(double v) : value(v) {}

    constexpr auto operator<=>(const MeanFieldBeta&) const = default;
};

constexpr MeanFieldBeta from_kac_beta(double beta_kac) { return MeanFieldBeta(2.0 * beta_kac); }
constexpr double to_kac_beta(MeanFieldBeta b) { return 0.5 * b.value; }

/// I(alpha) = -beta_eff sum alpha_a^2 + sum alpha_a log(r alpha_a), beta_eff in rate units.
inline double mf_rate(std::span<const double> alpha, double beta_eff) {
    const double r = static_cast<double>(alpha.size());
    double quad = 0.0;
    double ent = 0.0;
    for (double a : alpha) {
        quad += a * a;
        if (a > 0.0) {
            ent += a * std::log(r * a);
        }
    }
    return -beta_eff * quad + ent;
}

/// Euclidean gradient of mf_rate; entries with alpha_a = 0 are floored at 1e-12.
inline std::vector<double> mf_rate_gradient(std::span<const double> alpha, double beta_eff) {
    const double r = static_cast<double>(alpha.size());
    std::vector<double> g(alpha.size());
    for (std::size_t a = 0; a < alpha.size(); ++a) {
        double v = std::max(alpha[a], 1e-12);
        g[a] = -2.0 * beta_eff * alpha[a] + std::log(r * v) + 1.0;
    }
    return g;
}

/// Norm of the gradient projected onto the tangent space of the simplex.
inline double projected_gradient_norm(std::span<const double> grad) {
    double mean = std::accumulate(grad.begin(), grad.end(), 0.0) / static_cast<double>(grad.size());
    double s = 0.0;
    for (double g : grad) {
        s += (g - mean) * (g - mean);
    }
    return std::sqrt(s);
}

inline double beta_critical(int r) {
    require(r >= 2, "beta_critical: r must be at least 2");
    if (r == 2) {
        // g(u) = log((1+u)/(1-u)) - beta u has g'(0) = 2 - beta.
        return 2.0;
    }
    const double rm = static_cast<double>(r - 1);
    return 2.0 * rm * std::log(rm) / static_cast<double>(r - 2);
}

/// ((1+(r-1)u)/r, (1-u)/r, ...) with the large entry at position `lead`.
inline std::vector<double> mf_vector(double u, int r, int lead = 0) {
    require(r >= 1 && lead >= 0 && lead < r, "mf_vector: bad arguments");
    std::vector<double> v(static_cast<std::size_t>(r), (1.0 - u) / r);
    v[static_cast<std::size_t>(lead)] = (1.0 + (r - 1) * u) / r;
    return v;
}

namespace detail {

inline double mf_g(double u, double beta, int r) {
    return std::log1p((r - 1) * u) - std::log1p(-u) - beta * u;
}

inline double mf_h_prime(double u, int r) {
    return r / ((1.0 + (r - 1) * u) * (1.0 - u));
}

}

/// Largest root u in [0,1) of (1+(r-1)u)/(1-u) = exp(beta u), beta in mean-field units.
inline double mf_equation_solve(MeanFieldBeta beta_mf, int r) {
    const double beta = beta_mf.value;
    require(r >= 2, "mf_equation_solve: r must be at least 2");
    require(beta >= 0.0 && std::isfinite(beta), "mf_equation_solve: beta must be finite and nonnegative");
    // log((1+(r-1)u)/(1-u)) is concave below u0 and convex above, so the
    // minimum of g on [u0,1) decides whether a positive root exists.
    const double u0 = static_cast<double>(r - 2) / (2.0 * (r - 1));
    double umin = u0;
    if (detail::mf_h_prime(u0, r) < beta) {
        double lo = u0;
        double hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            double mid = 0.5 * (lo + hi);
            if (detail::mf_h_prime(mid, r) < beta) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        umin = 0.5 * (lo + hi);
    }
    double gmin = detail::mf_g(umin, beta, r);
    if (gmin > 1e-15 || umin == 0.0) {
        return 0.0;
    }
    if (gmin > -1e-15) {
        return umin;
    }
    double lo = umin;
    double hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        double mid = 0.5 * (lo + hi);
        if (detail::mf_g(mid, beta, r) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    double u = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
        double d = detail::mf_h_prime(u, r) - beta;
        if (d <= 0.0) {
            break;
        }
        double next = u - detail::mf_g(u, beta, r) / d;
        if (!(next > lo && next < hi)) {
            break;
        }
        u = next;
    }
    return u;
}

/// Residual of the fixed-point form u = (1 - e^{-beta u})/(1 + (r-1) e^{-beta u}).
inline double mf_equation_residual(double u, MeanFieldBeta beta_mf, int r) {
    double e = std::exp(-beta_mf.value * u);
    return u - (1.0 - e) / (1.0 + (r - 1) * e);
}

/// Order parameter of the global minimizer of the rate function: u_max when
/// the ordered vector is at least as good as equidistribution, else 0.
inline double mf_order_parameter(MeanFieldBeta beta_mf, int r) {
    double u = mf_equation_solve(beta_mf, r);
    if (u == 0.0) {
        return 0.0;
    }
    const double beta_eff = to_kac_beta(beta_mf);
    auto eq = mf_vector(0.0, r);
    auto ord = mf_vector(u, r);
    return mf_rate(ord, beta_eff) <= mf_rate(eq, beta_eff) ? u : 0.0;
}

/// Global minimizers of the rate function, found by comparing candidate
/// stationary points. Ties within 1e-10 are all reported.
inline std::vector<std::vector<double>> mf_minimizers(MeanFieldBeta beta_mf, int r, double tie = 1e-10) {
    const double beta_eff = to_kac_beta(beta_mf);
    std::vector<std::vector<double>> cand{mf_vector(0.0, r)};
    double u = mf_equation_solve(beta_mf, r);
    if (u > 0.0) {
        for (int lead = 0; lead < r; ++lead) {
            cand.push_back(mf_vector(u, r, lead));
        }
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cand) {
        best = std::min(best, mf_rate(c, beta_eff));
    }
    std::vector<std::vector<double>> out;
    for (auto& c : cand) {
        if (mf_rate(c, beta_eff) <= best + tie) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

inline double phi_minus(int r) {
    require(r >= 3, "phi_minus: defined for r >= 3");
    return std::exp(2.0 * beta_critical(r) / r);
}

inline double phi_plus(int r) {
    require(r >= 3, "phi_plus: defined for r >= 3");
    const double bc = beta_critical(r);
    const double rr = static_cast<double>(r);
    return (std::exp(2.0 * bc * (rr - 1.0) / rr) + (rr - 1.0) * std::exp(2.0 * bc / (rr * (rr - 1.0)))) / rr;
}

enum class PhaseSide { automatic, disordered, ordered };

/// Large-n limit of the class factor A for a class of r colors whose
/// mean-field temperature is b (in mean-field units):
/// (1/r) sum_a exp(scale * v_a) with v the minimizing color-frequency vector.
/// `side` picks the branch at a coexistence point.
inline double class_factor_limit(double scale, MeanFieldBeta b, int r, PhaseSide side = PhaseSide::automatic) {
    require(r >= 1, "class_factor_limit: r must be positive");
    if (r == 1) {
        return std::exp(scale);
    }
    double u = 0.0;
    if (side == PhaseSide::ordered) {
        u = mf_equation_solve(b, r);
    } else if (side == PhaseSide::automatic) {
        u = mf_order_parameter(b, r);
    }
    const double rr = static_cast<double>(r);
    if (u == 0.0) {
        return std::exp(scale / rr);
    }
    return (std::exp(scale * (1.0 + (rr - 1.0) * u) / rr) + (rr - 1.0) * std::exp(scale * (1.0 - u) / rr)) / rr;
}

}

#endif
