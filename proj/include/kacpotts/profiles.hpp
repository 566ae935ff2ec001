#ifndef KACPOTTS_PROFILES_HPP
#define KACPOTTS_PROFILES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "error.hpp"
#include "potts.hpp"
#include "torus.hpp"

namespace kacpotts {

/// pi_Lambda^sigma: atoms of mass 1/|Lambda| at x/n, grouped by color.
class EmpiricalProfile {
public:
    EmpiricalProfile(const TorusGrid& grid, int q, std::vector<std::vector<std::size_t>> sites_by_color,
                     std::size_t total)
        : grid_(grid), q_(q), by_color_(std::move(sites_by_color)), total_(total) {}

    const TorusGrid& grid() const { return grid_; }
    int q() const { return q_; }
    std::size_t total() const { return total_; }
    std::span<const std::size_t> sites(int color) const { return by_color_[static_cast<std::size_t>(color)]; }

    double mass(int color) const {
        return static_cast<double>(by_color_[static_cast<std::size_t>(color)].size()) / static_cast<double>(total_);
    }

private:
    TorusGrid grid_;
    int q_;
    std::vector<std::vector<std::size_t>> by_color_;
    std::size_t total_;
};

/// Profile over the sites of `volume`, which must be active in cfg.
inline EmpiricalProfile empirical_profile(const ColorConfiguration& cfg, const Subvolume& volume) {
    if (volume.empty()) {
        throw InvalidArgument("empirical_profile: empty volume");
    }
    if (!(volume.grid() == cfg.grid())) {
        throw GridMismatch("empirical_profile: volume and configuration grids differ");
    }
    std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(cfg.num_colors()));
    for (std::size_t x : volume.sites()) {
        Color c = cfg.color_at_site(x);
        require(c >= 0, "empirical_profile: volume site is not active in the configuration");
        by[static_cast<std::size_t>(c)].push_back(x);
    }
    return EmpiricalProfile(cfg.grid(), cfg.num_colors(), std::move(by), volume.size());
}

inline EmpiricalProfile empirical_profile(const ColorConfiguration& cfg) { return empirical_profile(cfg, cfg.domain()); }

/// Per-cell probability vectors on a mesh; row-major, values[cell * q + a].
/// A row of all zeros is admitted as the zero-mass convention of coarse_grain.
class DensityProfile {
public:
    DensityProfile() = default;

    DensityProfile(const TorusGrid& mesh, int q, std::vector<double> values) : mesh_(mesh), q_(q), values_(std::move(values)) {
        require(q >= 1, "DensityProfile: need at least one component");
        require(values_.size() == mesh_.size() * static_cast<std::size_t>(q), "DensityProfile: value count must be cells * q");
        for (std::size_t c = 0; c < mesh_.size(); ++c) {
            double s = 0.0;
            bool zero = true;
            for (int a = 0; a < q_; ++a) {
                double v = at(c, a);
                require(std::isfinite(v) && v >= 0.0, "DensityProfile: entries must be finite and nonnegative");
                s += v;
                zero = zero && v == 0.0;
            }
            require(zero || std::abs(s - 1.0) <= 1e-12, "DensityProfile: cell vector must sum to 1");
        }
    }

    /// The same vector in every cell.
    static DensityProfile flat(const TorusGrid& mesh, std::span<const double> alpha) {
        std::vector<double> v;
        v.reserve(mesh.size() * alpha.size());
        for (std::size_t c = 0; c < mesh.size(); ++c) {
            v.insert(v.end(), alpha.begin(), alpha.end());
        }
        return DensityProfile(mesh, static_cast<int>(alpha.size()), std::move(v));
    }

    static DensityProfile equidistribution(const TorusGrid& mesh, int q) {
        std::vector<double> alpha(static_cast<std::size_t>(q), 1.0 / q);
        return flat(mesh, alpha);
    }

    const TorusGrid& mesh() const { return mesh_; }
    int q() const { return q_; }
    std::size_t cells() const { return mesh_.size(); }

    double at(std::size_t cell, int a) const { return values_[cell * static_cast<std::size_t>(q_) + static_cast<std::size_t>(a)]; }
    std::span<const double> cell(std::size_t c) const {
        return std::span<const double>(values_).subspan(c * static_cast<std::size_t>(q_), static_cast<std::size_t>(q_));
    }
    std::span<const double> values() const { return values_; }

    /// Component a as a scalar field over the mesh.
    ScalarField component(int a) const {
        ScalarField f(mesh_);
        for (std::size_t c = 0; c < mesh_.size(); ++c) {
            f[c] = at(c, a);
        }
        return f;
    }

    bool is_zero_cell(std::size_t c) const {
        for (double v : cell(c)) {
            if (v != 0.0) {
                return false;
            }
        }
        return true;
    }

    bool operator==(const DensityProfile&) const = default;

private:
    TorusGrid mesh_;
    int q_ = 1;
    std::vector<double> values_;
};

/// rho(u) in [0,1] per cell with total mass N_rho = mean(rho).
class DilutionField {
public:
    DilutionField() = default;

    DilutionField(const TorusGrid& mesh, std::vector<double> rho) : rho_(mesh, std::move(rho)) {
        for (double v : rho_.values()) {
            require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "DilutionField: rho must lie in [0,1]");
        }
    }

    static DilutionField constant(const TorusGrid& mesh, double c) {
        return DilutionField(mesh, std::vector<double>(mesh.size(), c));
    }

    const TorusGrid& mesh() const { return rho_.grid(); }
    const ScalarField& raw() const { return rho_; }
    double mass() const { return rho_.mean(); }

    /// rho / N_rho.
    ScalarField normalized() const {
        double m = mass();
        if (!(m > 0.0)) {
            throw InvalidArgument("DilutionField: zero total mass cannot be normalized");
        }
        ScalarField out(mesh());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = rho_[i] / m;
        }
        return out;
    }

private:
    ScalarField rho_;
};

/// Finite weighted measure on T^d x {0..q-1}; every profile kind reduces to one.
/// With cell == 0 each atom is a point mass at points[i]; with cell > 0 it is
/// spread uniformly over the box [points[i], points[i] + cell)^d.
struct AtomicMeasure {
    int dim = 1;
    int q = 1;
    std::vector<Point> points;
    std::vector<int> colors;
    std::vector<double> weights;
    double cell = 0.0;
};

inline AtomicMeasure to_measure(const EmpiricalProfile& p) {
    AtomicMeasure m{p.grid().dim(), p.q(), {}, {}, {}};
    const double w = 1.0 / static_cast<double>(p.total());
    for (int a = 0; a < p.q(); ++a) {
        for (std::size_t x : p.sites(a)) {
            m.points.push_back(p.grid().point(x));
            m.colors.push_back(a);
            m.weights.push_back(w);
        }
    }
    return m;
}

/// The absolutely continuous measure density(u) alpha[a](u) du, piecewise constant on mesh cells.
inline AtomicMeasure to_measure(const DensityProfile& p, const ScalarField* density = nullptr) {
    if (density != nullptr && !(density->grid() == p.mesh())) {
        throw GridMismatch("to_measure: density and profile meshes differ");
    }
    AtomicMeasure m{p.mesh().dim(), p.q(), {}, {}, {}, 1.0 / static_cast<double>(p.mesh().n())};
    const double inv = 1.0 / static_cast<double>(p.cells());
    for (std::size_t c = 0; c < p.cells(); ++c) {
        double d = density != nullptr ? (*density)[c] : 1.0;
        for (int a = 0; a < p.q(); ++a) {
            double w = d * p.at(c, a) * inv;
            if (w != 0.0) {
                m.points.push_back(p.mesh().point(c));
                m.colors.push_back(a);
                m.weights.push_back(w);
            }
        }
    }
    return m;
}

/// Normalized counting measure of a subvolume (single color).
inline AtomicMeasure counting_measure(const Subvolume& volume) {
    require(!volume.empty(), "counting_measure: empty volume");
    AtomicMeasure m{volume.grid().dim(), 1, {}, {}, {}};
    const double w = 1.0 / static_cast<double>(volume.size());
    for (std::size_t x : volume.sites()) {
        m.points.push_back(volume.grid().point(x));
        m.colors.push_back(0);
        m.weights.push_back(w);
    }
    return m;
}

/// rho~ lambda as a single-color measure, piecewise constant on the dilution mesh.
inline AtomicMeasure dilution_measure(const DilutionField& rho) {
    auto rt = rho.normalized();
    std::vector<double> ones(rt.size(), 1.0);
    return to_measure(DensityProfile(rho.mesh(), 1, ones), &rt);
}

/// f_j(x, a) = trig(2 pi k.x) 1{a = color}, trig in {cos, sin}; |f_j| <= 1.
struct TestFunction {
    Coords k{0, 0, 0};
    bool sine = false;
    int color = 0;

    double operator()(const Point& x, int a, int dim) const {
        if (a != color) {
            return 0.0;
        }
        double phase = 0.0;
        for (int i = 0; i < dim; ++i) {
            phase += k[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        }
        phase *= 2.0 * std::numbers::pi;
        return sine ? std::sin(phase) : std::cos(phase);
    }

    /// Exact mean of the function over the box [corner, corner + width)^d.
    double box_average(const Point& corner, double width, int a, int dim) const {
        if (a != color) {
            return 0.0;
        }
        double phase = 0.0;
        double damp = 1.0;
        for (int i = 0; i < dim; ++i) {
            const double ki = k[static_cast<std::size_t>(i)];
            phase += ki * (corner[static_cast<std::size_t>(i)] + 0.5 * width);
            const double t = std::numbers::pi * ki * width;
            damp *= t == 0.0 ? 1.0 : std::sin(t) / t;
        }
        phase *= 2.0 * std::numbers::pi;
        return damp * (sine ? std::sin(phase) : std::cos(phase));
    }
};

/// Fourier modes times color indicators, ordered by |k|_1, then k
/// lexicographically, then cos before sin, then color. Only one
/// representative of each +-k pair is kept.
class TestFunctionFamily {
public:
    TestFunctionFamily(int dim, int q, std::size_t count) : dim_(dim), q_(q) {
        require(dim >= 1 && dim <= max_dimension, "TestFunctionFamily: bad dimension");
        require(q >= 1, "TestFunctionFamily: need at least one color");
        for (int l1 = 0; funcs_.size() < count; ++l1) {
            for (const auto& k : modes_with_norm(l1)) {
                for (int s = 0; s < 2 && funcs_.size() < count; ++s) {
                    if (s == 1 && l1 == 0) {
                        continue;
                    }
                    for (int a = 0; a < q && funcs_.size() < count; ++a) {
                        funcs_.push_back(TestFunction{k, s == 1, a});
                    }
                }
                if (funcs_.size() >= count) {
                    break;
                }
            }
        }
    }

    int dim() const { return dim_; }
    int q() const { return q_; }
    std::size_t size() const { return funcs_.size(); }
    const TestFunction& operator[](std::size_t j) const { return funcs_[j]; }

private:
    std::vector<Coords> modes_with_norm(int l1) const {
        std::vector<Coords> out;
        Coords k{0, 0, 0};
        auto rec = [&](auto&& self, int axis, int left) -> void {
            if (axis == dim_ - 1) {
                for (int v : {-left, left}) {
                    k[static_cast<std::size_t>(axis)] = v;
                    if (canonical(k)) {
                        out.push_back(k);
                    }
                    if (left == 0) {
                        break;
                    }
                }
                return;
            }
            for (int v = -left; v <= left; ++v) {
                k[static_cast<std::size_t>(axis)] = v;
                self(self, axis + 1, left - std::abs(v));
            }
        };
        rec(rec, 0, l1);
        std::sort(out.begin(), out.end());
        return out;
    }

    bool canonical(const Coords& k) const {
        for (int i = 0; i < dim_; ++i) {
            if (k[static_cast<std::size_t>(i)] != 0) {
                return k[static_cast<std::size_t>(i)] > 0;
            }
        }
        return true;
    }

    int dim_;
    int q_;
    std::vector<TestFunction> funcs_;
};

inline double integrate(const AtomicMeasure& m, const TestFunction& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        s += m.weights[i] * (m.cell > 0.0 ? f.box_average(m.points[i], m.cell, m.colors[i], m.dim)
                                          : f(m.points[i], m.colors[i], m.dim));
    }
    return s;
}

struct WeakDistance {
    double value = 0.0;
    double tail = 0.0;
};

/// sum_{j=1}^K 2^-j |mu(f_j) - nu(f_j)| / (1 + |mu(f_j) - nu(f_j)|), with tail bound 2^-K.
inline WeakDistance weak_distance(const AtomicMeasure& a, const AtomicMeasure& b, const TestFunctionFamily& family,
                                  std::size_t truncation = 64) {
    if (truncation < 1) {
        throw InvalidArgument("weak_distance: truncation must be at least 1");
    }
    require(a.dim == b.dim && a.dim == family.dim(), "weak_distance: dimension mismatch");
    require(truncation <= family.size(), "weak_distance: family shorter than truncation");
    WeakDistance d{0.0, std::ldexp(1.0, -static_cast<int>(truncation))};
    double w = 0.5;
    for (std::size_t j = 0; j < truncation; ++j, w *= 0.5) {
        double diff = std::abs(integrate(a, family[j]) - integrate(b, family[j]));
        d.value += w * diff / (1.0 + diff);
    }
    return d;
}

inline WeakDistance weak_distance(const AtomicMeasure& a, const AtomicMeasure& b, std::size_t truncation = 64) {
    return weak_distance(a, b, TestFunctionFamily(a.dim, std::max(a.q, b.q), truncation), truncation);
}

/// Cell blocks for coarse graining: block index per mesh cell.
struct BlockPartition {
    std::vector<std::size_t> block_of_cell;
    std::size_t blocks = 0;
};

/// Splits every axis of the mesh into `per_axis` equal runs of cells.
inline BlockPartition uniform_blocks(const TorusGrid& mesh, int per_axis) {
    require(per_axis >= 1 && mesh.n() % per_axis == 0, "uniform_blocks: blocks must divide the mesh");
    const int width = mesh.n() / per_axis;
    BlockPartition p;
    p.block_of_cell.resize(mesh.size());
    p.blocks = 1;
    for (int i = 0; i < mesh.dim(); ++i) {
        p.blocks *= static_cast<std::size_t>(per_axis);
    }
    for (std::size_t c = 0; c < mesh.size(); ++c) {
        Coords x = mesh.coords(c);
        std::size_t b = 0;
        for (int i = 0; i < mesh.dim(); ++i) {
            b = b * static_cast<std::size_t>(per_axis) + static_cast<std::size_t>(x[static_cast<std::size_t>(i)] / width);
        }
        p.block_of_cell[c] = b;
    }
    return p;
}

struct CoarseGrained {
    DensityProfile profile;
    std::vector<bool> zero_mass_block;
};

/// Per-block dilution-weighted mean color vector, spread back over the block's cells.
inline CoarseGrained coarse_grain(const DensityProfile& p, const BlockPartition& blocks,
                                  const DilutionField* dilution = nullptr) {
    require(blocks.block_of_cell.size() == p.cells(), "coarse_grain: partition must cover the mesh");
    if (dilution != nullptr && !(dilution->mesh() == p.mesh())) {
        throw GridMismatch("coarse_grain: dilution mesh differs from profile mesh");
    }
    const auto q = static_cast<std::size_t>(p.q());
    constexpr auto none = std::numeric_limits<std::size_t>::max();
    // Deviations from a reference row of each block are averaged, so a block-constant
    // input is reproduced bit for bit and the operation is an exact projection.
    std::vector<std::size_t> ref(blocks.blocks, none);
    std::vector<double> dev(blocks.blocks * q, 0.0);
    std::vector<double> mass(blocks.blocks, 0.0);
    for (std::size_t c = 0; c < p.cells(); ++c) {
        double w = dilution != nullptr ? dilution->raw()[c] : 1.0;
        if (p.is_zero_cell(c) || w <= 0.0) {
            continue;
        }
        std::size_t b = blocks.block_of_cell[c];
        if (ref[b] == none) {
            ref[b] = c;
        }
        mass[b] += w;
        for (std::size_t a = 0; a < q; ++a) {
            dev[b * q + a] += w * (p.at(c, static_cast<int>(a)) - p.at(ref[b], static_cast<int>(a)));
        }
    }
    CoarseGrained out;
    out.zero_mass_block.assign(blocks.blocks, false);
    std::vector<double> avg(blocks.blocks * q, 0.0);
    for (std::size_t b = 0; b < blocks.blocks; ++b) {
        if (ref[b] == none) {
            out.zero_mass_block[b] = true;
            continue;
        }
        for (std::size_t a = 0; a < q; ++a) {
            avg[b * q + a] = p.at(ref[b], static_cast<int>(a)) + dev[b * q + a] / mass[b];
        }
    }
    std::vector<double> v(p.cells() * q);
    for (std::size_t c = 0; c < p.cells(); ++c) {
        std::size_t b = blocks.block_of_cell[c];
        std::copy_n(avg.begin() + static_cast<std::ptrdiff_t>(b * q), q, v.begin() + static_cast<std::ptrdiff_t>(c * q));
    }
    out.profile = DensityProfile(p.mesh(), p.q(), std::move(v));
    return out;
}

/// Color frequencies of the configuration's sites within each mesh cell
/// (site x belongs to cell floor(M x / n)). Cells without sites get zero rows.
inline DensityProfile empirical_to_mesh(const EmpiricalProfile& e, const TorusGrid& mesh) {
    require(e.grid().dim() == mesh.dim(), "empirical_to_mesh: dimension mismatch");
    const auto q = static_cast<std::size_t>(e.q());
    std::vector<double> counts(mesh.size() * q, 0.0);
    std::vector<double> totals(mesh.size(), 0.0);
    for (int a = 0; a < e.q(); ++a) {
        for (std::size_t x : e.sites(a)) {
            std::size_t c = mesh.site_of(e.grid().point(x));
            counts[c * q + static_cast<std::size_t>(a)] += 1.0;
            totals[c] += 1.0;
        }
    }
    for (std::size_t c = 0; c < mesh.size(); ++c) {
        if (totals[c] > 0.0) {
            for (std::size_t a = 0; a < q; ++a) {
                counts[c * q + a] /= totals[c];
            }
        }
    }
    return DensityProfile(mesh, e.q(), std::move(counts));
}

struct RealizedProfile {
    ColorConfiguration configuration;
    DensityProfile achieved;
    double max_error = 0.0;
};

/// Deterministic periodic coloring of a grid following a target profile.
///
/// Sites of each mesh cell are visited in index order; the j-th gets the color
/// c maximizing (j+1) alpha_c - count_c (ties to the lowest color), which keeps
/// every running count within one of its target.
inline RealizedProfile realize_profile(const DensityProfile& target, const TorusGrid& grid) {
    require(target.mesh().dim() == grid.dim(), "realize_profile: dimension mismatch");
    const auto q = static_cast<std::size_t>(target.q());
    std::vector<std::vector<std::size_t>> members(target.cells());
    for (std::size_t x = 0; x < grid.size(); ++x) {
        members[target.mesh().site_of(grid.point(x))].push_back(x);
    }
    std::vector<Color> colors(grid.size(), 0);
    std::vector<double> achieved(target.cells() * q, 0.0);
    double worst = 0.0;
    for (std::size_t c = 0; c < target.cells(); ++c) {
        if (members[c].empty()) {
            throw Infeasible("realize_profile: mesh cell contains no site of the grid");
        }
        if (target.is_zero_cell(c)) {
            throw Infeasible("realize_profile: target cell has zero mass");
        }
        auto alpha = target.cell(c);
        std::vector<double> count(q, 0.0);
        for (std::size_t j = 0; j < members[c].size(); ++j) {
            std::size_t best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < q; ++a) {
                double score = static_cast<double>(j + 1) * alpha[a] - count[a];
                if (score > best_score + 1e-12) {
                    best_score = score;
                    best = a;
                }
            }
            count[best] += 1.0;
            colors[members[c][j]] = static_cast<Color>(best);
        }
        for (std::size_t a = 0; a < q; ++a) {
            achieved[c * q + a] = count[a] / static_cast<double>(members[c].size());
            worst = std::max(worst, std::abs(achieved[c * q + a] - alpha[a]));
        }
    }
    return RealizedProfile{ColorConfiguration(Subvolume::full(grid), std::move(colors), target.q()),
                           DensityProfile(target.mesh(), target.q(), std::move(achieved)), worst};
}

struct LevelsetRow {
    int n = 0;
    std::size_t sites = 0;
    double distance = 0.0;
    double tail = 0.0;
};

struct LevelsetReport {
    std::vector<LevelsetRow> rows;
    bool decreasing = false;
};

/// Weak distance between the normalized counting measure of each Lambda_n
/// and rho~ lambda, for a ladder of subvolumes.
inline LevelsetReport levelset_dilution(std::span<const Subvolume> ladder, const DilutionField& target,
                                        std::size_t truncation = 64) {
    TestFunctionFamily family(target.mesh().dim(), 1, truncation);
    auto ref = dilution_measure(target);
    LevelsetReport rep;
    for (const auto& v : ladder) {
        auto d = weak_distance(counting_measure(v), ref, family, truncation);
        rep.rows.push_back(LevelsetRow{v.grid().n(), v.size(), d.value, d.tail});
    }
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        if (rep.rows[i].distance > rep.rows[i - 1].distance + 1e-15) {
            rep.decreasing = false;
        }
    }
    return rep;
}

/// Sites x whose embedded point satisfies pred(x/n).
template <typename Pred>
Subvolume levelset(const TorusGrid& grid, Pred&& pred) {
    std::vector<std::size_t> s;
    for (std::size_t x = 0; x < grid.size(); ++x) {
        if (pred(grid.point(x), x)) {
            s.push_back(x);
        }
    }
    return Subvolume(grid, std::move(s));
}

}

#endif
