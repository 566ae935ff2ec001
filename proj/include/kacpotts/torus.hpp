#ifndef KACPOTTS_TORUS_HPP
#define KACPOTTS_TORUS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace kacpotts {

constexpr int max_dimension = 3;

/// A point of the continuum torus [0,1)^d; unused trailing coordinates are 0.
using Point = std::array<double, max_dimension>;
using Coords = std::array<int, max_dimension>;

/// The discrete torus (Z/nZ)^d with sites embedded at x/n in [0,1)^d.
///
/// Sites are numbered lexicographically with the first axis slowest, so
/// index = ((x0 * n) + x1) * n + x2.
class TorusGrid {
public:
    TorusGrid() = default;

    TorusGrid(int dim, int n) : dim_(dim), n_(n) {
        require(dim >= 1 && dim <= max_dimension, "TorusGrid: dimension must be in 1..3");
        require(n >= 1, "TorusGrid: sites per axis must be positive");
        size_ = 1;
        for (int i = 0; i < dim; ++i) {
            size_ *= static_cast<std::size_t>(n);
        }
    }

    int dim() const { return dim_; }
    int n() const { return n_; }
    std::size_t size() const { return size_; }

    Coords coords(std::size_t index) const {
        Coords c{0, 0, 0};
        for (int axis = dim_ - 1; axis >= 0; --axis) {
            c[axis] = static_cast<int>(index % static_cast<std::size_t>(n_));
            index /= static_cast<std::size_t>(n_);
        }
        return c;
    }

    std::size_t index(const Coords& c) const {
        std::size_t idx = 0;
        for (int axis = 0; axis < dim_; ++axis) {
            idx = idx * static_cast<std::size_t>(n_) + static_cast<std::size_t>(wrap(c[axis]));
        }
        return idx;
    }

    int wrap(int x) const {
        int r = x % n_;
        return r < 0 ? r + n_ : r;
    }

    /// Site index of the displacement x - y (taken mod n per axis).
    std::size_t difference(std::size_t x, std::size_t y) const {
        if (dim_ == 1) {
            return x >= y ? x - y : x + static_cast<std::size_t>(n_) - y;
        }
        Coords a = coords(x);
        Coords b = coords(y);
        for (int axis = 0; axis < dim_; ++axis) {
            a[axis] -= b[axis];
        }
        return index(a);
    }

    Point point(std::size_t index) const {
        Coords c = coords(index);
        Point p{0.0, 0.0, 0.0};
        for (int axis = 0; axis < dim_; ++axis) {
            p[axis] = static_cast<double>(c[axis]) / n_;
        }
        return p;
    }

    /// Displacement of a site index reduced to the fundamental domain [-1/2,1/2)^d.
    Point displacement(std::size_t index) const {
        Coords c = coords(index);
        Point p{0.0, 0.0, 0.0};
        for (int axis = 0; axis < dim_; ++axis) {
            int m = c[axis];
            if (2 * m >= n_) {
                m -= n_;
            }
            p[axis] = static_cast<double>(m) / n_;
        }
        return p;
    }

    /// Site floor(n*u) for a continuum point u.
    std::size_t site_of(const Point& u) const {
        Coords c{0, 0, 0};
        for (int axis = 0; axis < dim_; ++axis) {
            double v = u[axis] - std::floor(u[axis]);
            c[axis] = std::min(n_ - 1, static_cast<int>(std::floor(v * n_)));
        }
        return index(c);
    }

    bool operator==(const TorusGrid&) const = default;

    std::string describe() const {
        return "d=" + std::to_string(dim_) + ",n=" + std::to_string(n_);
    }

private:
    int dim_ = 1;
    int n_ = 1;
    std::size_t size_ = 1;
};

/// Reduces each coordinate of v to [-1/2, 1/2).
inline Point reduce_to_fundamental(Point v, int dim) {
    for (int axis = 0; axis < dim; ++axis) {
        v[axis] -= std::floor(v[axis] + 0.5);
    }
    return v;
}

/// One real value per site of a grid.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const TorusGrid& grid, double fill = 0.0)
        : grid_(grid), values_(grid.size(), fill) {}
    ScalarField(const TorusGrid& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        require(values_.size() == grid_.size(), "ScalarField: value count must equal n^d");
    }

    const TorusGrid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    double mean() const {
        double s = 0.0;
        for (double v : values_) {
            s += v;
        }
        return s / static_cast<double>(values_.size());
    }

    bool all_finite() const {
        for (double v : values_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

private:
    TorusGrid grid_;
    std::vector<double> values_;
};

/// Riemann-sum inner product <f,g> = n^-d sum_x f(x) g(x).
inline double inner(const ScalarField& f, const ScalarField& g) {
    if (!(f.grid() == g.grid())) {
        throw GridMismatch("inner: fields live on different grids");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        s += f[i] * g[i];
    }
    return s / static_cast<double>(f.size());
}

}

#endif
