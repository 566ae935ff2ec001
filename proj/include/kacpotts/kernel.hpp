#ifndef KACPOTTS_KERNEL_HPP
#define KACPOTTS_KERNEL_HPP

#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"
#include "torus.hpp"

namespace kacpotts {

enum class KernelKind { uniform, wrapped_gaussian, cosine, box };

inline std::string to_string(KernelKind k) {
    switch (k) {
    case KernelKind::uniform: return "uniform";
    case KernelKind::wrapped_gaussian: return "wrapped-gaussian";
    case KernelKind::cosine: return "cosine";
    case KernelKind::box: return "box";
    }
    return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "uniform") return KernelKind::uniform;
    if (s == "wrapped-gaussian" || s == "gaussian") return KernelKind::wrapped_gaussian;
    if (s == "cosine") return KernelKind::cosine;
    if (s == "box") return KernelKind::box;
    throw InvalidArgument("unknown kernel type '" + s + "'");
}

/// Symmetric, nonnegative interaction function on T^d with unit integral.
///
/// All kernels are products of one-dimensional factors, each of which
/// integrates to one over [-1/2,1/2):
///   uniform           1
///   wrapped-gaussian  periodized N(0, bandwidth^2) density
///   cosine            1 + cos(2 pi v)
///   box               1{|v| <= radius} / (2 radius),  0 < radius <= 1/2
class KacKernel {
public:
    static KacKernel uniform() { return KacKernel(KernelKind::uniform, 0.0); }
    static KacKernel cosine() { return KacKernel(KernelKind::cosine, 0.0); }

    static KacKernel wrapped_gaussian(double bandwidth) {
        require(bandwidth > 0.0 && std::isfinite(bandwidth), "wrapped-gaussian: bandwidth must be positive");
        return KacKernel(KernelKind::wrapped_gaussian, bandwidth);
    }

    static KacKernel box(double radius) {
        require(radius > 0.0 && radius <= 0.5, "box: radius must lie in (0, 1/2]");
        return KacKernel(KernelKind::box, radius);
    }

    KernelKind kind() const { return kind_; }
    /// Bandwidth for the gaussian, radius for the box, unused otherwise.
    double parameter() const { return param_; }

    double operator()(const Point& v, int dim) const {
        Point w = reduce_to_fundamental(v, dim);
        double value = 1.0;
        for (int axis = 0; axis < dim; ++axis) {
            value *= factor(w[axis]);
        }
        return value;
    }

    std::string describe() const {
        std::string s = to_string(kind_);
        if (kind_ == KernelKind::wrapped_gaussian || kind_ == KernelKind::box) {
            s += "(" + std::to_string(param_) + ")";
        }
        return s;
    }

    bool operator==(const KacKernel&) const = default;

private:
    KacKernel(KernelKind kind, double param) : kind_(kind), param_(param) {}

    double factor(double v) const {
        using std::numbers::pi;
        switch (kind_) {
        case KernelKind::uniform:
            return 1.0;
        case KernelKind::cosine:
            return 1.0 + std::cos(2.0 * pi * v);
        case KernelKind::box: {
            // Half height on the edge, so grid samples form the trapezoid rule for the indicator.
            const double d = std::abs(v) - param_;
            if (std::abs(d) <= 1e-12 * param_) {
                return 0.5 / (2.0 * param_);
            }
            return d < 0.0 ? 1.0 / (2.0 * param_) : 0.0;
        }
        case KernelKind::wrapped_gaussian:
            return param_ >= 0.2 ? gaussian_fourier(v) : gaussian_images(v);
        }
        return 0.0;
    }

    // Theta-series form 1 + 2 sum_k exp(-2 pi^2 k^2 s^2) cos(2 pi k v); fast for wide kernels.
    double gaussian_fourier(double v) const {
        using std::numbers::pi;
        double sum = 1.0;
        for (int k = 1; k < 10000; ++k) {
            double w = std::exp(-2.0 * pi * pi * k * k * param_ * param_);
            if (w < 1e-18) {
                break;
            }
            sum += 2.0 * w * std::cos(2.0 * pi * k * v);
        }
        return sum;
    }

    // Image sum sum_m phi((v+m)/s)/s; fast for narrow kernels.
    double gaussian_images(double v) const {
        using std::numbers::pi;
        const double norm = 1.0 / (param_ * std::sqrt(2.0 * pi));
        double sum = 0.0;
        int reach = 1 + static_cast<int>(std::ceil(9.0 * param_));
        for (int m = -reach; m <= reach; ++m) {
            double z = (v + m) / param_;
            sum += std::exp(-0.5 * z * z);
        }
        return norm * sum;
    }

    KernelKind kind_ = KernelKind::uniform;
    double param_ = 0.0;
};

/// J(v) for a point of the torus.
inline double kernel_value(const KacKernel& kernel, const Point& v, int dim) {
    return kernel(v, dim);
}

/// Stencil with entry J(x/n) at site x (x read as the minimal periodic displacement).
///
/// With `renormalize` the entries are rescaled so that n^-d sum_x J(x/n) = 1
/// holds exactly at this n; otherwise the raw Riemann samples are kept.
inline ScalarField discretize_kernel(const KacKernel& kernel, const TorusGrid& grid, bool renormalize = true) {
    ScalarField stencil(grid);
    for (std::size_t x = 0; x < grid.size(); ++x) {
        stencil[x] = kernel(grid.displacement(x), grid.dim());
    }
    if (renormalize) {
        double m = stencil.mean();
        if (!(m > 0.0)) {
            throw InvalidArgument("discretize_kernel: stencil has zero mass at this resolution");
        }
        for (std::size_t x = 0; x < grid.size(); ++x) {
            stencil[x] /= m;
        }
    }
    return stencil;
}

/// True when every stencil entry equals the first one (the mean-field case).
inline bool is_constant(const ScalarField& stencil) {
    for (std::size_t i = 1; i < stencil.size(); ++i) {
        if (stencil[i] != stencil[0]) {
            return false;
        }
    }
    return true;
}

}

#endif
