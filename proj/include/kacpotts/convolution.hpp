#ifndef KACPOTTS_CONVOLUTION_HPP
#define KACPOTTS_CONVOLUTION_HPP

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "error.hpp"
#include "torus.hpp"

namespace kacpotts {

enum class ConvolutionMethod { automatic, direct, fft };

namespace detail {

// The FFTW planner is not reentrant; execution of distinct plans is.
inline std::mutex& fftw_planner_lock() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(const TorusGrid& grid) : real_(grid.size()) {
        int dims[max_dimension];
        std::size_t complex_size = 1;
        for (int a = 0; a < grid.dim(); ++a) {
            dims[a] = grid.n();
            complex_size *= (a == grid.dim() - 1) ? static_cast<std::size_t>(grid.n() / 2 + 1)
                                                  : static_cast<std::size_t>(grid.n());
        }
        spectrum_.resize(complex_size);
        auto* c = reinterpret_cast<fftw_complex*>(spectrum_.data());
        std::lock_guard<std::mutex> lk(fftw_planner_lock());
        forward_ = fftw_plan_dft_r2c(grid.dim(), dims, real_.data(), c, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_c2r(grid.dim(), dims, c, real_.data(), FFTW_ESTIMATE);
    }

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    ~RealFft() {
        std::lock_guard<std::mutex> lk(fftw_planner_lock());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    std::vector<std::complex<double>> forward(std::span<const double> values) {
        std::copy(values.begin(), values.end(), real_.begin());
        fftw_execute(forward_);
        return spectrum_;
    }

    std::vector<double> backward(const std::vector<std::complex<double>>& spec) {
        std::copy(spec.begin(), spec.end(), spectrum_.begin());
        fftw_execute(backward_);
        return real_;
    }

private:
    std::vector<double> real_;
    std::vector<std::complex<double>> spectrum_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

}

/// Direct O(N^2) periodic convolution (J*f)(x) = n^-d sum_y J(x-y) f(y).
inline ScalarField convolve_direct(const ScalarField& stencil, const ScalarField& field) {
    if (!(stencil.grid() == field.grid())) {
        throw GridMismatch("convolve: stencil and field live on different grids");
    }
    const TorusGrid& grid = field.grid();
    const double inv = 1.0 / static_cast<double>(grid.size());
    ScalarField out(grid);
    for (std::size_t x = 0; x < grid.size(); ++x) {
        double s = 0.0;
        for (std::size_t y = 0; y < grid.size(); ++y) {
            s += stencil[grid.difference(x, y)] * field[y];
        }
        out[x] = s * inv;
    }
    return out;
}

/// FFT-based periodic convolution; same normalization as convolve_direct.
inline ScalarField convolve_fft(const ScalarField& stencil, const ScalarField& field) {
    if (!(stencil.grid() == field.grid())) {
        throw GridMismatch("convolve: stencil and field live on different grids");
    }
    const TorusGrid& grid = field.grid();
    detail::RealFft fft(grid);
    auto a = fft.forward(stencil.values());
    auto b = fft.forward(field.values());
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] *= b[k];
    }
    std::vector<double> r = fft.backward(a);
    const double n2 = static_cast<double>(grid.size()) * static_cast<double>(grid.size());
    for (double& v : r) {
        v /= n2;
    }
    return ScalarField(grid, std::move(r));
}

constexpr std::size_t fft_threshold_sites = 64;

inline ScalarField convolve(const ScalarField& stencil, const ScalarField& field,
                            ConvolutionMethod method = ConvolutionMethod::automatic) {
    if (method == ConvolutionMethod::automatic) {
        method = field.size() >= fft_threshold_sites ? ConvolutionMethod::fft : ConvolutionMethod::direct;
    }
    return method == ConvolutionMethod::fft ? convolve_fft(stencil, field) : convolve_direct(stencil, field);
}

}

#endif
