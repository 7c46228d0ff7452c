#pragma once

#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "choquard/grid.hpp"

namespace choquard {
namespace detail {

// FFTW's planner is not thread-safe; plan creation is serialized and plans
// are cached per (dim, points, direction). Plans are created with
// FFTW_UNALIGNED so fftw_execute_dft may run on any caller buffer, and are
// always single-threaded: transform output must be bit-identical regardless
// of the worker count used elsewhere.
class PlanCache {
public:
    static fftw_plan get(int dim, int points, int sign) {
        static PlanCache cache;
        std::lock_guard<std::mutex> lock(cache.mutex_);
        auto key = std::make_tuple(dim, points, sign);
        auto it = cache.plans_.find(key);
        if (it != cache.plans_.end()) return it->second;

        std::size_t n = 1;
        for (int d = 0; d < dim; ++d) n *= static_cast<std::size_t>(points);
        std::vector<std::complex<double>> scratch(n);
        std::vector<int> dims(static_cast<std::size_t>(dim), points);
        fftw_plan plan = fftw_plan_dft(
            dim, dims.data(),
            reinterpret_cast<fftw_complex*>(scratch.data()),
            reinterpret_cast<fftw_complex*>(scratch.data()),
            sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        cache.plans_.emplace(key, plan);
        return plan;
    }

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }
    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void execute_dft(int dim, int points, int sign,
                        std::vector<std::complex<double>>& buf) {
    fftw_plan plan = PlanCache::get(dim, points, sign);
    fftw_execute_dft(plan,
                     reinterpret_cast<fftw_complex*>(buf.data()),
                     reinterpret_cast<fftw_complex*>(buf.data()));
}

// Parity of the per-axis index sum decides the centering phase: with
// x_j = -L/2 + j*h and xi_k = (2*pi/L)*k_wrapped,
// exp(-i*xi_k*x_j) = (-1)^k * exp(-2*pi*i*k*j/M) per axis (M even).
inline int index_parity(const GridSpec& g, std::size_t flat) {
    int s = 0;
    for (int d = g.dim - 1; d >= 0; --d) {
        s += static_cast<int>(flat % static_cast<std::size_t>(g.points));
        flat /= static_cast<std::size_t>(g.points);
    }
    return s & 1;
}

}

// coeffs(k) = h^N * sum_j u(x_j) exp(-i xi_k . x_j), the quadrature
// approximation of the continuum transform over the centered box.
inline SpectralField forward_transform(const Field& u) {
    u.validate();
    const GridSpec& g = u.grid;
    const std::size_t n = g.n();
    SpectralField out(g);
    for (std::size_t i = 0; i < n; ++i) out.coeffs[i] = u[i];
    detail::execute_dft(g.dim, g.points, FFTW_FORWARD, out.coeffs);
    const double scale = g.cell_volume();
    for (std::size_t k = 0; k < n; ++k) {
        double ph = detail::index_parity(g, k) ? -scale : scale;
        out.coeffs[k] *= ph;
    }
    return out;
}

// u(x_j) = L^{-N} sum_k coeffs(k) exp(i xi_k . x_j). The input must carry
// Hermitian symmetry; the imaginary residue is checked against a 1e-10
// relative tolerance before being discarded.
inline Field inverse_transform(const SpectralField& U) {
    const GridSpec& g = U.grid;
    g.validate();
    const std::size_t n = g.n();
    if (U.coeffs.size() != n)
        throw InvalidInputError("spectral field length does not match grid");

    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k < n; ++k) {
        double ph = detail::index_parity(g, k) ? -1.0 : 1.0;
        buf[k] = ph * U.coeffs[k];
    }
    detail::execute_dft(g.dim, g.points, FFTW_BACKWARD, buf);

    const double scale = 1.0 / std::pow(g.box, g.dim);
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_re = std::max(max_re, std::abs(buf[i].real()));
        max_im = std::max(max_im, std::abs(buf[i].imag()));
    }
    if (max_im > 1e-10 * std::max(max_re, 1e-300))
        throw InvalidInputError(
            "inverse transform input violates Hermitian symmetry: relative "
            "imaginary residue " + std::to_string(max_im / std::max(max_re, 1e-300)));

    Field out(g);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * scale;
    return out;
}

}
