#pragma once

#include <array>
#include <cmath>
#include <functional>

#include "choquard/fft.hpp"
#include "choquard/grid.hpp"

namespace choquard {

// Squared frequency |xi_k|^2 for a flat spectral index.
inline double freq_sq(const GridSpec& g, std::size_t flat) {
    double s = 0.0;
    for (int d = g.dim - 1; d >= 0; --d) {
        int k = static_cast<int>(flat % static_cast<std::size_t>(g.points));
        flat /= static_cast<std::size_t>(g.points);
        double xi = g.freq(k);
        s += xi * xi;
    }
    return s;
}

// Pointwise multiplication of Fourier coefficients by a symbol m(xi),
// supplied as a function of the frequency vector.
template <typename SymbolFn>
SpectralField apply_symbol(const SpectralField& U, SymbolFn&& m) {
    const GridSpec& g = U.grid;
    SpectralField out = U;
    const std::size_t n = g.n();
    for (std::size_t k = 0; k < n; ++k) {
        auto idx = decode_index(g, k);
        std::array<double, 3> xi{0.0, 0.0, 0.0};
        for (int d = 0; d < g.dim; ++d) xi[d] = g.freq(idx[d]);
        double mv = m(xi);
        if (!std::isfinite(mv))
            throw InvalidInputError("multiplier symbol is non-finite at a used frequency");
        out.coeffs[k] *= mv;
    }
    return out;
}

namespace detail {

template <typename Fn>
Field apply_radial_symbol(const Field& u, Fn&& m_of_xisq) {
    SpectralField U = forward_transform(u);
    const std::size_t n = U.size();
    for (std::size_t k = 0; k < n; ++k) {
        double mv = m_of_xisq(freq_sq(U.grid, k));
        if (!std::isfinite(mv))
            throw InvalidInputError("multiplier symbol is non-finite at a used frequency");
        U.coeffs[k] *= mv;
    }
    return inverse_transform(U);
}

}

// The equation's left-side operator: symbol (1+|xi|^2)^{1/2}.
inline Field sqrt_op(const Field& u) {
    return detail::apply_radial_symbol(u, [](double s) { return std::sqrt(1.0 + s); });
}

// Half of the left-side operator: symbol (1+|xi|^2)^{1/4} (the norm operator).
inline Field quarter_op(const Field& u) {
    return detail::apply_radial_symbol(u, [](double s) { return std::pow(1.0 + s, 0.25); });
}

// Smoothing inverse used as the descent preconditioner: (1+|xi|^2)^{-1/2}.
inline Field inv_sqrt_op(const Field& u) {
    return detail::apply_radial_symbol(u, [](double s) { return 1.0 / std::sqrt(1.0 + s); });
}

// h^N sum_j u_j v_j; discrete Plancherel pairing.
inline double l2_inner(const Field& u, const Field& v) {
    require_same_grid(u.grid, v.grid);
    KahanSum acc;
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) acc.add(u[i] * v[i]);
    return u.grid.cell_volume() * acc.value();
}

inline double l2_norm(const Field& u) { return std::sqrt(l2_inner(u, u)); }

// A(u) = L^{-N} sum_k (1+|xi_k|^2)^{1/2} |u_hat(k)|^2, the quadratic form
// minimized on the constraint manifold.
inline double quadratic_form_A(const Field& u) {
    SpectralField U = forward_transform(u);
    KahanSum acc;
    const std::size_t n = U.size();
    for (std::size_t k = 0; k < n; ++k)
        acc.add(std::sqrt(1.0 + freq_sq(U.grid, k)) * std::norm(U.coeffs[k]));
    return acc.value() / std::pow(u.grid.box, u.grid.dim);
}

// B(u) = L^{-N} sum_k |xi_k|^2 (1+|xi_k|^2)^{-1/2} |u_hat(k)|^2, the
// gradient part of the dilation derivative.
inline double quadratic_form_B(const Field& u) {
    SpectralField U = forward_transform(u);
    KahanSum acc;
    const std::size_t n = U.size();
    for (std::size_t k = 0; k < n; ++k) {
        double s = freq_sq(U.grid, k);
        acc.add(s / std::sqrt(1.0 + s) * std::norm(U.coeffs[k]));
    }
    return acc.value() / std::pow(u.grid.box, u.grid.dim);
}

}
