#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include "choquard/errors.hpp"

namespace choquard {

// Periodic box [-L/2, L/2)^N sampled on M points per axis, row-major layout.
// Samples x_j = -L/2 + j*h, frequencies xi_k = (2*pi/L)*k_wrapped with
// k_wrapped = k for k < M/2 and k - M otherwise.
struct GridSpec {
    int dim = 0;
    int points = 0;
    double box = 0.0;

    double spacing() const { return box / points; }

    std::size_t n() const {
        std::size_t total = 1;
        for (int d = 0; d < dim; ++d) total *= static_cast<std::size_t>(points);
        return total;
    }

    double cell_volume() const { return std::pow(spacing(), dim); }

    double coord(int j) const { return -box / 2.0 + j * spacing(); }

    int wrap(int k) const { return k < points / 2 ? k : k - points; }

    double freq(int k) const {
        return 2.0 * std::numbers::pi / box * wrap(k);
    }

    void validate() const {
        if (dim < 1 || dim > 3)
            throw InvalidInputError("grid dim must be 1, 2, or 3; got " + std::to_string(dim));
        if (points < 8 || points % 2 != 0)
            throw InvalidInputError("grid points must be even and >= 8; got " + std::to_string(points));
        if (!(box > 0.0) || !std::isfinite(box))
            throw InvalidInputError("grid box length must be positive and finite");
        std::size_t total = 1;
        for (int d = 0; d < dim; ++d) {
            if (total > (std::size_t{1} << 31) / static_cast<std::size_t>(points))
                throw InvalidInputError("grid point count exceeds addressable limit");
            total *= static_cast<std::size_t>(points);
        }
    }

    bool operator==(const GridSpec&) const = default;
};

// Decodes a flat row-major index into per-axis indices (unused axes get 0).
inline std::array<int, 3> decode_index(const GridSpec& g, std::size_t flat) {
    std::array<int, 3> idx{0, 0, 0};
    for (int d = g.dim - 1; d >= 0; --d) {
        idx[d] = static_cast<int>(flat % static_cast<std::size_t>(g.points));
        flat /= static_cast<std::size_t>(g.points);
    }
    return idx;
}

inline std::size_t encode_index(const GridSpec& g, const std::array<int, 3>& idx) {
    std::size_t flat = 0;
    for (int d = 0; d < g.dim; ++d)
        flat = flat * static_cast<std::size_t>(g.points) + static_cast<std::size_t>(idx[d]);
    return flat;
}

struct Field {
    GridSpec grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const GridSpec& g) : grid(g), values(g.n(), 0.0) {}
    Field(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    void validate() const {
        grid.validate();
        if (values.size() != grid.n())
            throw InvalidInputError("field length does not match grid point count");
        for (double x : values)
            if (!std::isfinite(x)) throw InvalidInputError("field contains non-finite values");
    }
};

struct SpectralField {
    GridSpec grid;
    std::vector<std::complex<double>> coeffs;

    SpectralField() = default;
    explicit SpectralField(const GridSpec& g) : grid(g), coeffs(g.n(), {0.0, 0.0}) {}

    std::size_t size() const { return coeffs.size(); }
};

// Compensated (Kahan) accumulator: keeps reduction round-off at O(eps)
// independent of term count.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        double y = x - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }

    double value() const { return sum; }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
    if (!(a == b)) throw InvalidInputError("grid mismatch between fields");
}

// Circular shift by whole cells along each axis (periodic translation).
inline Field circular_shift(const Field& u, const std::array<int, 3>& cells) {
    const GridSpec& g = u.grid;
    const int M = g.points;
    Field out(g);
    const std::size_t n = g.n();
    for (std::size_t i = 0; i < n; ++i) {
        auto idx = decode_index(g, i);
        std::array<int, 3> src = idx;
        for (int d = 0; d < g.dim; ++d) {
            int s = ((idx[d] - cells[d]) % M + M) % M;
            src[d] = s;
        }
        out[i] = u[encode_index(g, src)];
    }
    return out;
}

inline double linf_norm(const Field& u) {
    double m = 0.0;
    for (double x : u.values) m = std::max(m, std::abs(x));
    return m;
}

// Centered Gaussian exp(-|x|^2 / width^2).
inline Field make_gaussian(const GridSpec& g, double width) {
    g.validate();
    if (!(width > 0.0)) throw InvalidInputError("gaussian width must be positive");
    Field out(g);
    const std::size_t n = g.n();
    for (std::size_t i = 0; i < n; ++i) {
        auto idx = decode_index(g, i);
        double r2 = 0.0;
        for (int d = 0; d < g.dim; ++d) {
            double x = g.coord(idx[d]);
            r2 += x * x;
        }
        out[i] = std::exp(-r2 / (width * width));
    }
    return out;
}

}
