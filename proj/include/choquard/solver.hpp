#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "choquard/functionals.hpp"
#include "choquard/rng.hpp"

namespace choquard {

enum class Classification { converged, concentrating, spreading, maxiter };

inline std::string to_string(Classification c) {
    switch (c) {
        case Classification::converged: return "converged";
        case Classification::concentrating: return "concentrating";
        case Classification::spreading: return "spreading";
        case Classification::maxiter: return "maxiter";
    }
    return "maxiter";
}

inline Classification classification_from_string(const std::string& s) {
    if (s == "converged") return Classification::converged;
    if (s == "concentrating") return Classification::concentrating;
    if (s == "spreading") return Classification::spreading;
    if (s == "maxiter") return Classification::maxiter;
    throw InvalidInputError("unknown classification label: " + s);
}

struct SolverConfig {
    double tau0 = 1.0;
    double backtrack = 0.5;
    double grow = 1.1;
    double tol = 1e-8;
    int max_iter = 20000;
    int recenter_every = 10;  // 0 = off
    bool precondition = true;
    std::vector<Field> deflation_targets;
    bool symmetrize = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(tau0 > 0.0)) throw InvalidInputError("tau0 must be positive");
        if (!(backtrack > 0.0 && backtrack < 1.0))
            throw InvalidInputError("backtrack factor must lie in (0,1)");
        if (!(grow >= 1.0)) throw InvalidInputError("grow factor must be >= 1");
        if (!(tol > 0.0)) throw InvalidInputError("tol must be positive");
        if (max_iter < 1) throw InvalidInputError("max_iter must be >= 1");
        if (recenter_every < 0) throw InvalidInputError("recenter_every must be >= 0");
    }
};

struct SolutionReport {
    double mp_estimate = 0.0;
    double residual = 0.0;
    double nehari = 0.0;
    double pohozaev = 0.0;
    int iters = 0;
    Classification classification = Classification::maxiter;
    std::vector<double> participation_ratio_history;
    std::vector<double> linf_history;
    std::vector<double> energy_history;
    double lambda = 0.0;
    bool dterm_negative_seen = false;
};

// PR = (h^N sum u^2)^2 / (L^N h^N sum u^4): 1 on uniform fields, 1/M^N on a
// one-cell spike; the inverse-concentration statistic of |u|^2.
inline double participation_ratio(const Field& u) {
    KahanSum s2, s4;
    for (double x : u.values) {
        double x2 = x * x;
        s2.add(x2);
        s4.add(x2 * x2);
    }
    double hN = u.grid.cell_volume();
    double LN = std::pow(u.grid.box, u.grid.dim);
    double num = hN * s2.value();
    double den = LN * hN * s4.value();
    return den <= 0.0 ? 0.0 : num * num / den;
}

// t u with t = D(u)^{-1/(2p)}, so D(t u) = 1 exactly by homogeneity.
inline Field normalize_to_constraint(const Field& u, const ProblemParams& params) {
    double d = dterm(u, params);
    if (!(d > 0.0) || !std::isfinite(d))
        throw NonNormalizableError("cannot normalize: D(u) = " + std::to_string(d));
    double t = std::pow(d, -1.0 / (2.0 * params.p));
    Field out = u;
    for (double& x : out.values) x *= t;
    return out;
}

// Relative residual of the rescaled equation sqrt_op(u) = Ktilde(u), where
// Ktilde = (I_alpha * |u|^p) |u|^{p-2} u.
inline double equation_residual(const Field& u, const ProblemParams& params) {
    auto parts = detail::nonlocal_parts(u, params);
    Field chain = signed_pow_chain(u, params.p);
    Field su = sqrt_op(u);
    Field r(u.grid);
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i)
        r[i] = su[i] - parts.conv[i] * chain[i];
    return l2_norm(r) / std::max(l2_norm(su), defect_floor);
}

// Raw constrained gradient r = sqrt_op(u) - lambda p Ktilde(u) with
// lambda = A(u)/p from pairing the stationarity system with u on D(u) = 1;
// optionally smoothed by the (1+|xi|^2)^{-1/2} preconditioner.
inline std::pair<Field, double> constrained_gradient(const Field& u,
                                                     const ProblemParams& params,
                                                     const SolverConfig& config) {
    double d = dterm(u, params);
    if (std::abs(d - 1.0) > 1e-8)
        throw InvalidInputError("constrained_gradient requires D(u) = 1 within 1e-8; got D = " +
                                std::to_string(d));
    double A = quadratic_form_A(u);
    double lambda = A / params.p;
    auto parts = detail::nonlocal_parts(u, params);
    Field chain = signed_pow_chain(u, params.p);
    Field su = sqrt_op(u);
    Field g(u.grid);
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i)
        g[i] = su[i] - A * parts.conv[i] * chain[i];
    if (config.precondition) g = inv_sqrt_op(g);
    return {std::move(g), lambda};
}

// Shifts u by whole cells so the periodic centroid of |u|^2 (circular-mean
// angle per axis) lands within one cell of the box center.
inline Field recenter(const Field& u) {
    const GridSpec& g = u.grid;
    const int M = g.points;
    double total = 0.0;
    for (double x : u.values) total += x * x;
    if (total <= 0.0) throw InvalidInputError("recenter requires a nonzero field");

    std::array<int, 3> shift{0, 0, 0};
    const std::size_t n = g.n();
    for (int d = 0; d < g.dim; ++d) {
        KahanSum c, s;
        for (std::size_t i = 0; i < n; ++i) {
            double w = u[i] * u[i];
            double theta = 2.0 * std::numbers::pi * decode_index(g, i)[d] / M;
            c.add(w * std::cos(theta));
            s.add(w * std::sin(theta));
        }
        double mu = std::atan2(s.value(), c.value()) * M / (2.0 * std::numbers::pi);
        mu = std::fmod(mu + M, static_cast<double>(M));
        shift[d] = static_cast<int>(std::lround(M / 2.0 - mu)) % M;
        if (shift[d] < 0) shift[d] += M;
    }
    if (shift == std::array<int, 3>{0, 0, 0}) return u;
    return circular_shift(u, shift);
}

namespace detail {

inline void hyperoctahedral_images(const GridSpec& g, std::size_t flat,
                                   std::vector<std::size_t>& out) {
    out.clear();
    auto idx = decode_index(g, flat);
    const int M = g.points;
    // Iterate axis permutations of the first dim entries and all per-axis
    // reflections i -> (M - i) mod M (x -> -x about the box center).
    std::vector<std::array<int, 3>> perms;
    std::array<int, 3> p{0, 1, 2};
    do {
        perms.push_back(p);
    } while (std::next_permutation(p.begin(), p.begin() + g.dim));
    for (const auto& pr : perms) {
        for (int mask = 0; mask < (1 << g.dim); ++mask) {
            std::array<int, 3> img{0, 0, 0};
            for (int d = 0; d < g.dim; ++d) {
                int v = idx[pr[d]];
                if (mask & (1 << d)) v = (M - v) % M;
                img[d] = v;
            }
            out.push_back(encode_index(g, img));
        }
    }
}

}

// Average over the hyperoctahedral group (axis permutations and reflections
// about the box center). Orbit values are summed in sorted order, which makes
// the projection exactly idempotent: a second application sees identical
// sorted orbits pointwise.
inline Field symmetrize(const Field& u) {
    const GridSpec& g = u.grid;
    Field out(g);
    const std::size_t n = g.n();
    std::vector<std::size_t> images;
    std::vector<double> vals;
    for (std::size_t i = 0; i < n; ++i) {
        detail::hyperoctahedral_images(g, i, images);
        vals.clear();
        for (std::size_t src : images) vals.push_back(u[src]);
        std::sort(vals.begin(), vals.end());
        if (vals.front() == vals.back()) {
            out[i] = vals.front();  // orbit already constant: average exactly
            continue;
        }
        KahanSum acc;
        for (double v : vals) acc.add(v);
        out[i] = acc.value() / static_cast<double>(vals.size());
    }
    return out;
}

enum class InitKind { gaussian, random_smooth };

// Default initial datum: centered Gaussian of width L/8 (or the given
// width), amplitude fixed later by normalize_to_constraint. The random kind
// modulates the Gaussian by smooth deterministic noise derived from seed.
inline Field make_init(InitKind kind, const GridSpec& g, double width,
                       std::uint64_t seed) {
    double w = width > 0.0 ? width : g.box / 8.0;
    Field base = make_gaussian(g, w);
    if (kind == InitKind::gaussian) return base;

    SplitMix64 rng(seed ^ 0x5bf03635d78cea4dULL);
    const int modes = 3;
    std::vector<double> amp, ph;
    for (int d = 0; d < g.dim; ++d)
        for (int m = 1; m <= modes; ++m) {
            amp.push_back(rng.normal());
            ph.push_back(2.0 * std::numbers::pi * rng.uniform());
        }
    const std::size_t n = g.n();
    Field out(g);
    for (std::size_t i = 0; i < n; ++i) {
        auto idx = decode_index(g, i);
        double mod = 0.0;
        std::size_t t = 0;
        for (int d = 0; d < g.dim; ++d)
            for (int m = 1; m <= modes; ++m, ++t)
                mod += amp[t] * std::cos(2.0 * std::numbers::pi * m * idx[d] / g.points + ph[t]);
        out[i] = base[i] * (1.0 + 0.3 * mod / std::sqrt(static_cast<double>(g.dim * modes)));
    }
    return out;
}

namespace detail {

inline double deflation_factor(const Field& u, const std::vector<Field>& targets) {
    double f = 1.0;
    for (const Field& w : targets) {
        require_same_grid(u.grid, w.grid);
        Field diff(u.grid);
        const std::size_t n = u.size();
        for (std::size_t i = 0; i < n; ++i) diff[i] = u[i] - w[i];
        double dist2 = l2_inner(diff, diff);
        f *= 1.0 + 1.0 / std::max(dist2, 1e-30);
    }
    return f;
}

// L2 gradient of the deflation factor f(u) = prod_t (1 + 1/||u - w_t||^2):
// sum over targets of (prod of the other factors) * (-2 (u - w_t)/||u - w_t||^4).
// Scaling the gradient alone cannot move fixed points (a line search undoes
// any scalar), so the flow must descend on A*f; this term is what repels it.
inline Field deflation_gradient(const Field& u, const std::vector<Field>& targets) {
    const std::size_t n = u.size();
    std::vector<double> factors(targets.size());
    std::vector<double> dist2s(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        require_same_grid(u.grid, targets[t].grid);
        Field diff(u.grid);
        for (std::size_t i = 0; i < n; ++i) diff[i] = u[i] - targets[t][i];
        dist2s[t] = std::max(l2_inner(diff, diff), 1e-30);
        factors[t] = 1.0 + 1.0 / dist2s[t];
    }
    Field grad(u.grid);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        double others = 1.0;
        for (std::size_t s = 0; s < targets.size(); ++s)
            if (s != t) others *= factors[s];
        double c = -2.0 * others / (dist2s[t] * dist2s[t]);
        const Field& w = targets[t];
        for (std::size_t i = 0; i < n; ++i) grad[i] += c * (u[i] - w[i]);
    }
    return grad;
}

}

// Re-derives the classification from the recorded histories: detectors take
// precedence (they stop a run in-loop before it can converge), then the
// residual test, then maxiter.
inline Classification classify_run(const SolutionReport& report, const SolverConfig& config) {
    const auto& linf = report.linf_history;
    const auto& pr = report.participation_ratio_history;
    if (linf.empty() || pr.empty())
        throw InvalidInputError("classify_run requires non-empty histories");
    double linf_ratio = linf.back() / std::max(linf.front(), defect_floor);
    double pr_ratio = pr.back() / std::max(pr.front(), defect_floor);
    if (linf_ratio >= 10.0 && pr_ratio <= 0.1) return Classification::concentrating;
    if (linf_ratio <= 0.1 && (pr_ratio >= 10.0 || pr.back() >= 0.5))
        return Classification::spreading;
    if (report.residual <= config.tol) return Classification::converged;
    return Classification::maxiter;
}

// Sobolev-preconditioned normalized gradient flow on {D(u) = 1}: step
// u <- normalize(u - tau g), backtracking on plain decrease of A (shrink on
// failure, regrow on success capped at 10 tau0), recentering every
// recenter_every accepted steps. Stops on relative residual <= tol, detector
// fire, or max_iter. With deflation targets the direction and the line-search
// objective switch to A times the deflation factor; energy_history still
// records A, so it is only guaranteed monotone in the undeflated flow.
inline std::pair<Field, SolutionReport> solve_ground_state(const Field& init,
                                                           const ProblemParams& params,
                                                           const SolverConfig& config) {
    init.validate();
    config.validate();
    const GridSpec& g = init.grid;
    params.validate(g.dim);

    SolutionReport report;

    Field u = config.symmetrize ? symmetrize(init) : init;
    u = normalize_to_constraint(u, params);
    double A = quadratic_form_A(u);

    report.linf_history.push_back(linf_norm(u));
    report.participation_ratio_history.push_back(participation_ratio(u));
    report.energy_history.push_back(A);

    double tau = config.tau0;
    const double tau_cap = 10.0 * config.tau0;
    const double tau_floor = 1e-14 * config.tau0;
    double residual = std::numeric_limits<double>::infinity();
    Classification cls = Classification::maxiter;
    int accepted = 0;

    const std::size_t n = u.size();
    for (int it = 1; it <= config.max_iter; ++it) {
        auto parts = detail::nonlocal_parts(u, params);
        Field chain = signed_pow_chain(u, params.p);
        Field su = sqrt_op(u);
        Field r(g);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = su[i] - A * parts.conv[i] * chain[i];
        residual = l2_norm(r) / std::max(l2_norm(su), defect_floor);

        if (!std::isfinite(residual) || !std::isfinite(A))
            throw NumericAbortError("non-finite state at iteration " + std::to_string(it) +
                                    ": A = " + std::to_string(A) +
                                    ", residual = " + std::to_string(residual));
        if (residual <= config.tol) {
            cls = Classification::converged;
            break;
        }

        const bool deflating = !config.deflation_targets.empty();
        Field gdir = config.precondition ? inv_sqrt_op(r) : r;
        double F = A;
        if (deflating) {
            // descend on F = A * f instead of A: grad F / 2 = f r + (A/2) grad f.
            // The second term repels the flow from the targets; comparing F in
            // the line search turns each target into an infinite barrier.
            double f = detail::deflation_factor(u, config.deflation_targets);
            Field rep = detail::deflation_gradient(u, config.deflation_targets);
            if (config.precondition) rep = inv_sqrt_op(rep);
            for (std::size_t i = 0; i < n; ++i) gdir[i] = f * gdir[i] + 0.5 * A * rep[i];
            F = A * f;
        }

        bool stepped = false;
        while (tau >= tau_floor) {
            Field cand(g);
            for (std::size_t i = 0; i < n; ++i) cand[i] = u[i] - tau * gdir[i];
            double dc = dterm(cand, params);
            if (dc > 0.0 && std::isfinite(dc)) {  // overflow would normalize to zero
                double t = std::pow(dc, -1.0 / (2.0 * params.p));
                for (double& x : cand.values) x *= t;
                double Ac = quadratic_form_A(cand);
                double Fc = Ac;
                if (deflating && std::isfinite(Ac))
                    Fc = Ac * detail::deflation_factor(cand, config.deflation_targets);
                if (std::isfinite(Fc) && Fc < F) {
                    u = std::move(cand);
                    A = Ac;
                    tau = std::min(tau * config.grow, tau_cap);
                    stepped = true;
                    break;
                }
            } else {
                report.dterm_negative_seen = report.dterm_negative_seen || dc < 0.0;
            }
            tau *= config.backtrack;
        }
        if (!stepped) break;  // step size exhausted at the round-off plateau

        ++accepted;
        if (config.recenter_every > 0 && accepted % config.recenter_every == 0) {
            u = recenter(u);
            if (config.symmetrize) u = symmetrize(u);
            u = normalize_to_constraint(u, params);
            A = quadratic_form_A(u);
        }

        report.linf_history.push_back(linf_norm(u));
        report.participation_ratio_history.push_back(participation_ratio(u));
        report.energy_history.push_back(A);

        double linf_ratio = report.linf_history.back() / report.linf_history.front();
        double pr_ratio = report.participation_ratio_history.back() /
                          report.participation_ratio_history.front();
        if (linf_ratio >= 10.0 && pr_ratio <= 0.1) {
            cls = Classification::concentrating;
            break;
        }
        if (linf_ratio <= 0.1 &&
            (pr_ratio >= 10.0 || report.participation_ratio_history.back() >= 0.5)) {
            cls = Classification::spreading;
            break;
        }
    }

    if (cls != Classification::converged) {
        // measure the residual of the final state, not the pre-step one
        auto parts = detail::nonlocal_parts(u, params);
        Field chain = signed_pow_chain(u, params.p);
        Field su = sqrt_op(u);
        Field r(g);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = su[i] - A * parts.conv[i] * chain[i];
        residual = l2_norm(r) / std::max(l2_norm(su), defect_floor);
    }

    report.classification = cls;
    report.iters = accepted;
    report.residual = residual;
    report.mp_estimate = A;
    report.lambda = A / params.p;

    double t = std::pow(report.mp_estimate, 1.0 / (2.0 * params.p - 2.0));
    Field rescaled = u;
    for (double& x : rescaled.values) x *= t;
    report.nehari = nehari_defect(rescaled, params);
    report.pohozaev = pohozaev_defect(rescaled, params);
    return {std::move(u), std::move(report)};
}

inline std::pair<Field, SolutionReport> solve_ground_state(InitKind kind,
                                                           const GridSpec& grid,
                                                           const ProblemParams& params,
                                                           const SolverConfig& config,
                                                           double init_width = 0.0) {
    return solve_ground_state(make_init(kind, grid, init_width, config.seed), params, config);
}

// u = mp^{1/(2p-2)} w: pairing the stationarity system with w on D(w) = 1
// gives lambda = mp/p, and scaling by t with t^{2p-2} = mp absorbs it.
inline Field rescale_to_solution(const Field& w, double mp, const ProblemParams& params) {
    if (!(mp > 0.0)) throw InvalidInputError("rescale requires mp > 0");
    if (params.p == 1.0) throw InvalidInputError("rescale is singular at p = 1");
    double t = std::pow(mp, 1.0 / (2.0 * params.p - 2.0));
    Field out = w;
    for (double& x : out.values) x *= t;
    return out;
}

// Gradient flow on the deflated objective A(u) * prod_i (1 + 1/||u - w_i||^2):
// each found state w_i becomes an infinite barrier of the line search, and the
// product rule adds a repulsion term to the descent direction, so the flow
// settles elsewhere. Convergence (still judged by the undeflated equation
// residual) additionally requires a relative L2 distance >= 0.1 from every
// target; otherwise the run is demoted to maxiter with its history attached.
inline std::pair<Field, SolutionReport> deflated_solve(const std::vector<Field>& found,
                                                       const Field& init,
                                                       const ProblemParams& params,
                                                       const SolverConfig& config) {
    SolverConfig cfg = config;
    cfg.deflation_targets.clear();
    for (const Field& f : found)
        cfg.deflation_targets.push_back(normalize_to_constraint(f, params));

    auto [w, report] = solve_ground_state(init, params, cfg);

    if (report.classification == Classification::converged && !cfg.deflation_targets.empty()) {
        double wn = l2_norm(w);
        double min_rel = std::numeric_limits<double>::infinity();
        for (const Field& t : cfg.deflation_targets) {
            Field diff(w.grid);
            const std::size_t n = w.size();
            for (std::size_t i = 0; i < n; ++i) diff[i] = w[i] - t[i];
            min_rel = std::min(min_rel, l2_norm(diff) / std::max(wn, defect_floor));
        }
        if (min_rel < 0.1) report.classification = Classification::maxiter;
    }
    return {std::move(w), std::move(report)};
}

inline std::pair<Field, SolutionReport> deflated_solve(const std::vector<Field>& found,
                                                       InitKind kind, const GridSpec& grid,
                                                       const ProblemParams& params,
                                                       const SolverConfig& config,
                                                       double init_width = 0.0) {
    return deflated_solve(found, make_init(kind, grid, init_width, config.seed), params, config);
}

}
