#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "choquard/parallel.hpp"
#include "choquard/solver.hpp"

namespace choquard {

struct SweepPlan {
    std::vector<GridSpec> grids;
    std::vector<double> alphas;
    std::vector<double> ps;
    SolverConfig config;
    int repeats = 1;
    std::uint64_t seed = 0;

    void validate() const {
        config.validate();
        if (repeats < 1) throw InvalidInputError("sweep repeats must be >= 1");
        for (const GridSpec& g : grids) {
            g.validate();
            for (double a : alphas)
                if (!(a > 0.0 && a < g.dim))
                    throw InvalidInputError("sweep alpha must lie in (0, N) for every grid");
        }
        for (double p : ps)
            if (!(p > 1.0)) throw InvalidInputError("sweep p must be > 1");
    }

    std::size_t case_count() const {
        return grids.size() * alphas.size() * ps.size() * static_cast<std::size_t>(repeats);
    }
};

struct SweepRow {
    int N = 0;
    double alpha = 0.0;
    double p = 0.0;
    double L = 0.0;
    int M = 0;
    int repeat = 0;
    double mp = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    double nehari = std::numeric_limits<double>::quiet_NaN();
    double pohozaev = std::numeric_limits<double>::quiet_NaN();
    std::string classification;  // enum label, or "error" for a failed row
    double seconds = 0.0;
    std::string error;  // failure message; empty when the row completed
};

struct SweepOutput {
    std::vector<SweepRow> rows;
    std::vector<Field> states;  // final field per row; empty values() on error
};

// One independent solve per (grid, alpha, p, repeat). Repeat 0 uses the
// Gaussian init, later repeats the seeded random one; every row's seed
// derives from (plan.seed, row index) so thread count cannot change results.
// Per-row failures are recorded in the row, never thrown.
inline SweepOutput sweep(const SweepPlan& plan) {
    plan.validate();

    std::vector<SweepRow> keys;
    keys.reserve(plan.case_count());
    for (const GridSpec& g : plan.grids)
        for (double a : plan.alphas)
            for (double p : plan.ps)
                for (int r = 0; r < plan.repeats; ++r) {
                    SweepRow row;
                    row.N = g.dim;
                    row.alpha = a;
                    row.p = p;
                    row.L = g.box;
                    row.M = g.points;
                    row.repeat = r;
                    keys.push_back(row);
                }

    SweepOutput out;
    out.rows = std::move(keys);
    out.states.resize(out.rows.size());

    std::vector<GridSpec> row_grid(out.rows.size());
    {
        std::size_t i = 0;
        for (const GridSpec& g : plan.grids)
            for (std::size_t a = 0; a < plan.alphas.size(); ++a)
                for (std::size_t p = 0; p < plan.ps.size(); ++p)
                    for (int r = 0; r < plan.repeats; ++r) row_grid[i++] = g;
    }

    parallel_for_index(out.rows.size(), [&](std::size_t i) {
        SweepRow& row = out.rows[i];
        const GridSpec& g = row_grid[i];
        ProblemParams params;
        params.alpha = row.alpha;
        params.p = row.p;
        SolverConfig cfg = plan.config;
        cfg.seed = derive_seed(plan.seed, static_cast<std::uint64_t>(i));
        auto t0 = std::chrono::steady_clock::now();
        try {
            InitKind kind = row.repeat == 0 ? InitKind::gaussian : InitKind::random_smooth;
            auto [w, report] = solve_ground_state(kind, g, params, cfg);
            row.mp = report.mp_estimate;
            row.residual = report.residual;
            row.nehari = report.nehari;
            row.pohozaev = report.pohozaev;
            row.classification = to_string(report.classification);
            out.states[i] = std::move(w);
        } catch (const std::exception& e) {
            row.classification = "error";
            row.error = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    std::vector<std::size_t> order(out.rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const SweepRow& x = out.rows[a];
        const SweepRow& y = out.rows[b];
        return std::tie(x.N, x.alpha, x.p, x.L, x.M, x.repeat) <
               std::tie(y.N, y.alpha, y.p, y.L, y.M, y.repeat);
    });
    SweepOutput sorted;
    sorted.rows.reserve(order.size());
    sorted.states.reserve(order.size());
    for (std::size_t i : order) {
        sorted.rows.push_back(std::move(out.rows[i]));
        sorted.states.push_back(std::move(out.states[i]));
    }
    return sorted;
}

inline const char* sweep_csv_header() {
    return "N,alpha,p,L,M,mp,residual,nehari,pohozaev,classification,seconds";
}

namespace detail {

inline std::string csv_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}

// Fixed-header CSV; wall time is the only column allowed to differ between
// reruns of the same plan.
inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << sweep_csv_header() << '\n';
    for (const SweepRow& r : rows) {
        os << r.N << ',' << detail::csv_number(r.alpha) << ',' << detail::csv_number(r.p) << ','
           << detail::csv_number(r.L) << ',' << r.M << ',' << detail::csv_number(r.mp) << ','
           << detail::csv_number(r.residual) << ',' << detail::csv_number(r.nehari) << ','
           << detail::csv_number(r.pohozaev) << ',' << r.classification << ','
           << detail::csv_number(r.seconds) << '\n';
    }
}

struct RefinementLevel {
    double L = 0.0;
    int M = 0;
    double mp = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    double nehari = std::numeric_limits<double>::quiet_NaN();
    double pohozaev = std::numeric_limits<double>::quiet_NaN();
    std::string classification;
    double seconds = 0.0;
};

struct RefinementStudy {
    std::vector<RefinementLevel> levels;
    // deltas[i] = |mp[i+1] - mp[i]| / |mp[i+1]|, one entry per consecutive pair
    std::vector<double> deltas;
};

// Ladder level i uses (L * 2^{max(0, i-1)}, M * 2^i): the spacing is refined
// once and the box then doubles at fixed spacing, so no level coarsens a
// previous one. The Gaussian init keeps a fixed physical width across levels
// (default L/8 of the base box) — a box-height init would trip the collapse
// detector on large boxes.
inline RefinementStudy refinement_study(const ProblemParams& params, const GridSpec& base,
                                        int levels, const SolverConfig& config,
                                        double init_width = 0.0) {
    base.validate();
    params.validate(base.dim);
    config.validate();
    if (levels < 1) throw InvalidInputError("refinement_study requires levels >= 1");

    const double width = init_width > 0.0 ? init_width : base.box / 8.0;
    constexpr std::int64_t point_guard = std::int64_t{1} << 24;

    std::vector<GridSpec> ladder;
    for (int i = 0; i < levels; ++i) {
        GridSpec g = base;
        g.box = base.box * static_cast<double>(std::int64_t{1} << std::max(0, i - 1));
        std::int64_t pts = static_cast<std::int64_t>(base.points) << i;
        if (pts > (std::int64_t{1} << 30))
            throw InvalidInputError("refinement ladder exceeds representable grid size");
        g.points = static_cast<int>(pts);
        std::int64_t total = 1;
        for (int d = 0; d < g.dim; ++d) total *= pts;
        if (total > point_guard)
            throw InvalidInputError("refinement ladder exceeds the memory guard of 2^24 points");
        ladder.push_back(g);
    }

    RefinementStudy study;
    for (const GridSpec& g : ladder) {
        auto t0 = std::chrono::steady_clock::now();
        auto [w, report] =
            solve_ground_state(make_init(InitKind::gaussian, g, width, config.seed), params, config);
        RefinementLevel lvl;
        lvl.L = g.box;
        lvl.M = g.points;
        lvl.mp = report.mp_estimate;
        lvl.residual = report.residual;
        lvl.nehari = report.nehari;
        lvl.pohozaev = report.pohozaev;
        lvl.classification = to_string(report.classification);
        lvl.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        study.levels.push_back(std::move(lvl));
    }
    for (std::size_t i = 0; i + 1 < study.levels.size(); ++i) {
        double a = study.levels[i].mp;
        double b = study.levels[i + 1].mp;
        study.deltas.push_back(std::abs(b - a) / std::max(std::abs(b), defect_floor));
    }
    return study;
}

struct BrezisLiebRow {
    double width = 0.0;
    int shift = 0;
    double d_w = 0.0;    // D of the fixed centered Gaussian w
    double gap = 0.0;    // |D(w + g_shift) - D(g_shift) - D(w)|
    double ratio = 0.0;  // gap / D(w)
};

// Tabulates the splitting gap for a pair of equal-width Gaussians as the
// second one slides away: the weak-limit surrogate where overlap, hence the
// cross term, decays with separation.
inline std::vector<BrezisLiebRow> brezis_lieb_demo(const ProblemParams& params,
                                                   const GridSpec& grid,
                                                   const std::vector<double>& widths,
                                                   const std::vector<int>& shifts) {
    grid.validate();
    params.validate(grid.dim);
    if (widths.empty()) throw InvalidInputError("brezis_lieb_demo requires at least one width");
    for (double w : widths)
        if (!(w > 0.0)) throw InvalidInputError("brezis_lieb_demo widths must be positive");
    if (shifts.empty()) throw InvalidInputError("brezis_lieb_demo requires at least one shift");
    for (std::size_t i = 0; i < shifts.size(); ++i) {
        if (shifts[i] < 0 || shifts[i] > grid.points / 2)
            throw InvalidInputError("brezis_lieb_demo shifts must lie in [0, M/2]");
        if (i > 0 && shifts[i] <= shifts[i - 1])
            throw InvalidInputError("brezis_lieb_demo shifts must be strictly increasing");
    }

    std::vector<BrezisLiebRow> table;
    for (double width : widths) {
        Field w = make_gaussian(grid, width);
        Field g = w;
        double dw = dterm(w, params);
        for (int s : shifts) {
            BrezisLiebRow row;
            row.width = width;
            row.shift = s;
            row.d_w = dw;
            row.gap = brezis_lieb_gap(w, g, s, params);
            row.ratio = row.gap / std::max(dw, defect_floor);
            table.push_back(row);
        }
    }
    return table;
}

}
