#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "choquard/solver.hpp"
#include "oracles.hpp"

using namespace choquard;
using test_oracle::random_smooth_field;
using test_oracle::rel_diff;

namespace {

ProblemParams params_np(double alpha, double p) {
    ProblemParams out;
    out.alpha = alpha;
    out.p = p;
    return out;
}

const GridSpec desk_grid{2, 64, 16.0};  // the workhorse configuration

SolverConfig tight_config() {
    SolverConfig c;
    c.tol = 1e-8;
    c.max_iter = 20000;
    c.seed = 1;
    return c;
}

// Regression anchor for the workhorse ground state, frozen from a verified
// run (full precision 3.2691508925699471); the independent prototype agreed
// to ten digits before freezing.
constexpr double mp_anchor_p2 = 3.2691508925699471;

}

TEST_CASE("solver config validation", "[solver]") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    SolverConfig bad = c;
    bad.tau0 = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.backtrack = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.grow = 0.9;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.tol = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.max_iter = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
    bad = c;
    bad.recenter_every = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidInputError);
}

TEST_CASE("normalize_to_constraint enforces D = 1 by pure scaling", "[solver]") {
    ProblemParams params = params_np(1.0, 2.0);
    GridSpec g{2, 32, 12.0};

    SECTION("random bump lands on the constraint") {
        Field u = random_smooth_field(g, 3);
        Field nu = normalize_to_constraint(u, params);
        CHECK(rel_diff(dterm(nu, params), 1.0) <= 1e-12);
        // second application is within round-off of the identity
        Field nnu = normalize_to_constraint(nu, params);
        CHECK(test_oracle::max_rel_field_diff(nnu, nu) <= 1e-12);
    }
    SECTION("D = 16 at p = 2 scales by exactly one half") {
        Field u = random_smooth_field(g, 4);
        double d = dterm(u, params);
        double f = std::pow(16.0 / d, 1.0 / 4.0);
        Field u16 = u;
        for (auto& x : u16.values) x *= f;  // now D(u16) ~= 16
        Field nu = normalize_to_constraint(u16, params);
        for (std::size_t i = 0; i < g.n(); ++i)
            CHECK(nu[i] == Catch::Approx(0.5 * u16[i]).margin(1e-12 * std::abs(u16[i]) + 1e-300));
    }
    SECTION("zero field is rejected") {
        Field z(g);
        CHECK_THROWS_AS(normalize_to_constraint(z, params), NonNormalizableError);
    }
}

TEST_CASE("constrained gradient: multiplier, tangency, preconditioning", "[solver]") {
    ProblemParams params = params_np(1.0, 2.0);
    GridSpec g{2, 32, 12.0};
    Field u = normalize_to_constraint(random_smooth_field(g, 9), params);

    SolverConfig raw_cfg;
    raw_cfg.precondition = false;
    auto [r, lambda] = constrained_gradient(u, params, raw_cfg);
    double A = quadratic_form_A(u);
    CHECK(lambda == Catch::Approx(A / params.p).epsilon(1e-14));
    // tangency at the constraint: <r, u> = A - A D = 0 up to round-off
    CHECK(std::abs(l2_inner(r, u)) <= 1e-8 * A);

    SolverConfig pre_cfg;
    pre_cfg.precondition = true;
    auto [gpre, lambda2] = constrained_gradient(u, params, pre_cfg);
    CHECK(lambda2 == lambda);
    CHECK(l2_norm(gpre) <= l2_norm(r) * (1.0 + 1e-12));  // multiplier <= 1

    Field off = u;
    for (auto& x : off.values) x *= 1.001;  // leaves the constraint
    CHECK_THROWS_AS(constrained_gradient(off, params, raw_cfg), InvalidInputError);
}

TEST_CASE("recenter moves the centroid to the box center", "[solver]") {
    GridSpec g{2, 32, 16.0};
    Field u = make_gaussian(g, 2.0);

    SECTION("already centered: unchanged") {
        Field r = recenter(u);
        CHECK(r.values == u.values);
    }
    SECTION("quarter-box shift is undone to within one cell") {
        Field shifted = circular_shift(u, {0, g.points / 4, 0});
        Field r = recenter(shifted);
        // the recentered field should match the original up to one cell
        double best = 1e300;
        for (int dx : {-1, 0, 1})
            for (int dy : {-1, 0, 1}) {
                Field probe = circular_shift(u, {dx, dy, 0});
                best = std::min(best, test_oracle::max_rel_field_diff(r, probe));
            }
        CHECK(best <= 1e-12);
    }
    SECTION("norms and functionals are exactly shift-invariant") {
        ProblemParams params = params_np(1.0, 2.0);
        Field shifted = circular_shift(u, {5, 9, 0});
        Field r = recenter(shifted);
        CHECK(rel_diff(quadratic_form_A(r), quadratic_form_A(u)) <= 1e-12);
        CHECK(rel_diff(dterm(r, params), dterm(u, params)) <= 1e-12);
    }
    SECTION("zero field rejected") {
        Field z(g);
        CHECK_THROWS_AS(recenter(z), InvalidInputError);
    }
}

TEST_CASE("symmetrize is an exact idempotent contraction", "[solver]") {
    GridSpec g{2, 16, 8.0};

    SECTION("radial profiles are fixed points") {
        Field u = make_gaussian(g, 1.5);
        Field s = symmetrize(u);
        CHECK(s.values == u.values);  // bitwise: orbits are already constant
    }
    SECTION("projection: applying twice equals applying once, bitwise") {
        Field u = random_smooth_field(g, 12);
        Field s1 = symmetrize(u);
        Field s2 = symmetrize(s1);
        CHECK(s2.values == s1.values);
    }
    SECTION("averaging contracts the L2 norm") {
        for (std::uint64_t seed : {31ull, 32ull, 33ull}) {
            Field u = random_smooth_field(g, seed);
            CHECK(l2_norm(symmetrize(u)) <= l2_norm(u) * (1.0 + 1e-12));
        }
    }
    SECTION("output is invariant under axis swap and reflections") {
        Field s = symmetrize(random_smooth_field(g, 40));
        const int M = g.points;
        for (std::size_t i = 0; i < g.n(); ++i) {
            auto idx = decode_index(g, i);
            std::array<int, 3> swapped{idx[1], idx[0], 0};
            std::array<int, 3> reflected{(M - idx[0]) % M, idx[1], 0};
            CHECK(s[i] == s[encode_index(g, swapped)]);
            CHECK(s[i] == s[encode_index(g, reflected)]);
        }
    }
}

TEST_CASE("ground-state solve at the workhorse configuration", "[solver][slow]") {
    ProblemParams params = params_np(1.0, 2.0);
    SolverConfig config = tight_config();
    auto [w, report] = solve_ground_state(InitKind::gaussian, desk_grid, params, config);

    CHECK(report.classification == Classification::converged);
    CHECK(report.residual <= 1e-8);
    CHECK(report.mp_estimate == Catch::Approx(mp_anchor_p2).epsilon(1e-8));
    CHECK(report.lambda == report.mp_estimate / 2.0);
    CHECK(rel_diff(dterm(w, params), 1.0) <= 1e-8);
    CHECK_FALSE(report.dterm_negative_seen);

    SECTION("energy history is non-increasing") {
        const auto& E = report.energy_history;
        REQUIRE(E.size() >= 2);
        for (std::size_t i = 0; i + 1 < E.size(); ++i)
            CHECK(E[i + 1] <= E[i] * (1.0 + 1e-12));
        CHECK(static_cast<int>(E.size()) == report.iters + 1);
    }

    SECTION("converged state is one-signed after sign alignment") {
        double at_max = 0.0, best = 0.0;
        for (double x : w.values)
            if (std::abs(x) > best) {
                best = std::abs(x);
                at_max = x;
            }
        double sign = at_max >= 0.0 ? 1.0 : -1.0;
        double min_aligned = 1e300;
        for (double x : w.values) min_aligned = std::min(min_aligned, sign * x);
        CHECK(min_aligned > 0.0);
    }

    SECTION("rescaled field satisfies the certificate chain") {
        Field u = rescale_to_solution(w, report.mp_estimate, params);
        CHECK(std::abs(nehari_defect(u, params)) <= 1e-6);
        CHECK(std::abs(quadratic_form_A(u) - dterm(u, params)) /
                  quadratic_form_A(u) <=
              1e-6);
        CHECK(std::abs(equation_residual(u, params) - report.residual) <= 1e-12);
        CHECK(report.nehari == Catch::Approx(nehari_defect(u, params)).margin(1e-14));
        CHECK(report.pohozaev == Catch::Approx(pohozaev_defect(u, params)).margin(1e-14));
    }

    SECTION("hls ratio of the minimizer dominates random fields (factor 2 bound)") {
        double ground = hls_ratio(w, params);
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 100; ++seed) {
            Field v = random_smooth_field(desk_grid, seed);
            worst = std::max(worst, hls_ratio(v, params));
        }
        INFO("ground " << ground << " max random " << worst);
        CHECK(worst <= 2.0 * ground);
    }
}

TEST_CASE("initialization invariance of the minimum value", "[solver][slow]") {
    ProblemParams params = params_np(1.0, 2.0);
    SolverConfig config = tight_config();
    auto [w1, r1] = solve_ground_state(InitKind::gaussian, desk_grid, params, config);

    Field shifted_init =
        circular_shift(make_init(InitKind::gaussian, desk_grid, 0.0, config.seed),
                       {desk_grid.points / 4, desk_grid.points / 8, 0});
    auto [w2, r2] = solve_ground_state(shifted_init, params, config);

    CHECK(r1.classification == Classification::converged);
    CHECK(r2.classification == Classification::converged);
    CHECK(rel_diff(r1.mp_estimate, r2.mp_estimate) <= 1e-6);
}

TEST_CASE("solve without preconditioning still converges at moderate tolerance",
          "[solver][slow]") {
    ProblemParams params = params_np(1.0, 2.0);
    SolverConfig config = tight_config();
    config.precondition = false;
    config.tol = 1e-6;
    auto [w, report] = solve_ground_state(InitKind::gaussian, desk_grid, params, config);
    CHECK(report.classification == Classification::converged);
    CHECK(rel_diff(report.mp_estimate, mp_anchor_p2) <= 1e-5);
}

TEST_CASE("three-dimensional solve converges", "[solver][slow]") {
    GridSpec g{3, 24, 12.0};
    ProblemParams params = params_np(2.0, 2.0);
    SolverConfig config = tight_config();
    auto [w, report] = solve_ground_state(InitKind::gaussian, g, params, config);
    CHECK(report.classification == Classification::converged);
    CHECK(report.residual <= 1e-8);
    // frozen from a verified run; the independent prototype agreed to 7 digits
    CHECK(report.mp_estimate == Catch::Approx(7.0065206125098474).epsilon(1e-8));
}

TEST_CASE("rescale_to_solution scaling rules", "[solver]") {
    ProblemParams params = params_np(1.0, 2.0);
    GridSpec g{2, 16, 8.0};
    Field w = random_smooth_field(g, 8);

    Field same = rescale_to_solution(w, 1.0, params);
    CHECK(same.values == w.values);  // t = 1 exactly

    Field doubled = rescale_to_solution(w, 4.0, params);  // t = 4^{1/2} = 2
    for (std::size_t i = 0; i < g.n(); ++i) CHECK(doubled[i] == 2.0 * w[i]);

    CHECK_THROWS_AS(rescale_to_solution(w, 0.0, params), InvalidInputError);
    CHECK_THROWS_AS(rescale_to_solution(w, -1.0, params), InvalidInputError);
}

TEST_CASE("concentration detector fires once the lattice admits tenfold growth", "[solver][slow]") {
    // Above the upper existence threshold the continuum infimum is not
    // attained: dilation lowers the constrained quadratic form without bound,
    // so iterates concentrate.  The detector needs the peak to grow tenfold
    // over the initial state, and the lattice caps that growth near
    // (init_width/h)^{(N+alpha)/(2p)} - about x2.9 at M = 128 (where the flow
    // instead converges to a lattice-scale spike) and x11.5 here at M = 2048.
    GridSpec g{2, 2048, 16.0};
    ProblemParams params = params_np(1.0, 3.5);
    SolverConfig config;
    config.tol = 1e-8;
    config.max_iter = 600;
    config.seed = 1;
    auto [w, report] = solve_ground_state(make_init(InitKind::gaussian, g, 4.0, config.seed),
                                          params, config);
    CHECK(report.classification == Classification::concentrating);
    const auto& li = report.linf_history;
    const auto& pr = report.participation_ratio_history;
    REQUIRE(li.size() >= 2);
    CHECK(*std::max_element(li.begin(), li.end()) >= 10.0 * li.front());
    CHECK(pr.back() <= 0.1 * pr.front());
}

TEST_CASE("classify_run reproduces the detector logic", "[solver]") {
    SolverConfig config;
    config.tol = 1e-8;

    SolutionReport report;
    report.linf_history = {1.0, 1.0, 1.0};
    report.participation_ratio_history = {0.2, 0.2, 0.2};

    SECTION("flat histories with small residual: converged") {
        report.residual = 1e-9;
        CHECK(classify_run(report, config) == Classification::converged);
    }
    SECTION("flat histories with large residual: maxiter") {
        report.residual = 1e-3;
        CHECK(classify_run(report, config) == Classification::maxiter);
    }
    SECTION("spike growth with collapsing participation: concentrating") {
        report.linf_history = {1.0, 2.0, 4.0, 8.0, 16.0};
        report.participation_ratio_history = {1.0, 0.5, 0.25, 0.125, 0.0625};
        report.residual = 1e-9;  // detectors still take precedence
        CHECK(classify_run(report, config) == Classification::concentrating);
    }
    SECTION("decay toward the uniform bound: spreading") {
        report.linf_history = {1.0, 0.5, 0.05};
        report.participation_ratio_history = {0.04, 0.2, 0.6};
        report.residual = 1e-3;
        CHECK(classify_run(report, config) == Classification::spreading);
    }
    SECTION("empty history throws") {
        report.linf_history.clear();
        CHECK_THROWS_AS(classify_run(report, config), InvalidInputError);
    }
}

TEST_CASE("participation ratio normalization", "[solver]") {
    GridSpec g{2, 16, 8.0};
    Field uniform(g);
    for (auto& x : uniform.values) x = 0.7;
    CHECK(participation_ratio(uniform) == Catch::Approx(1.0).epsilon(1e-13));
    Field spike(g);
    spike[37] = 5.0;
    CHECK(participation_ratio(spike) ==
          Catch::Approx(1.0 / static_cast<double>(g.n())).epsilon(1e-13));
}

TEST_CASE("deflation with no targets reproduces the plain solve bitwise", "[solver][slow]") {
    ProblemParams params = params_np(1.0, 2.0);
    SolverConfig config = tight_config();
    config.tol = 1e-6;
    Field init = make_init(InitKind::gaussian, desk_grid, 0.0, config.seed);
    auto [w1, r1] = solve_ground_state(init, params, config);
    auto [w2, r2] = deflated_solve({}, init, params, config);
    CHECK(w1.values == w2.values);
    CHECK(r1.mp_estimate == r2.mp_estimate);
    CHECK(r1.iters == r2.iters);
    CHECK(r1.residual == r2.residual);
}

TEST_CASE("deflation factor and gradient behave like a barrier", "[solver]") {
    GridSpec g{2, 16, 8.0};
    Field u = random_smooth_field(g, 2);
    Field target = u;
    for (auto& x : target.values) x += 10.0;  // constant offset of 10
    Field diff(g);
    for (std::size_t i = 0; i < g.n(); ++i) diff[i] = u[i] - target[i];
    double d2 = l2_inner(diff, diff);
    REQUIRE(d2 >= 100.0);

    // far away the factor is a negligible perturbation ...
    double factor = detail::deflation_factor(u, {target});
    CHECK(factor >= 1.0);
    CHECK(factor <= 1.01);

    // ... and its gradient matches -2 (u - w)/||u - w||^4 for a single target
    Field grad = detail::deflation_gradient(u, {target});
    double expect_scale = -2.0 / (d2 * d2);
    for (std::size_t i = 0; i < g.n(); i += 37)
        CHECK(grad[i] == Catch::Approx(expect_scale * diff[i]).margin(1e-18));
    // the factor decreases when moving away from the target
    CHECK(l2_inner(grad, diff) < 0.0);

    // approaching the target blows the factor up: an energy barrier
    Field near = target;
    near[0] += 1e-6;
    CHECK(detail::deflation_factor(near, {target}) >= 1e6);
}

TEST_CASE("make_init is deterministic and respects the width default", "[solver]") {
    GridSpec g{2, 32, 16.0};
    Field a = make_init(InitKind::random_smooth, g, 0.0, 42);
    Field b = make_init(InitKind::random_smooth, g, 0.0, 42);
    CHECK(a.values == b.values);
    Field c = make_init(InitKind::random_smooth, g, 0.0, 43);
    CHECK(a.values != c.values);
    Field gauss = make_init(InitKind::gaussian, g, 0.0, 7);
    Field expect = make_gaussian(g, g.box / 8.0);
    CHECK(gauss.values == expect.values);
}
