#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "msstab/error.hpp"
#include "msstab/stability.hpp"
#include "oracles.hpp"

using namespace msstab;

namespace {

TestEquation reference_equation() { return TestEquation({-2.0, 0.0}, {1.0, -1.0, 1.0}); }

oracle::Scheme as_oracle(const MethodSpec& method) {
    const auto family = method.kind() == MethodKind::Maruyama  ? oracle::Family::Maruyama
                        : method.kind() == MethodKind::Milstein ? oracle::Family::Milstein
                                                                : oracle::Family::SigmaMilstein;
    return {family, method.theta(), method.sigma(), method.h()};
}

double quadrature_factor(const MethodSpec& method, const TestEquation& eq) {
    return oracle::second_moment_factor(as_oracle(method), eq.lambda(),
                                        std::vector<Complex>(eq.mus().begin(), eq.mus().end()));
}

TestEquation random_equation(std::mt19937_64& rng, int max_m, double scale) {
    const int m = std::uniform_int_distribution<int>(1, max_m)(rng);
    std::vector<Complex> mus;
    for (int r = 0; r < m; ++r) mus.push_back(oracle::random_complex(rng, scale));
    return TestEquation(oracle::random_complex(rng, 3.0), mus);
}

MethodSpec random_method(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto kind = static_cast<MethodKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    const double sigma = kind == MethodKind::SigmaMilstein ? 2.0 * u01(rng) : 0.0;
    return MethodSpec(kind, 2.0 * u01(rng), sigma, std::exp(-4.0 + 5.0 * u01(rng)));
}

// Stable equation with lambda bounded away from 0 and the SDE margin at most
// -|Re lambda| / 2.
TestEquation random_stable_equation(std::mt19937_64& rng, bool real, int m = 0) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (m == 0) m = std::uniform_int_distribution<int>(1, 5)(rng);
    const double re = -(0.5 + 2.0 * u01(rng));
    const Complex lambda(re, real ? 0.0 : 2.0 * u01(rng) - 1.0);
    std::vector<Complex> mus;
    for (int r = 0; r < m; ++r) mus.push_back(real ? Complex(2.0 * u01(rng) - 1.0, 0.0) : oracle::random_complex(rng, 1.0));
    double power = 0.0;
    for (Complex mu : mus) power += std::norm(mu);
    // rescale so that 1/2 sum |mu|^2 = fraction * |Re lambda|, fraction <= 1/2
    const double target = u01(rng) * 0.5 * -re;
    const double factor = power > 0.0 ? std::sqrt(2.0 * target / power) : 0.0;
    for (Complex& mu : mus) mu *= factor;
    return TestEquation(lambda, mus);
}

}  // namespace

TEST_CASE("amplification factor examples") {
    const TestEquation eq = reference_equation();
    CHECK(amplification_factor(MethodSpec::maruyama(1.0, 1.0), eq) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));
    CHECK(amplification_factor(MethodSpec::milstein(1.0, 1.0), eq) == doctest::Approx(13.0 / 18.0).epsilon(1e-15));

    const TestEquation quiet({-0.7, 0.4}, {0.0, 0.0});
    const double h = 0.37;
    CHECK(amplification_factor(MethodSpec::maruyama(0.0, h), quiet) ==
          doctest::Approx(std::norm(1.0 + h * Complex(-0.7, 0.4))).epsilon(1e-14));
    CHECK(amplification_factor(MethodSpec::milstein(0.0, h), quiet) ==
          doctest::Approx(std::norm(1.0 + h * Complex(-0.7, 0.4))).epsilon(1e-14));
}

TEST_CASE("amplification factor agrees with quadrature where it is exact") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 400; ++trial) {
        const MethodSpec method = random_method(rng);
        // Maruyama: any m. Milstein family: m <= 2.
        const int max_m = method.kind() == MethodKind::Maruyama ? 4 : 2;
        const TestEquation eq = random_equation(rng, max_m, 1.5);
        const double expected = quadrature_factor(method, eq);
        CHECK(amplification_factor(method, eq) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("moment amplification factor agrees with quadrature for every m") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 300; ++trial) {
        const MethodSpec method = random_method(rng);
        const TestEquation eq = random_equation(rng, 5, 1.5);
        CHECK(moment_amplification_factor(method, eq) ==
              doctest::Approx(quadrature_factor(method, eq)).epsilon(1e-10));
        if (eq.m() <= 2 || method.kind() == MethodKind::Maruyama) {
            CHECK(moment_amplification_factor(method, eq) ==
                  doctest::Approx(amplification_factor(method, eq)).epsilon(1e-12));
        }
    }
}

TEST_CASE("for m = 3 the closed-form factor misses part of the off-diagonal variance") {
    // lambda = -2, mu = (1, -1, 1), Milstein theta = 1, h = 1: the coefficient formula
    // gives 13/18, the scheme's exact second-moment factor is 17/18.
    const MethodSpec method = MethodSpec::milstein(1.0, 1.0);
    CHECK(amplification_factor(method, reference_equation()) == doctest::Approx(13.0 / 18.0).epsilon(1e-15));
    CHECK(quadrature_factor(method, reference_equation()) == doctest::Approx(17.0 / 18.0).epsilon(1e-14));
    CHECK(moment_amplification_factor(method, reference_equation()) == doctest::Approx(17.0 / 18.0).epsilon(1e-15));
}

TEST_CASE("method stability margin examples") {
    const TestEquation eq = reference_equation();
    CHECK(method_stability_margin(MethodSpec::milstein(0.5, 1.0), eq) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(method_stability_margin(MethodSpec::sigma_milstein(0.5, 1.0, 1.0), eq) ==
          doctest::Approx(-2.25).epsilon(1e-15));

    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 200; ++trial) {
        const TestEquation e = random_equation(rng, 4, 1.0);
        const double h = std::exp(std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
        CHECK(method_stability_margin(MethodSpec::maruyama(0.5, h), e) == sde_stability_margin(e));
    }

    // degenerate scheme still reported
    CHECK_THROWS_AS(method_stability_margin(MethodSpec::maruyama(1.0, 1.0), TestEquation({1.0, 0.0}, {0.1})),
                    Error);
}

TEST_CASE("mu_sum") {
    CHECK(mu_sum(reference_equation()) == Complex(-2.0, 0.0));
    CHECK(mu_sum(TestEquation({-1.0, 0.0}, {Complex(0.3, 0.9)})) == Complex(0.0, 0.0));
    for (int m = 1; m <= 6; ++m) {
        const Complex mu1(0.7, -0.4);
        const TestEquation eq({-1.0, 0.0}, std::vector<Complex>(m, mu1));
        const Complex expected = mu1 * mu1 * double(m * m - m);
        CHECK(std::abs(mu_sum(eq) - expected) <= 1e-14 * (1.0 + std::abs(expected)));
    }
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 200; ++trial) {
        const TestEquation eq = random_equation(rng, 6, 2.0);
        Complex total{0.0, 0.0}, squares{0.0, 0.0};
        for (Complex mu : eq.mus()) {
            total += mu;
            squares += mu * mu;
        }
        CHECK(std::abs(mu_sum(eq) - (total * total - squares)) <= 1e-12 * (1.0 + std::norm(total)));
    }
}

TEST_CASE("theta_opt and theta_tilde") {
    CHECK(theta_opt(reference_equation()) == doctest::Approx(0.8125).epsilon(1e-15));
    CHECK(theta_opt(TestEquation({-3.0, 1.0}, {0.0})) == 0.5);
    CHECK(theta_opt(TestEquation({-1.0, 0.0}, {1.0})) == doctest::Approx(0.75).epsilon(1e-15));

    CHECK(theta_tilde(reference_equation(), 0.0) == theta_opt(reference_equation()));
    CHECK(theta_tilde(reference_equation(), 1.0) == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(theta_tilde(reference_equation(), 1.5) == doctest::Approx(-0.3125).epsilon(1e-14));

    const TestEquation driftless({0.0, 0.0}, {1.0});
    for (auto fn : {+[](const TestEquation& e) { return theta_opt(e); },
                    +[](const TestEquation& e) { return theta_tilde(e, 0.5); }}) {
        try {
            (void)fn(driftless);
            FAIL("expected ZeroDrift");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ZeroDrift);
        }
    }
}

TEST_CASE("max stable step-size") {
    const TestEquation eq = reference_equation();
    CHECK(max_stable_stepsize(MethodSpec::maruyama(0.0, 1.0), eq) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(max_stable_stepsize(MethodSpec::maruyama(0.75, 1.0), eq) == std::numeric_limits<double>::infinity());
    CHECK(max_stable_stepsize(MethodSpec::maruyama(0.5, 1.0), eq) == std::numeric_limits<double>::infinity());
    CHECK(max_stable_stepsize(MethodSpec::milstein(0.0, 1.0), eq) ==
          doctest::Approx(1.0 / 6.5).epsilon(1e-15));
    CHECK(max_stable_stepsize(MethodSpec::milstein(1.0, 1.0), eq) == std::numeric_limits<double>::infinity());
    // unstable SDE: no stable step-size
    CHECK(max_stable_stepsize(MethodSpec::maruyama(2.0, 1.0), TestEquation({1.0, 0.0}, {0.5})) == 0.0);
    CHECK(max_stable_stepsize(MethodSpec::milstein(0.0, 1.0), TestEquation({0.0, 0.0}, {0.0})) == 0.0);
}

TEST_CASE("stability report") {
    const StabilityReport report = stability_report(MethodSpec::milstein(0.5, 1.0), reference_equation());
    CHECK(report.s == doctest::Approx(11.0 / 8.0).epsilon(1e-15));
    CHECK(report.margin == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_FALSE(report.stable);
    CHECK(report.h_max == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(report.s >= 0.0);
}

TEST_CASE("predicate equivalence: s < 1 iff margin < 0") {
    std::mt19937_64 rng(59);
    int compared = 0;
    for (int trial = 0; trial < 20000; ++trial) {
        const MethodSpec method = random_method(rng);
        const TestEquation eq = random_equation(rng, 5, 1.2);
        double margin = 0.0, s = 0.0;
        try {
            margin = method_stability_margin(method, eq);
            s = amplification_factor(method, eq);
        } catch (const Error&) {
            continue;
        }
        if (std::fabs(margin) < 1e-9) continue;
        ++compared;
        CHECK((s < 1.0) == (margin < 0.0));
        CHECK(s >= 0.0);
    }
    CHECK(compared > 15000);
}

TEST_CASE("Milstein amplification dominates Maruyama") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 2000; ++trial) {
        const TestEquation eq = random_equation(rng, 5, 1.0);
        const double theta = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        const double h = std::exp(std::uniform_real_distribution<double>(-4.0, 1.0)(rng));
        const double s_mar = amplification_factor(MethodSpec::maruyama(theta, h), eq);
        const double s_mil = amplification_factor(MethodSpec::milstein(theta, h), eq);
        CHECK(s_mil >= s_mar);
    }
    const TestEquation quiet({-1.0, 0.5}, {0.0, 0.0, 0.0});
    CHECK(amplification_factor(MethodSpec::milstein(0.3, 0.7), quiet) ==
          amplification_factor(MethodSpec::maruyama(0.3, 0.7), quiet));
    CHECK(amplification_factor(MethodSpec::milstein(0.3, 0.7), reference_equation()) >
          amplification_factor(MethodSpec::maruyama(0.3, 0.7), reference_equation()));
}

TEST_CASE("margin at theta_opt and theta_tilde does not depend on h") {
    std::mt19937_64 rng(67);
    const double hs[] = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3};
    for (int trial = 0; trial < 200; ++trial) {
        const TestEquation eq = random_stable_equation(rng, trial % 2 == 0);
        const double sde = sde_stability_margin(eq);
        const double theta = theta_opt(eq);
        for (double h : hs) {
            CHECK(method_stability_margin(MethodSpec::milstein(theta, h), eq) ==
                  doctest::Approx(sde).epsilon(1e-12));
        }
        const double sigma = std::uniform_real_distribution<double>(0.0, 1.5)(rng);
        const double tilde = theta_tilde(eq, sigma);
        if (tilde < 0.0) continue;
        for (double h : hs) {
            CHECK(method_stability_margin(MethodSpec::sigma_milstein(tilde, sigma, h), eq) ==
                  doctest::Approx(sde).epsilon(1e-11));
        }
    }
}

TEST_CASE("h_max brackets the sign change of the margin") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const TestEquation eq = random_stable_equation(rng, trial % 3 == 0);
        const double sigma = 0.5 * u01(rng);
        const MethodSpec candidates[] = {
            MethodSpec::maruyama(0.5 * u01(rng), 1.0),
            MethodSpec::milstein(theta_opt(eq) * u01(rng), 1.0),
            MethodSpec::sigma_milstein(std::max(0.0, theta_tilde(eq, sigma)) * u01(rng), sigma, 1.0),
        };
        for (const MethodSpec& method : candidates) {
            const double h_max = max_stable_stepsize(method, eq);
            if (!std::isfinite(h_max)) continue;
            REQUIRE(h_max > 0.0);
            CHECK(method_stability_margin(method.with_h(h_max * (1.0 - 1e-6)), eq) < 0.0);
            CHECK(method_stability_margin(method.with_h(h_max * (1.0 + 1e-6)), eq) > 0.0);
        }
    }
}

TEST_CASE("sigma strictly decreases the margin when Re(lambda) < 0") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 300; ++trial) {
        // real coefficients: Re(lambda conj(mu^2)) = lambda mu^2 < 0
        const TestEquation eq = random_stable_equation(rng, true);
        if (eq.noise_power() < 1e-3) continue;
        const double theta = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
        const double h = std::uniform_real_distribution<double>(0.05, 3.0)(rng);
        double previous = method_stability_margin(MethodSpec::sigma_milstein(theta, 0.0, h), eq);
        for (double sigma : {0.25, 0.5, 1.0, 1.5, 3.0}) {
            const double margin = method_stability_margin(MethodSpec::sigma_milstein(theta, sigma, h), eq);
            CHECK(margin < previous);
            previous = margin;
        }
    }
}

TEST_CASE("theta_opt stays below 1/2 + 1/m + (m-1)^2/2 for equal intensities") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int m = 1 + trial % 6;
        const double lambda = -(0.1 + 5.0 * u01(rng));
        // stable: m mu^2 < -2 lambda
        const double mu = std::sqrt(u01(rng) * -2.0 * lambda / m) * (u01(rng) < 0.5 ? -1.0 : 1.0);
        const TestEquation eq({lambda, 0.0}, std::vector<Complex>(m, Complex(mu, 0.0)));
        REQUIRE(is_sde_ms_stable(eq));
        CHECK(theta_opt(eq) < 0.5 + 1.0 / m + 0.5 * (m - 1.0) * (m - 1.0));
    }
}

TEST_CASE("scaled margins") {
    CHECK(scaled_sde_margin(-1.0, 1.0) == -0.5);
    CHECK(scaled_margin({MethodKind::Maruyama, 0.0}, -1.0, 1.0) == 0.0);
    CHECK(scaled_margin({MethodKind::Milstein, 0.0, 0.0, 1}, -1.0, 0.5) == doctest::Approx(-0.1875).epsilon(1e-15));
    CHECK(scaled_margin({MethodKind::SigmaMilstein, 0.5, 1.0, 1}, -1.0, 1.0) ==
          doctest::Approx(-1.0 + 0.5 + 0.25 - 0.5).epsilon(1e-15));
    CHECK_THROWS_AS(scaled_margin({MethodKind::Milstein, 0.0, 0.0, 0}, -1.0, 1.0), Error);
    CHECK_THROWS_AS(scaled_margin({MethodKind::Milstein, 0.0, 0.0, 1}, -1.0, -0.1), Error);
}

TEST_CASE("scaled margin is h times the margin for equal real intensities") {
    std::mt19937_64 rng(83);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int m = 1 + trial % 5;
        const double lambda = 4.0 * u01(rng) - 3.0;
        const double mu = 2.0 * u01(rng) - 1.0;
        const double theta = 2.0 * u01(rng), sigma = 2.0 * u01(rng), h = 0.01 + 2.0 * u01(rng);
        const TestEquation eq({lambda, 0.0}, std::vector<Complex>(m, Complex(mu, 0.0)));
        const double x = h * lambda, y = h * m * mu * mu;
        const MethodSpec methods[] = {MethodSpec::maruyama(theta, h), MethodSpec::milstein(theta, h),
                                      MethodSpec::sigma_milstein(theta, sigma, h)};
        for (const MethodSpec& method : methods) {
            double margin = 0.0;
            try {
                margin = method_stability_margin(method, eq);
            } catch (const Error&) {
                continue;
            }
            const RegionSpec spec{method.kind(), theta, method.sigma(), m};
            CHECK(scaled_margin(spec, x, y) == doctest::Approx(h * margin).epsilon(1e-11).scale(1.0));
        }
        CHECK(scaled_sde_margin(x, y) == doctest::Approx(h * sde_stability_margin(eq)).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("rasterised regions") {
    const std::vector<RegionSpec> specs = {
        {MethodKind::Maruyama, 0.0}, {MethodKind::Maruyama, 0.5}, {MethodKind::Milstein, 0.0, 0.0, 1},
        {MethodKind::Milstein, 0.0, 0.0, 2}, {MethodKind::Milstein, 0.0, 0.0, 3},
        {MethodKind::SigmaMilstein, 0.0, 1.0, 2}};
    // 4 x 4 cells over [-2, 0] x [0, 2]: centres at -1.75, -1.25, ..., and 0.25, 0.75, ...
    const RegionGrid small = rasterize_region(specs, -2.0, 0.0, 0.0, 2.0, 4, 4, 1);
    CHECK(small.x_center(1) == -1.25);
    CHECK(small.y_center(0) == 0.25);

    // cell centred at (-1, 1)
    const RegionGrid grid = rasterize_region(specs, -1.5, -0.5, 0.5, 1.5, 2, 2, 1);
    const RegionGrid centred = rasterize_region(specs, -2.0, 0.0, 0.0, 2.0, 3, 3, 1);
    CHECK(centred.x_center(1) == -1.0);
    CHECK(centred.y_center(1) == 1.0);
    CHECK(centred.member(0, 1, 1));        // SDE margin -0.5
    CHECK_FALSE(centred.member(1, 1, 1));  // Maruyama theta = 0 margin exactly 0
    (void)grid;

    const RegionGrid right = rasterize_region(specs, 0.25, 0.75, 0.0, 0.2, 2, 2, 1);
    for (int iy = 0; iy < 2; ++iy) {
        for (int ix = 0; ix < 2; ++ix) CHECK_FALSE(right.member(0, ix, iy));
    }

    CHECK_THROWS_AS(rasterize_region(specs, -1.0, 1.0, 0.0, 1.0, 1, 5), Error);
    CHECK_THROWS_AS(rasterize_region(specs, -1.0, 1.0, -0.5, 1.0, 5, 5), Error);
    CHECK_THROWS_AS(rasterize_region(specs, 1.0, -1.0, 0.0, 1.0, 5, 5), Error);
}

TEST_CASE("raster is independent of the worker count") {
    const std::vector<RegionSpec> specs = {{MethodKind::Milstein, 0.5, 0.0, 3},
                                           {MethodKind::SigmaMilstein, 0.0, 1.5, 4}};
    const RegionGrid one = rasterize_region(specs, -6.0, 1.0, 0.0, 8.0, 137, 91, 1);
    const RegionGrid many = rasterize_region(specs, -6.0, 1.0, 0.0, 8.0, 137, 91, 7);
    CHECK(one.membership == many.membership);
}

TEST_CASE("region invariants on a 200 x 200 raster") {
    std::vector<RegionSpec> specs = {{MethodKind::Maruyama, 0.5}};
    for (int m = 1; m <= 5; ++m) specs.push_back({MethodKind::Milstein, 0.5, 0.0, m});
    const RegionGrid g = rasterize_region(specs, -6.0, 1.0, 0.0, 8.0, 200, 200);
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            CHECK(g.member(1, ix, iy) == g.member(0, ix, iy));  // Maruyama theta = 1/2 == SDE
            CHECK(g.member(2, ix, iy) == g.member(3, ix, iy));  // Milstein m = 1 == m = 2
            for (std::size_t layer = 3; layer < 6; ++layer) {
                if (g.member(layer + 1, ix, iy)) CHECK(g.member(layer, ix, iy));
            }
            if (g.member(2, ix, iy)) CHECK(g.member(1, ix, iy));
        }
    }
}
