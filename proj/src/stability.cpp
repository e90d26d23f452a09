#include "msstab/stability.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "msstab/error.hpp"

namespace msstab {

namespace {

double sum_abs2(std::span<const Complex> values) {
    double sum = 0.0;
    for (Complex v : values) sum += abs2(v);
    return sum;
}

// sum_r |mu_r|^4
double noise_quartic(const TestEquation& eq) {
    double sum = 0.0;
    for (Complex mu : eq.mus()) {
        const double p = abs2(mu);
        sum += p * p;
    }
    return sum;
}

// sum_r Re(lambda conj(mu_r^2)); reduces to lambda sum mu_r^2 for real data
double drift_noise_coupling(const TestEquation& eq) {
    return (eq.lambda() * std::conj(eq.mu_square_sum())).real();
}

double lambda_abs2_or_throw(const TestEquation& eq) {
    const double l2 = abs2(eq.lambda());
    if (l2 == 0.0) throw Error(ErrorKind::ZeroDrift, "theta threshold undefined for lambda = 0");
    return l2;
}

}  // namespace

double amplification_factor(const MethodSpec& method, const TestEquation& eq) {
    const StepCoefficients c = step_coefficients(method, eq);
    const double numerator =
        abs2(c.a) + sum_abs2(c.b) + 2.0 * sum_abs2(c.c_diag) + abs2(c.c_sum);
    return numerator / abs2(c.d);
}

double moment_amplification_factor(const MethodSpec& method, const TestEquation& eq) {
    const StepCoefficients c = step_coefficients(method, eq);
    // |c_{p,q}|^2 = |c_pp| |c_qq|, so 2 sum_{p != q} |c_pq|^2 + 2 sum_r |c_rr|^2
    // collapses to 2 (sum_r |c_rr|)^2.
    double diag_abs = 0.0;
    for (Complex cr : c.c_diag) diag_abs += std::abs(cr);
    const double numerator = abs2(c.a) + sum_abs2(c.b) + 2.0 * diag_abs * diag_abs;
    return numerator / abs2(c.d);
}

Complex mu_sum(const TestEquation& eq) noexcept { return eq.mu_cross_sum(); }

MarginSplit margin_split(MethodKind kind, double theta, double sigma, const TestEquation& eq) {
    MarginSplit split{sde_stability_margin(eq), 0.5 * (1.0 - 2.0 * theta) * abs2(eq.lambda())};
    if (kind == MethodKind::Maruyama) return split;
    split.h_coefficient += 0.25 * noise_quartic(eq) + 0.125 * abs2(mu_sum(eq));
    if (kind == MethodKind::SigmaMilstein) {
        split.h_coefficient += 0.5 * sigma * drift_noise_coupling(eq);
    }
    return split;
}

double method_stability_margin(const MethodSpec& method, const TestEquation& eq) {
    // the margin is only meaningful where the scheme is well defined
    (void)step_coefficients(method, eq);
    const MarginSplit split = margin_split(method.kind(), method.theta(), method.sigma(), eq);
    return split.h_free + method.h() * split.h_coefficient;
}

double theta_opt(const TestEquation& eq) {
    const double l2 = lambda_abs2_or_throw(eq);
    return 0.5 + noise_quartic(eq) / (4.0 * l2) + abs2(mu_sum(eq)) / (8.0 * l2);
}

double theta_tilde(const TestEquation& eq, double sigma) {
    const double l2 = lambda_abs2_or_throw(eq);
    return theta_opt(eq) + sigma * drift_noise_coupling(eq) / (2.0 * l2);
}

double max_stable_stepsize(const MethodSpec& method, const TestEquation& eq) {
    const MarginSplit split = margin_split(method.kind(), method.theta(), method.sigma(), eq);
    if (split.h_free >= 0.0) return 0.0;
    if (split.h_coefficient <= 0.0) return std::numeric_limits<double>::infinity();
    const double bound = -split.h_free / split.h_coefficient;
    // the bound itself must admit a solvable step
    (void)step_coefficients(method.with_h(bound), eq);
    return bound;
}

StabilityReport stability_report(const MethodSpec& method, const TestEquation& eq) {
    StabilityReport report{};
    report.s = amplification_factor(method, eq);
    report.margin = method_stability_margin(method, eq);
    report.stable = report.margin < 0.0;
    report.h_max = max_stable_stepsize(method, eq);
    return report;
}

// ---------------------------------------------------------------------------

std::string RegionSpec::label() const {
    std::ostringstream out;
    out << to_string(kind) << "_theta" << theta;
    if (kind == MethodKind::SigmaMilstein) out << "_sigma" << sigma;
    if (kind != MethodKind::Maruyama) out << "_m" << m;
    return out.str();
}

double scaled_sde_margin(double x, double y) noexcept { return x + 0.5 * y; }

double scaled_margin(const RegionSpec& spec, double x, double y) {
    if (spec.m < 1) throw Error(ErrorKind::Validation, "region spec needs m >= 1");
    if (!(y >= 0.0)) throw Error(ErrorKind::Validation, "scaled noise coordinate y must be >= 0");

    const double drift_term = (1.0 - 2.0 * spec.theta) * x * x;
    if (spec.kind == MethodKind::Maruyama) return x + 0.5 * y + 0.5 * drift_term;

    const double m = spec.m;
    const double y2 = y * y;
    const double correction = 0.5 * y2 / m + 0.25 * y2 * (m - 1.0) * (m - 1.0);
    double margin = x + 0.5 * y + 0.5 * (drift_term + correction);
    if (spec.kind == MethodKind::SigmaMilstein) margin += 0.5 * spec.sigma * x * y;
    return margin;
}

RegionGrid rasterize_region(std::vector<RegionSpec> specs, double x_min, double x_max,
                            double y_min, double y_max, int nx, int ny, unsigned threads) {
    if (nx < 2 || ny < 2) throw Error(ErrorKind::Validation, "raster needs nx, ny >= 2");
    if (!(x_min < x_max) || !(y_min < y_max)) {
        throw Error(ErrorKind::Validation, "raster ranges must be non-empty intervals");
    }
    if (!(y_min >= 0.0)) throw Error(ErrorKind::Validation, "y range must lie in [0, inf)");
    for (const RegionSpec& spec : specs) {
        if (spec.m < 1) throw Error(ErrorKind::Validation, "region spec needs m >= 1");
        if (spec.theta < 0.0 || spec.sigma < 0.0) {
            throw Error(ErrorKind::Validation, "region spec needs theta, sigma >= 0");
        }
    }

    RegionGrid grid{x_min, x_max, y_min, y_max, nx, ny, std::move(specs), {}};
    const std::size_t cells = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    grid.membership.assign(grid.specs.size() + 1, std::vector<std::uint8_t>(cells, 0));

    auto fill_row = [&grid, nx](int iy) {
        const double y = grid.y_center(iy);
        const std::size_t row = static_cast<std::size_t>(iy) * nx;
        for (int ix = 0; ix < nx; ++ix) {
            const double x = grid.x_center(ix);
            grid.membership[0][row + ix] = scaled_sde_margin(x, y) < 0.0;
            for (std::size_t k = 0; k < grid.specs.size(); ++k) {
                grid.membership[k + 1][row + ix] = scaled_margin(grid.specs[k], x, y) < 0.0;
            }
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(ny));
    std::atomic<int> next_row{0};
    auto worker = [&] {
        for (int iy = next_row++; iy < ny; iy = next_row++) fill_row(iy);
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    return grid;
}

}  // namespace msstab
