#include "msstab/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msstab/error.hpp"

namespace msstab {

std::string_view to_string(MethodKind kind) noexcept {
    switch (kind) {
        case MethodKind::Maruyama:      return "maruyama";
        case MethodKind::Milstein:      return "milstein";
        case MethodKind::SigmaMilstein: return "sigma-milstein";
    }
    return "unknown";
}

MethodSpec MethodSpec::maruyama(double theta, double h) {
    return {MethodKind::Maruyama, theta, 0.0, h};
}

MethodSpec MethodSpec::milstein(double theta, double h) {
    return {MethodKind::Milstein, theta, 0.0, h};
}

MethodSpec MethodSpec::sigma_milstein(double theta, double sigma, double h) {
    return {MethodKind::SigmaMilstein, theta, sigma, h};
}

MethodSpec::MethodSpec(MethodKind kind, double theta, double sigma, double h)
    : kind_(kind), theta_(theta), sigma_(sigma), h_(h) {
    if (!(std::isfinite(h) && h > 0.0)) {
        throw Error(ErrorKind::Validation, "step-size h must be positive and finite");
    }
    if (!(std::isfinite(theta) && theta >= 0.0)) {
        throw Error(ErrorKind::Validation, "theta must be non-negative and finite");
    }
    if (!(std::isfinite(sigma) && sigma >= 0.0)) {
        throw Error(ErrorKind::Validation, "sigma must be non-negative and finite");
    }
    if (kind != MethodKind::SigmaMilstein && sigma != 0.0) {
        throw Error(ErrorKind::Validation,
                    "sigma is only defined for the sigma-milstein scheme");
    }
}

namespace {

struct Denominator {
    Complex value;
    double scale;
};

// 1 - theta h lambda [+ 1/2 sigma h sum mu^2]
Denominator denominator_of(const MethodSpec& method, const TestEquation& eq) {
    const Complex implicit_drift = method.theta() * method.h() * eq.lambda();
    Denominator den{Complex{1.0, 0.0} - implicit_drift, std::max(1.0, std::abs(implicit_drift))};
    if (method.kind() == MethodKind::SigmaMilstein) {
        const Complex implicit_noise = 0.5 * method.sigma() * method.h() * eq.mu_square_sum();
        den.value += implicit_noise;
        den.scale = std::max(den.scale, std::abs(implicit_noise));
    }
    if (!(std::abs(den.value) > kDegeneracyTolerance * den.scale)) {
        throw Error(ErrorKind::DegenerateDenominator,
                    std::string("implicit ") + std::string(to_string(method.kind())) +
                        " step is degenerate (|denominator| <= 1e-12 relative)");
    }
    return den;
}

}  // namespace

StepCoefficients step_coefficients(const MethodSpec& method, const TestEquation& eq) {
    const Denominator den = denominator_of(method, eq);
    const double h = method.h();
    const double sqrt_h = std::sqrt(h);
    const Complex lambda = eq.lambda();
    const auto mus = eq.mus();
    const std::size_t m = mus.size();

    StepCoefficients c;
    c.b.resize(m);
    c.c_diag.assign(m, Complex{0.0, 0.0});
    c.c_sum = Complex{0.0, 0.0};

    if (method.kind() == MethodKind::SigmaMilstein) {
        c.d = den.value;
        c.a_hat = 1.0 + (1.0 - method.theta()) * h * lambda -
                  0.5 * h * (1.0 - method.sigma()) * eq.mu_square_sum();
        Complex diag_total{0.0, 0.0};
        for (std::size_t r = 0; r < m; ++r) {
            c.b[r] = sqrt_h * mus[r];
            c.c_diag[r] = 0.5 * h * mus[r] * mus[r];
            diag_total += c.c_diag[r];
        }
        c.c_sum = 0.5 * h * eq.mu_cross_sum();
        c.a = c.a_hat + diag_total;
        return c;
    }

    // normalised form: everything divided by 1 - theta h lambda
    c.d = Complex{1.0, 0.0};
    c.a = 1.0 + h * lambda / den.value;
    for (std::size_t r = 0; r < m; ++r) c.b[r] = sqrt_h * mus[r] / den.value;

    if (method.kind() == MethodKind::Maruyama) {
        c.a_hat = c.a;
        return c;
    }

    Complex diag_total{0.0, 0.0};
    for (std::size_t r = 0; r < m; ++r) {
        c.c_diag[r] = 0.5 * h * mus[r] * mus[r] / den.value;
        diag_total += c.c_diag[r];
    }
    c.c_sum = 0.5 * h * eq.mu_cross_sum() / den.value;
    c.a_hat = c.a - diag_total;
    return c;
}

Stepper::Stepper(const MethodSpec& method, const TestEquation& eq)
    : kind_(method.kind()),
      mus_(eq.mus().begin(), eq.mus().end()),
      sqrt_h_(std::sqrt(method.h())),
      half_h_(0.5 * method.h()) {
    denominator_ = denominator_of(method, eq).value;
    deterministic_ = 1.0 + (1.0 - method.theta()) * method.h() * eq.lambda();
    if (kind_ == MethodKind::SigmaMilstein) {
        // explicit share of the sigma-weighted correction; exactly zero at sigma = 0
        deterministic_ += 0.5 * method.sigma() * method.h() * eq.mu_square_sum();
    }
}

Complex Stepper::growth(std::span<const double> xi) const noexcept {
    const std::size_t m = mus_.size();
    Complex noise{0.0, 0.0};
    for (std::size_t r = 0; r < m; ++r) noise += mus_[r] * xi[r];
    Complex numerator = deterministic_ + sqrt_h_ * noise;

    if (kind_ != MethodKind::Maruyama) {
        Complex diag{0.0, 0.0};
        for (std::size_t r = 0; r < m; ++r) diag += mus_[r] * mus_[r] * (xi[r] * xi[r] - 1.0);
        Complex cross{0.0, 0.0};
        for (std::size_t p = 0; p < m; ++p) {
            const Complex lead = mus_[p] * xi[p];
            for (std::size_t q = p + 1; q < m; ++q) cross += lead * (mus_[q] * xi[q]);
        }
        // 1/2 h sum_{r1 != r2} = h sum_{p<q}
        numerator += half_h_ * diag + (2.0 * half_h_) * cross;
    }
    return numerator / denominator_;
}

Complex one_step(const MethodSpec& method, const TestEquation& eq, Complex x,
                 std::span<const double> xi) {
    if (xi.size() != eq.m()) {
        throw Error(ErrorKind::Validation, "noise draw must have one entry per noise term");
    }
    return Stepper(method, eq).step(x, xi);
}

std::vector<Complex> simulate_path(const MethodSpec& method, const TestEquation& eq,
                                   const InitialState& init, std::size_t n_steps,
                                   std::span<const NoiseDraw> draws) {
    if (draws.size() != n_steps) {
        throw Error(ErrorKind::Validation, "need exactly one noise draw per step");
    }
    const Stepper stepper(method, eq);
    std::vector<Complex> path;
    path.reserve(n_steps + 1);
    path.push_back(init.x0);
    for (const NoiseDraw& draw : draws) {
        if (draw.xi.size() != eq.m()) {
            throw Error(ErrorKind::Validation, "noise draw must have one entry per noise term");
        }
        path.push_back(stepper.step(path.back(), draw.xi));
    }
    return path;
}

}  // namespace msstab
