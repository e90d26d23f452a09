#include "msstab/model.hpp"

#include <cmath>
#include <string>

#include "msstab/error.hpp"

namespace msstab {

namespace {

bool is_finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

}  // namespace

TestEquation::TestEquation(Complex lambda, std::vector<Complex> mus)
    : lambda_(lambda), mus_(std::move(mus)) {
    if (mus_.empty()) {
        throw Error(ErrorKind::Validation, "test equation needs at least one noise term (m >= 1)");
    }
    if (!is_finite(lambda_)) {
        throw Error(ErrorKind::Validation, "lambda must be finite");
    }
    for (std::size_t r = 0; r < mus_.size(); ++r) {
        if (!is_finite(mus_[r])) {
            throw Error(ErrorKind::Validation, "mu_" + std::to_string(r + 1) + " must be finite");
        }
    }
}

double TestEquation::noise_power() const noexcept {
    double sum = 0.0;
    for (Complex mu : mus_) sum += abs2(mu);
    return sum;
}

Complex TestEquation::mu_square_sum() const noexcept {
    Complex sum{0.0, 0.0};
    for (Complex mu : mus_) sum += mu * mu;
    return sum;
}

Complex TestEquation::mu_cross_sum() const noexcept {
    Complex sum{0.0, 0.0};
    for (std::size_t p = 0; p < mus_.size(); ++p) {
        for (std::size_t q = p + 1; q < mus_.size(); ++q) sum += mus_[p] * mus_[q];
    }
    return 2.0 * sum;
}

InitialState::InitialState(Complex x0_) : x0(x0_) {
    if (!is_finite(x0)) throw Error(ErrorKind::Validation, "initial value must be finite");
}

double sde_stability_margin(const TestEquation& eq) noexcept {
    return eq.lambda().real() + 0.5 * eq.noise_power();
}

bool is_sde_ms_stable(const TestEquation& eq) noexcept { return sde_stability_margin(eq) < 0.0; }

Complex exact_solution_at(const TestEquation& eq, const InitialState& init, double t,
                          std::span<const double> wiener_values) {
    if (wiener_values.size() != eq.m()) {
        throw Error(ErrorKind::Validation, "need one Wiener value per noise term");
    }
    if (!(t >= 0.0)) throw Error(ErrorKind::Validation, "time must be non-negative");

    Complex exponent = (eq.lambda() - 0.5 * eq.mu_square_sum()) * t;
    auto mus = eq.mus();
    for (std::size_t r = 0; r < mus.size(); ++r) exponent += mus[r] * wiener_values[r];
    // polar form: exp(re) * (cos(im), sin(im))
    return init.x0 * std::polar(std::exp(exponent.real()), exponent.imag());
}

double exact_second_moment(const TestEquation& eq, const InitialState& init, double t) {
    if (!(t >= 0.0)) throw Error(ErrorKind::Validation, "time must be non-negative");
    return abs2(init.x0) * std::exp(2.0 * sde_stability_margin(eq) * t);
}

}  // namespace msstab
