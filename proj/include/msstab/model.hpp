#pragma once

#include <complex>
#include <span>
#include <vector>

namespace msstab {

using Complex = std::complex<double>;

/// |z|^2 as re^2 + im^2 (no hypot/sqrt round trip).
inline double abs2(Complex z) noexcept {
    return z.real() * z.real() + z.imag() * z.imag();
}

/// Scalar linear test SDE with m multiplicative noise terms:
///
///   dX = lambda X dt + sum_r mu_r X dW_r,   X(0) = X0.
///
/// Coefficients are complex and finite; m >= 1.
class TestEquation {
public:
    /// Throws Error(Validation) when `mus` is empty or any coefficient is
    /// not finite.
    TestEquation(Complex lambda, std::vector<Complex> mus);

    Complex lambda() const noexcept { return lambda_; }
    std::span<const Complex> mus() const noexcept { return mus_; }
    std::size_t m() const noexcept { return mus_.size(); }

    /// sum_r |mu_r|^2
    double noise_power() const noexcept;
    /// sum_r mu_r^2 (complex, no modulus)
    Complex mu_square_sum() const noexcept;
    /// sum over r1 != r2 of mu_r1 mu_r2, accumulated pairwise
    Complex mu_cross_sum() const noexcept;

private:
    Complex lambda_;
    std::vector<Complex> mus_;
};

/// Non-random initial value; the start time is always t = 0.
struct InitialState {
    explicit InitialState(Complex x0);

    Complex x0;
};

/// Re(lambda) + 1/2 sum_r |mu_r|^2. The zero solution is asymptotically
/// mean-square stable iff this is strictly negative.
double sde_stability_margin(const TestEquation& eq) noexcept;

bool is_sde_ms_stable(const TestEquation& eq) noexcept;

/// Pathwise solution X0 exp((lambda - 1/2 sum mu_r^2) t + sum mu_r W_r(t))
/// for one realisation W_r(t) of the driving Wiener process.
Complex exact_solution_at(const TestEquation& eq, const InitialState& init, double t,
                          std::span<const double> wiener_values);

/// E|X(t)|^2 = |X0|^2 exp((2 Re(lambda) + sum |mu_r|^2) t).
double exact_second_moment(const TestEquation& eq, const InitialState& init, double t);

}  // namespace msstab
