#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "msstab/model.hpp"

namespace msstab {

enum class MethodKind { Maruyama, Milstein, SigmaMilstein };

std::string_view to_string(MethodKind kind) noexcept;

/// One discretisation of the test equation: scheme family, drift
/// implicitness theta, diffusion-correction implicitness sigma and step h.
///
/// sigma is only meaningful for SigmaMilstein and is held at 0 otherwise.
/// Neither theta nor sigma is capped above.
class MethodSpec {
public:
    static MethodSpec maruyama(double theta, double h);
    static MethodSpec milstein(double theta, double h);
    static MethodSpec sigma_milstein(double theta, double sigma, double h);

    /// Throws Error(Validation) unless h > 0, theta >= 0, sigma >= 0 and
    /// sigma == 0 for the non-sigma families.
    MethodSpec(MethodKind kind, double theta, double sigma, double h);

    MethodKind kind() const noexcept { return kind_; }
    double theta() const noexcept { return theta_; }
    double sigma() const noexcept { return sigma_; }
    double h() const noexcept { return h_; }

    MethodSpec with_h(double h) const { return {kind_, theta_, sigma_, h}; }
    MethodSpec with_theta(double theta) const { return {kind_, theta, sigma_, h_}; }

private:
    MethodKind kind_;
    double theta_;
    double sigma_;
    double h_;
};

/// Linear one-step recurrence
///
///   X_{i+1} = d^{-1} (a_hat + sum_r b_r xi_r + sum_{r1,r2} c_{r1,r2} xi_r1 xi_r2) X_i
///
/// with c_{r1,r2} = sqrt(c_{r1,r1} c_{r2,r2}) up to sign, so only the
/// diagonal and the off-diagonal total are stored.
///
/// Maruyama and Milstein coefficients are pre-divided by 1 - theta h lambda
/// (d == 1); SigmaMilstein keeps its denominator in d.
struct StepCoefficients {
    Complex a_hat;
    Complex a;                    ///< a_hat + sum_r c_diag[r]
    std::vector<Complex> b;
    std::vector<Complex> c_diag;  ///< c_{r,r}
    Complex c_sum;                ///< sum over r1 != r2 of c_{r1,r2}
    Complex d;
};

/// Standard Gaussian draws xi_{r,i} driving one step, one per noise term.
struct NoiseDraw {
    std::vector<double> xi;
};

/// Threshold on |denominator| relative to max(1, |theta h lambda|) below
/// which a step is rejected as degenerate.
inline constexpr double kDegeneracyTolerance = 1e-12;

/// Throws Error(DegenerateDenominator) if the implicit step has no
/// well-conditioned solution.
StepCoefficients step_coefficients(const MethodSpec& method, const TestEquation& eq);

/// Solves the implicit scheme equation for X_{i+1}. `xi` must have m entries.
Complex one_step(const MethodSpec& method, const TestEquation& eq, Complex x,
                 std::span<const double> xi);

inline Complex one_step(const MethodSpec& method, const TestEquation& eq, Complex x,
                        const NoiseDraw& draw) {
    return one_step(method, eq, x, std::span<const double>(draw.xi));
}

/// Returns [X_0, X_1, ..., X_n]; `draws` must hold exactly n_steps entries.
std::vector<Complex> simulate_path(const MethodSpec& method, const TestEquation& eq,
                                   const InitialState& init, std::size_t n_steps,
                                   std::span<const NoiseDraw> draws);

/// Precomputed per-step factors for a fixed (method, eq). Evaluating a step
/// through this object gives bit-identical results to one_step and skips
/// re-validating the method for every draw.
class Stepper {
public:
    Stepper(const MethodSpec& method, const TestEquation& eq);

    /// Growth factor g(xi) with X_{i+1} = g(xi) X_i.
    Complex growth(std::span<const double> xi) const noexcept;

    Complex step(Complex x, std::span<const double> xi) const noexcept { return growth(xi) * x; }

    std::size_t m() const noexcept { return mus_.size(); }

private:
    MethodKind kind_;
    std::vector<Complex> mus_;
    Complex deterministic_;  ///< 1 + (1-theta) h lambda [- 1/2 h (1-sigma) sum mu^2 folded below]
    Complex denominator_;
    double sqrt_h_;
    double half_h_;
};

}  // namespace msstab
