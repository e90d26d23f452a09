#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msstab/model.hpp"
#include "msstab/schemes.hpp"

namespace msstab {

/// Mean-square verdict for one (method, equation) pair.
struct StabilityReport {
    double s;       ///< E|X_{i+1}|^2 = s E|X_i|^2
    double margin;  ///< left-hand side of the method's stability inequality
    bool stable;    ///< margin < 0 (strict)
    double h_max;   ///< supremal h such that every step in (0, h) is stable; may be +inf
};

/// Second-moment amplification factor from the step coefficients:
///
///   s = (|a|^2 + sum |b_r|^2 + 2 sum |c_rr|^2 + |c_sum|^2) / |d|^2.
///
/// Exact for Maruyama and for the Milstein family with m <= 2. For m >= 3
/// the off-diagonal products xi_p xi_q are uncorrelated across pairs, so
/// the simulated recurrence actually has factor moment_amplification_factor.
double amplification_factor(const MethodSpec& method, const TestEquation& eq);

/// Exact E|X_1|^2 / |X_0|^2 of the one-step recurrence, with the
/// off-diagonal noise products contributing 2 sum_{r1 != r2} |c_{r1,r2}|^2.
double moment_amplification_factor(const MethodSpec& method, const TestEquation& eq);

/// Closed-form left-hand side of the stability inequality:
///
///   Re(lambda) + 1/2 sum |mu_r|^2 + 1/2 h (1 - 2 theta) |lambda|^2
///     [+ 1/4 h sum |mu_r|^4 + 1/8 h |mu_sum|^2]              Milstein family
///     [+ 1/2 sigma h Re(lambda conj(sum mu_r^2))]            SigmaMilstein
///
/// Negative iff amplification_factor < 1. Evaluated without forming the
/// step coefficients; still throws DegenerateDenominator when the scheme
/// itself is undefined.
double method_stability_margin(const MethodSpec& method, const TestEquation& eq);

/// sum over r1 != r2 of mu_r1 mu_r2
Complex mu_sum(const TestEquation& eq) noexcept;

/// theta at which the h-dependent part of the Milstein margin vanishes.
/// Throws Error(ZeroDrift) when lambda == 0.
double theta_opt(const TestEquation& eq);

/// theta_opt shifted by the sigma-Milstein correction. May be negative.
double theta_tilde(const TestEquation& eq, double sigma);

/// The margin is affine in h: margin(h) = h_free + h * h_coefficient.
struct MarginSplit {
    double h_free;
    double h_coefficient;
};

MarginSplit margin_split(MethodKind kind, double theta, double sigma, const TestEquation& eq);

/// Largest h such that the scheme is stable for every step in (0, h):
///   h_coefficient <= 0, h_free < 0  ->  +inf
///   h_coefficient >  0, h_free < 0  ->  -h_free / h_coefficient
///   h_free >= 0                     ->  0
/// The method's own h is ignored.
double max_stable_stepsize(const MethodSpec& method, const TestEquation& eq);

/// s, margin, verdict and h_max in one call.
StabilityReport stability_report(const MethodSpec& method, const TestEquation& eq);

// ---------------------------------------------------------------------------
// Scaled plane for real coefficients with equal intensities mu_1 = ... = mu_m:
//   x = h lambda,  y = h m mu_1^2.

struct RegionSpec {
    MethodKind kind;
    double theta;
    double sigma = 0.0;
    int m = 1;

    std::string label() const;
};

double scaled_sde_margin(double x, double y) noexcept;

/// Throws Error(Validation) if m < 1 or y < 0.
double scaled_margin(const RegionSpec& spec, double x, double y);

struct RegionGrid {
    double x_min, x_max, y_min, y_max;
    int nx, ny;
    std::vector<RegionSpec> specs;
    /// layer 0 is the SDE, layer k+1 is specs[k]; cell (ix, iy) at iy * nx + ix.
    std::vector<std::vector<std::uint8_t>> membership;

    double x_center(int ix) const noexcept { return x_min + (ix + 0.5) * (x_max - x_min) / nx; }
    double y_center(int iy) const noexcept { return y_min + (iy + 0.5) * (y_max - y_min) / ny; }
    bool member(std::size_t layer, int ix, int iy) const {
        return membership[layer][static_cast<std::size_t>(iy) * nx + ix] != 0;
    }
};

/// Evaluates every spec and the SDE at the cell centres; a cell is a member
/// iff its margin is strictly negative. Rows are split across `threads`
/// workers (0 = hardware concurrency); the result does not depend on it.
RegionGrid rasterize_region(std::vector<RegionSpec> specs, double x_min, double x_max,
                            double y_min, double y_max, int nx, int ny, unsigned threads = 0);

}  // namespace msstab
