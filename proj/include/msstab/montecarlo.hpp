#pragma once

#include <cstdint>
#include <vector>

#include "msstab/model.hpp"
#include "msstab/schemes.hpp"

namespace msstab {

/// Seeded noise source for an ensemble on a fine time grid. Every draw is a
/// pure function of (seed, trajectory, step, noise index), so trajectories
/// can be evaluated in any order or on any number of threads.
struct NoisePlan {
    std::uint64_t seed = 0;
    std::uint64_t trajectories = 100000;  ///< M
    std::uint32_t n_fine = 1;             ///< steps on the finest grid
    std::uint32_t m = 1;                  ///< noise terms
    double h_fine = 1.0;

    /// Throws Error(Validation) unless M >= 1, n_fine >= 1, m >= 1, h_fine > 0.
    void validate() const;
};

/// Standard normal xi_{r, step} of trajectory `traj`.
double gaussian_draw(const NoisePlan& plan, std::uint64_t traj, std::uint32_t step,
                     std::uint32_t r) noexcept;

/// Standardised increments on the coarse grid h = k h_fine, row-major with
/// m entries per coarse step: xi_coarse = sum_{block} xi_fine / sqrt(k), so
/// the Wiener increment over a coarse step is exactly the sum of the fine
/// ones. `blocks` defaults to n_fine / k (k must then divide n_fine).
std::vector<double> aggregate_increments(const NoisePlan& plan, std::uint64_t traj,
                                         std::uint32_t k);
std::vector<double> aggregate_increments(const NoisePlan& plan, std::uint64_t traj,
                                         std::uint32_t k, std::uint32_t blocks);

/// Per-grid-point ensemble statistics. All vectors have n_steps + 1 entries.
struct EnsembleResult {
    std::vector<double> times;
    std::vector<double> ms_error;                  ///< sqrt(mean |X(t_i) - X_i|^2)
    std::vector<double> est_second_moment;         ///< mean |X_i|^2
    std::vector<double> analytic_second_moment;    ///< E|X(t_i)|^2 in closed form
    std::vector<double> recurrence_second_moment;  ///< s^i |X0|^2
    std::vector<double> std_error_of_estimates;    ///< standard error of est_second_moment
    std::vector<double> exact_est_second_moment;   ///< mean |X(t_i)|^2 on the same paths
    std::vector<double> exact_std_error;
    /// set where an accumulator left double range; the affected values are
    /// clamped to the largest finite double
    std::vector<std::uint8_t> overflow;

    bool any_overflow() const noexcept;
};

struct EnsembleOptions {
    unsigned threads = 0;  ///< 0 = hardware concurrency
};

/// Runs the scheme with step h = k h_fine for n_steps steps on every
/// trajectory of the plan, alongside the exact solution on the same
/// Brownian path. Requires method.h() == k * plan.h_fine (to 1e-12 relative),
/// plan.m == eq.m() and k * n_steps <= plan.n_fine.
///
/// The output is bit-identical for any thread count.
EnsembleResult run_ensemble(const MethodSpec& method, const TestEquation& eq,
                            const InitialState& init, const NoisePlan& plan,
                            std::uint32_t n_steps, std::uint32_t k,
                            const EnsembleOptions& options = {});

struct ConvergenceResult {
    std::vector<double> step_sizes;
    std::vector<double> errors;  ///< endpoint MS-error per step size
    double slope;                ///< least-squares slope of log(error) vs log(h)
};

/// Least-squares slope of log(y) against log(x). Needs >= 2 points, all
/// positive and finite.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Endpoint MS-error at T for each step size on common Brownian paths and
/// the fitted strong order. Each h must be a multiple of plan.h_fine and
/// divide T; the plan must cover T (n_fine h_fine >= T). Throws
/// Error(Overflow) if any ensemble diverges out of double range.
ConvergenceResult estimate_convergence_order(const MethodSpec& method, const TestEquation& eq,
                                             const InitialState& init, double T,
                                             const std::vector<double>& step_sizes,
                                             const NoisePlan& plan,
                                             const EnsembleOptions& options = {});

}  // namespace msstab
