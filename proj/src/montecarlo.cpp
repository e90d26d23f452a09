#include "msstab/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "msstab/error.hpp"
#include "msstab/philox.hpp"
#include "msstab/stability.hpp"

namespace msstab {

void NoisePlan::validate() const {
    if (trajectories < 1) throw Error(ErrorKind::Validation, "need at least one trajectory");
    if (n_fine < 1) throw Error(ErrorKind::Validation, "need at least one fine step");
    if (m < 1) throw Error(ErrorKind::Validation, "need at least one noise term");
    if (!(std::isfinite(h_fine) && h_fine > 0.0)) {
        throw Error(ErrorKind::Validation, "fine step-size must be positive");
    }
}

double gaussian_draw(const NoisePlan& plan, std::uint64_t traj, std::uint32_t step,
                     std::uint32_t r) noexcept {
    const Philox4x32::Counter ctr{step, r, static_cast<std::uint32_t>(traj),
                                  static_cast<std::uint32_t>(traj >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(plan.seed),
                              static_cast<std::uint32_t>(plan.seed >> 32)};
    return philox_normal(ctr, key);
}

namespace {

void fill_increments(const NoisePlan& plan, std::uint64_t traj, std::uint32_t k,
                     std::uint32_t blocks, std::vector<double>& out) {
    const std::uint32_t m = plan.m;
    out.resize(static_cast<std::size_t>(blocks) * m);
    if (k == 1) {
        for (std::uint32_t i = 0; i < blocks; ++i) {
            for (std::uint32_t r = 0; r < m; ++r) out[i * m + r] = gaussian_draw(plan, traj, i, r);
        }
        return;
    }
    const double root_k = std::sqrt(static_cast<double>(k));
    for (std::uint32_t i = 0; i < blocks; ++i) {
        for (std::uint32_t r = 0; r < m; ++r) {
            double sum = 0.0;
            for (std::uint32_t j = 0; j < k; ++j) sum += gaussian_draw(plan, traj, i * k + j, r);
            out[i * m + r] = sum / root_k;
        }
    }
}

void check_coarsening(const NoisePlan& plan, std::uint32_t k, std::uint32_t blocks) {
    if (k < 1) throw Error(ErrorKind::Validation, "coarsening factor must be >= 1");
    if (static_cast<std::uint64_t>(k) * blocks > plan.n_fine) {
        throw Error(ErrorKind::Validation, "coarse grid extends past the fine noise grid");
    }
}

// Per-chunk sums over trajectories, one slot per grid point.
struct Accumulator {
    std::vector<long double> err2, q, q2, e, e2;

    explicit Accumulator(std::size_t n)
        : err2(n, 0.0L), q(n, 0.0L), q2(n, 0.0L), e(n, 0.0L), e2(n, 0.0L) {}

    void add(std::size_t i, Complex exact, Complex approx) {
        const Complex diff = exact - approx;
        const long double d2 = static_cast<long double>(diff.real()) * diff.real() +
                               static_cast<long double>(diff.imag()) * diff.imag();
        const long double qa = static_cast<long double>(approx.real()) * approx.real() +
                               static_cast<long double>(approx.imag()) * approx.imag();
        const long double qe = static_cast<long double>(exact.real()) * exact.real() +
                               static_cast<long double>(exact.imag()) * exact.imag();
        err2[i] += d2;
        q[i] += qa;
        q2[i] += qa * qa;
        e[i] += qe;
        e2[i] += qe * qe;
    }

    void merge(const Accumulator& other) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            err2[i] += other.err2[i];
            q[i] += other.q[i];
            q2[i] += other.q2[i];
            e[i] += other.e[i];
            e2[i] += other.e2[i];
        }
    }
};

constexpr std::uint64_t kMaxChunks = 64;

// Writes `value` into `slot`, clamping anything outside double range.
bool store(long double value, double& slot) {
    constexpr long double kMax = std::numeric_limits<double>::max();
    if (!(std::isfinite(value) && std::fabs(value) <= kMax)) {
        slot = std::numeric_limits<double>::max();
        return false;
    }
    slot = static_cast<double>(value);
    return true;
}

long double standard_error(long double sum, long double sum_sq, std::uint64_t count) {
    if (count < 2) return 0.0L;
    const long double n = static_cast<long double>(count);
    const long double var = (sum_sq - sum * sum / n) / (n - 1.0L);
    return std::sqrt(std::max(var, 0.0L) / n);
}

}  // namespace

std::vector<double> aggregate_increments(const NoisePlan& plan, std::uint64_t traj,
                                         std::uint32_t k) {
    plan.validate();
    if (k < 1 || plan.n_fine % k != 0) {
        throw Error(ErrorKind::Validation, "coarsening factor must divide the fine step count");
    }
    return aggregate_increments(plan, traj, k, plan.n_fine / k);
}

std::vector<double> aggregate_increments(const NoisePlan& plan, std::uint64_t traj,
                                         std::uint32_t k, std::uint32_t blocks) {
    plan.validate();
    check_coarsening(plan, k, blocks);
    std::vector<double> out;
    fill_increments(plan, traj, k, blocks, out);
    return out;
}

bool EnsembleResult::any_overflow() const noexcept {
    return std::any_of(overflow.begin(), overflow.end(), [](std::uint8_t f) { return f != 0; });
}

EnsembleResult run_ensemble(const MethodSpec& method, const TestEquation& eq,
                            const InitialState& init, const NoisePlan& plan,
                            std::uint32_t n_steps, std::uint32_t k,
                            const EnsembleOptions& options) {
    plan.validate();
    check_coarsening(plan, k, n_steps);
    if (plan.m != eq.m()) {
        throw Error(ErrorKind::Validation, "noise plan and equation disagree on m");
    }
    const double h = method.h();
    const double coarse_h = k * plan.h_fine;
    if (std::fabs(h - coarse_h) > 1e-12 * h) {
        throw Error(ErrorKind::Validation, "method step-size must equal k * h_fine");
    }

    const Stepper stepper(method, eq);
    const double s = amplification_factor(method, eq);
    const std::size_t points = static_cast<std::size_t>(n_steps) + 1;
    const std::uint32_t m = plan.m;
    const double sqrt_h = std::sqrt(h);

    const std::uint64_t M = plan.trajectories;
    const std::uint64_t n_chunks = std::min(kMaxChunks, M);
    std::vector<Accumulator> partial(n_chunks, Accumulator(points));

    auto run_chunk = [&](std::uint64_t chunk) {
        const std::uint64_t begin = chunk * M / n_chunks;
        const std::uint64_t end = (chunk + 1) * M / n_chunks;
        Accumulator& acc = partial[chunk];
        std::vector<double> xi;
        std::vector<double> wiener(m);
        for (std::uint64_t traj = begin; traj < end; ++traj) {
            fill_increments(plan, traj, k, n_steps, xi);
            std::fill(wiener.begin(), wiener.end(), 0.0);
            Complex x = init.x0;
            acc.add(0, init.x0, x);
            for (std::uint32_t i = 0; i < n_steps; ++i) {
                const std::span<const double> draw(xi.data() + static_cast<std::size_t>(i) * m, m);
                x = stepper.step(x, draw);
                for (std::uint32_t r = 0; r < m; ++r) wiener[r] += sqrt_h * draw[r];
                const Complex exact = exact_solution_at(eq, init, (i + 1) * h, wiener);
                acc.add(i + 1, exact, x);
            }
        }
    };

    unsigned threads = options.threads;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_chunks));
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        for (std::uint64_t c = next++; c < n_chunks; c = next++) run_chunk(c);
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }

    // fixed reduction order: chunk 0, 1, 2, ...
    Accumulator total(points);
    for (const Accumulator& acc : partial) total.merge(acc);

    EnsembleResult result;
    result.times.resize(points);
    result.ms_error.resize(points);
    result.est_second_moment.resize(points);
    result.analytic_second_moment.resize(points);
    result.recurrence_second_moment.resize(points);
    result.std_error_of_estimates.resize(points);
    result.exact_est_second_moment.resize(points);
    result.exact_std_error.resize(points);
    result.overflow.assign(points, 0);

    const long double count = static_cast<long double>(M);
    const double x0_sq = abs2(init.x0);
    double recurrence = x0_sq;
    for (std::size_t i = 0; i < points; ++i) {
        const double t = static_cast<double>(i) * h;
        result.times[i] = t;
        result.analytic_second_moment[i] = exact_second_moment(eq, init, t);
        result.recurrence_second_moment[i] = recurrence;
        recurrence *= s;

        bool ok = true;
        ok &= store(std::sqrt(total.err2[i] / count), result.ms_error[i]);
        ok &= store(total.q[i] / count, result.est_second_moment[i]);
        ok &= store(standard_error(total.q[i], total.q2[i], M), result.std_error_of_estimates[i]);
        ok &= store(total.e[i] / count, result.exact_est_second_moment[i]);
        ok &= store(standard_error(total.e[i], total.e2[i], M), result.exact_std_error[i]);
        result.overflow[i] = ok ? 0 : 1;
    }
    return result;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error(ErrorKind::Validation, "slope fit needs paired data");
    if (x.size() < 2) throw Error(ErrorKind::Validation, "slope fit needs at least two points");
    const std::size_t n = x.size();
    double mean_lx = 0.0, mean_ly = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0 && std::isfinite(x[i]) && std::isfinite(y[i]))) {
            throw Error(ErrorKind::Validation, "slope fit needs positive finite data");
        }
        mean_lx += std::log(x[i]);
        mean_ly += std::log(y[i]);
    }
    mean_lx /= n;
    mean_ly /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mean_lx;
        sxy += dx * (std::log(y[i]) - mean_ly);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw Error(ErrorKind::Validation, "slope fit needs distinct step sizes");
    return sxy / sxx;
}

ConvergenceResult estimate_convergence_order(const MethodSpec& method, const TestEquation& eq,
                                             const InitialState& init, double T,
                                             const std::vector<double>& step_sizes,
                                             const NoisePlan& plan,
                                             const EnsembleOptions& options) {
    plan.validate();
    if (!(std::isfinite(T) && T > 0.0)) throw Error(ErrorKind::Validation, "T must be positive");
    if (step_sizes.size() < 2) {
        throw Error(ErrorKind::Validation, "convergence study needs at least two step sizes");
    }

    ConvergenceResult result;
    for (double h : step_sizes) {
        if (!(h > 0.0)) throw Error(ErrorKind::Validation, "step sizes must be positive");
        const double k_real = std::round(h / plan.h_fine);
        const double n_real = std::round(T / h);
        if (k_real < 1.0 || std::fabs(k_real * plan.h_fine - h) > 1e-9 * h) {
            throw Error(ErrorKind::Validation,
                        "step size " + std::to_string(h) + " is not a multiple of h_fine");
        }
        if (n_real < 1.0 || std::fabs(n_real * h - T) > 1e-9 * T) {
            throw Error(ErrorKind::Validation,
                        "step size " + std::to_string(h) + " does not divide T");
        }
        const auto k = static_cast<std::uint32_t>(k_real);
        const auto n = static_cast<std::uint32_t>(n_real);
        const EnsembleResult run =
            run_ensemble(method.with_h(k * plan.h_fine), eq, init, plan, n, k, options);
        if (run.overflow[n]) {
            throw Error(ErrorKind::Overflow,
                        "ensemble diverged at h = " + std::to_string(h));
        }
        result.step_sizes.push_back(h);
        result.errors.push_back(run.ms_error[n]);
    }
    result.slope = loglog_slope(result.step_sizes, result.errors);
    return result;
}

}  // namespace msstab
