#include "msstab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <regex>
#include <sstream>

#include "msstab/error.hpp"

namespace msstab::cli {

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation:            return kValidation;
        case ErrorKind::DegenerateDenominator:
        case ErrorKind::ZeroDrift:
        case ErrorKind::Overflow:              return kNumeric;
        case ErrorKind::Io:                    return kIo;
    }
    return kValidation;
}

namespace {

double parse_decimal(std::string_view text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw Error(ErrorKind::Validation, "malformed number '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

Complex parse_complex(std::string_view text) {
    static const std::regex kLiteral(
        R"(^([+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?))"
        R"((?:([+-])((?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)i)?$)");
    std::cmatch match;
    if (!std::regex_match(text.begin(), text.end(), match, kLiteral)) {
        throw Error(ErrorKind::Validation,
                    "malformed complex literal '" + std::string(text) + "' (expected RE, RE+IMi or RE-IMi)");
    }
    const double re = parse_decimal(std::string_view(match[1].first, match[1].length()));
    double im = 0.0;
    if (match[2].matched) {
        im = parse_decimal(std::string_view(match[3].first, match[3].length()));
        if (*match[2].first == '-') im = -im;
    }
    if (!std::isfinite(re) || !std::isfinite(im)) {
        throw Error(ErrorKind::Validation, "complex literal '" + std::string(text) + "' is not finite");
    }
    return {re, im};
}

MethodKind parse_method(std::string_view text) {
    if (text == "maruyama") return MethodKind::Maruyama;
    if (text == "milstein") return MethodKind::Milstein;
    if (text == "sigma-milstein") return MethodKind::SigmaMilstein;
    throw Error(ErrorKind::Validation, "unknown method '" + std::string(text) +
                                           "' (expected maruyama, milstein or sigma-milstein)");
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", value);
    return buffer;
}

namespace {

std::string cell_text(const Cell& cell) {
    struct Visitor {
        std::string operator()(std::monostate) const { return {}; }
        std::string operator()(double v) const { return format_double(v); }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(bool v) const { return v ? "1" : "0"; }
        std::string operator()(const std::string& v) const { return v; }
    };
    return std::visit(Visitor{}, cell);
}

nlohmann::ordered_json cell_json(const Cell& cell) {
    struct Visitor {
        nlohmann::ordered_json operator()(std::monostate) const { return nullptr; }
        nlohmann::ordered_json operator()(double v) const {
            if (std::isfinite(v)) return v;
            return format_double(v);
        }
        nlohmann::ordered_json operator()(std::int64_t v) const { return v; }
        nlohmann::ordered_json operator()(bool v) const { return v; }
        nlohmann::ordered_json operator()(const std::string& v) const { return v; }
    };
    return std::visit(Visitor{}, cell);
}

}  // namespace

void write_csv(const Table& table, std::ostream& out) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        out << (c ? "," : "") << table.columns[c];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << cell_text(row[c]);
        out << '\n';
    }
}

void write_json(const Table& table, std::ostream& out, std::string_view extra_json) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    if (!extra_json.empty()) doc = nlohmann::ordered_json::parse(extra_json);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json record = nlohmann::ordered_json::object();
        for (std::size_t c = 0; c < row.size(); ++c) record[table.columns[c]] = cell_json(row[c]);
        rows.push_back(std::move(record));
    }
    doc["rows"] = std::move(rows);
    out << doc.dump(2) << '\n';
}

Table check_table(const TestEquation& eq, const std::vector<MethodSpec>& methods) {
    Table table;
    table.columns = {"method", "theta", "sigma", "h", "s", "s_moment", "margin",
                     "stable", "h_max", "theta_threshold"};
    const double sde_margin = sde_stability_margin(eq);
    table.rows.push_back({std::string("sde"), {}, {}, {}, {}, {}, sde_margin,
                          is_sde_ms_stable(eq), {}, {}});
    for (const MethodSpec& method : methods) {
        const StabilityReport report = stability_report(method, eq);
        Cell threshold;
        switch (method.kind()) {
            case MethodKind::Maruyama: threshold = 0.5; break;
            case MethodKind::Milstein:
                if (abs2(eq.lambda()) > 0.0) threshold = theta_opt(eq);
                break;
            case MethodKind::SigmaMilstein:
                if (abs2(eq.lambda()) > 0.0) threshold = theta_tilde(eq, method.sigma());
                break;
        }
        table.rows.push_back({std::string(to_string(method.kind())), method.theta(), method.sigma(),
                              method.h(), report.s, moment_amplification_factor(method, eq),
                              report.margin, report.stable, report.h_max, threshold});
    }
    return table;
}

Table simulate_table(const EnsembleResult& result) {
    Table table;
    table.columns = {"t", "ms_error", "est_second_moment", "analytic_second_moment",
                     "recurrence_second_moment", "std_error", "exact_est_second_moment",
                     "exact_std_error", "overflow"};
    for (std::size_t i = 0; i < result.times.size(); ++i) {
        table.rows.push_back({result.times[i], result.ms_error[i], result.est_second_moment[i],
                              result.analytic_second_moment[i], result.recurrence_second_moment[i],
                              result.std_error_of_estimates[i], result.exact_est_second_moment[i],
                              result.exact_std_error[i], result.overflow[i] != 0});
    }
    return table;
}

Table converge_table(const ConvergenceResult& result) {
    Table table;
    table.columns = {"h", "ms_error", "fitted_slope"};
    for (std::size_t i = 0; i < result.step_sizes.size(); ++i) {
        table.rows.push_back({result.step_sizes[i], result.errors[i], result.slope});
    }
    return table;
}

void write_region_csv(const RegionGrid& grid, std::ostream& out) {
    out << "x,y,member_sde";
    for (const RegionSpec& spec : grid.specs) out << ",member_" << spec.label();
    out << '\n';
    std::string line;
    for (int iy = 0; iy < grid.ny; ++iy) {
        const std::string y = format_double(grid.y_center(iy));
        for (int ix = 0; ix < grid.nx; ++ix) {
            line = format_double(grid.x_center(ix));
            line += ',';
            line += y;
            for (std::size_t layer = 0; layer < grid.membership.size(); ++layer) {
                line += grid.member(layer, ix, iy) ? ",1" : ",0";
            }
            line += '\n';
            out << line;
        }
    }
}

void write_region_json(const RegionGrid& grid, std::ostream& out) {
    nlohmann::ordered_json doc;
    doc["x_min"] = grid.x_min;
    doc["x_max"] = grid.x_max;
    doc["y_min"] = grid.y_min;
    doc["y_max"] = grid.y_max;
    doc["nx"] = grid.nx;
    doc["ny"] = grid.ny;
    doc["cell_centers"] = true;
    auto layers = nlohmann::ordered_json::array();
    for (std::size_t layer = 0; layer < grid.membership.size(); ++layer) {
        nlohmann::ordered_json entry;
        entry["name"] = layer == 0 ? std::string("sde") : grid.specs[layer - 1].label();
        // one string of '0'/'1' per row, row 0 at y_min
        auto rows = nlohmann::ordered_json::array();
        for (int iy = 0; iy < grid.ny; ++iy) {
            std::string row(static_cast<std::size_t>(grid.nx), '0');
            for (int ix = 0; ix < grid.nx; ++ix) {
                if (grid.member(layer, ix, iy)) row[static_cast<std::size_t>(ix)] = '1';
            }
            rows.push_back(std::move(row));
        }
        entry["rows"] = std::move(rows);
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    out << doc.dump(1) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

struct EquationFlags {
    std::string lambda = "-2";
    std::vector<std::string> mus = {"1", "-1", "1"};
    std::string x0 = "0.1";

    void attach(CLI::App& cmd) {
        cmd.add_option("--lambda", lambda, "drift coefficient (RE, RE+IMi, RE-IMi)")
            ->capture_default_str();
        cmd.add_option("--mu", mus, "noise intensity; repeat once per noise term")
            ->delimiter(',')
            ->capture_default_str();
        cmd.add_option("--x0", x0, "initial value")->capture_default_str();
    }

    TestEquation equation() const {
        std::vector<Complex> values;
        for (const auto& text : mus) values.push_back(parse_complex(text));
        return TestEquation(parse_complex(lambda), std::move(values));
    }

    InitialState initial() const { return InitialState(parse_complex(x0)); }
};

struct OutputFlags {
    std::string path;
    std::string format = "csv";

    void attach(CLI::App& cmd) {
        cmd.add_option("--out", path, "output file (default: stdout)");
        cmd.add_option("--format", format, "csv or json")
            ->check(CLI::IsMember({"csv", "json"}))
            ->capture_default_str();
    }
    bool json() const { return format == "json"; }
};

template <typename Writer>
void emit(const OutputFlags& output, std::ostream& out, Writer&& writer) {
    if (output.path.empty()) {
        writer(out);
        return;
    }
    std::ostringstream buffer;
    writer(buffer);
    std::ofstream file(output.path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorKind::Io, "cannot open '" + output.path + "' for writing");
    file << buffer.str();
    file.close();
    if (!file) throw Error(ErrorKind::Io, "failed writing '" + output.path + "'");
}

std::vector<MethodSpec> expand_methods(const std::vector<std::string>& kinds,
                                       const std::vector<double>& thetas,
                                       const std::vector<double>& sigmas, double h) {
    std::vector<MethodSpec> methods;
    for (const auto& name : kinds) {
        const MethodKind kind = parse_method(name);
        for (double theta : thetas) {
            if (kind == MethodKind::SigmaMilstein) {
                for (double sigma : sigmas) methods.emplace_back(kind, theta, sigma, h);
            } else {
                methods.emplace_back(kind, theta, 0.0, h);
            }
        }
    }
    return methods;
}

MethodSpec single_method(const std::string& kind_text, double theta, double sigma, double h) {
    const MethodKind kind = parse_method(kind_text);
    if (kind != MethodKind::SigmaMilstein) {
        if (sigma != 0.0) {
            throw Error(ErrorKind::Validation, "--sigma is only valid with --method sigma-milstein");
        }
    }
    return MethodSpec(kind, theta, sigma, h);
}

std::string metadata_json(const TestEquation& eq, std::string_view command,
                          const std::vector<std::pair<std::string, Cell>>& fields) {
    nlohmann::ordered_json doc;
    doc["command"] = command;
    auto complex_json = [](Complex z) {
        return nlohmann::ordered_json::array({z.real(), z.imag()});
    };
    doc["lambda"] = complex_json(eq.lambda());
    auto mus = nlohmann::ordered_json::array();
    for (Complex mu : eq.mus()) mus.push_back(complex_json(mu));
    doc["mu"] = std::move(mus);
    for (const auto& [key, value] : fields) doc[key] = cell_json(value);
    return doc.dump();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mean-square stability and Monte Carlo tools for theta-Maruyama, "
                 "theta-Milstein and theta-sigma-Milstein schemes",
                 "msstab"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print this help and exit");

    // check
    auto* check = app.add_subcommand("check", "stability verdicts per method");
    EquationFlags check_eq;
    OutputFlags check_out;
    std::vector<std::string> check_kinds = {"maruyama"};
    std::vector<double> check_thetas = {0.0};
    std::vector<double> check_sigmas = {0.0};
    double check_h = 1.0;
    check_eq.attach(*check);
    check_out.attach(*check);
    check->add_option("--method", check_kinds, "maruyama | milstein | sigma-milstein (repeatable)")
        ->delimiter(',');
    check->add_option("--theta", check_thetas, "drift implicitness (repeatable)")->delimiter(',');
    check->add_option("--sigma", check_sigmas, "sigma values for sigma-milstein (repeatable)")
        ->delimiter(',');
    check->add_option("--h", check_h, "step-size")->capture_default_str();

    // region
    auto* region = app.add_subcommand("region", "rasterise scaled stability regions");
    OutputFlags region_out;
    std::vector<std::string> region_kinds = {"maruyama", "milstein"};
    std::vector<double> region_thetas = {0.0};
    std::vector<double> region_sigmas = {0.0};
    std::vector<int> region_ms = {1};
    std::vector<double> xrange = {-6.0, 1.0};
    std::vector<double> yrange = {0.0, 8.0};
    std::vector<int> resolution = {800, 800};
    unsigned region_threads = 0;
    region_out.attach(*region);
    region->add_option("--method", region_kinds, "methods to rasterise (repeatable)")->delimiter(',');
    region->add_option("--theta", region_thetas, "theta values (repeatable)")->delimiter(',');
    region->add_option("--sigma", region_sigmas, "sigma values for sigma-milstein")->delimiter(',');
    region->add_option("--m", region_ms, "noise-term counts for the Milstein family")->delimiter(',');
    region->add_option("--xrange", xrange, "x = h lambda range: MIN,MAX")->delimiter(',')->expected(2);
    region->add_option("--yrange", yrange, "y = h m mu^2 range: MIN,MAX")->delimiter(',')->expected(2);
    region->add_option("--res", resolution, "cells: N or NX,NY")->delimiter(',')->expected(1, 2);
    region->add_option("--threads", region_threads, "worker threads (0 = all cores)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo ensemble against the exact solution");
    EquationFlags sim_eq;
    OutputFlags sim_out;
    std::string sim_kind = "maruyama";
    double sim_theta = 0.0, sim_sigma = 0.0, sim_h = 1.0;
    std::uint32_t sim_steps = 10;
    std::uint64_t sim_traj = 100000, sim_seed = 1;
    unsigned sim_threads = 0;
    sim_eq.attach(*simulate);
    sim_out.attach(*simulate);
    simulate->add_option("--method", sim_kind, "maruyama | milstein | sigma-milstein")->capture_default_str();
    simulate->add_option("--theta", sim_theta)->capture_default_str();
    simulate->add_option("--sigma", sim_sigma)->capture_default_str();
    simulate->add_option("--h", sim_h)->capture_default_str();
    simulate->add_option("--steps", sim_steps)->capture_default_str();
    simulate->add_option("--traj", sim_traj, "trajectory count M")->capture_default_str();
    simulate->add_option("--seed", sim_seed)->capture_default_str();
    simulate->add_option("--threads", sim_threads, "worker threads (0 = all cores)");

    // converge
    auto* converge = app.add_subcommand("converge", "strong convergence order study");
    EquationFlags conv_eq;
    OutputFlags conv_out;
    std::string conv_kind = "maruyama";
    double conv_theta = 0.0, conv_sigma = 0.0, conv_T = 1.0;
    std::optional<double> conv_h_fine;
    std::vector<double> h_list;
    std::uint64_t conv_traj = 10000, conv_seed = 1;
    unsigned conv_threads = 0;
    conv_eq.attach(*converge);
    conv_out.attach(*converge);
    converge->add_option("--method", conv_kind)->capture_default_str();
    converge->add_option("--theta", conv_theta)->capture_default_str();
    converge->add_option("--sigma", conv_sigma)->capture_default_str();
    converge->add_option("--T", conv_T, "end time")->capture_default_str();
    converge->add_option("--h-list", h_list, "step sizes, comma separated")->delimiter(',')->required();
    converge->add_option("--h-fine", conv_h_fine, "finest noise step (default: smallest h)");
    converge->add_option("--traj", conv_traj, "trajectory count M")->capture_default_str();
    converge->add_option("--seed", conv_seed)->capture_default_str();
    converge->add_option("--threads", conv_threads, "worker threads (0 = all cores)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    }

    try {
        if (check->parsed()) {
            const TestEquation eq = check_eq.equation();
            const auto methods = expand_methods(check_kinds, check_thetas, check_sigmas, check_h);
            const Table table = check_table(eq, methods);
            emit(check_out, out, [&](std::ostream& o) {
                if (check_out.json()) {
                    write_json(table, o, metadata_json(eq, "check", {{"h", check_h}}));
                } else {
                    write_csv(table, o);
                }
            });
        } else if (region->parsed()) {
            std::vector<RegionSpec> specs;
            for (const auto& name : region_kinds) {
                const MethodKind kind = parse_method(name);
                for (double theta : region_thetas) {
                    if (kind == MethodKind::Maruyama) {
                        specs.push_back({kind, theta, 0.0, 1});
                        continue;
                    }
                    const std::vector<double> sigmas =
                        kind == MethodKind::SigmaMilstein ? region_sigmas : std::vector<double>{0.0};
                    for (double sigma : sigmas) {
                        for (int m : region_ms) specs.push_back({kind, theta, sigma, m});
                    }
                }
            }
            const int nx = resolution.at(0);
            const int ny = resolution.size() > 1 ? resolution[1] : resolution[0];
            const RegionGrid grid = rasterize_region(std::move(specs), xrange[0], xrange[1],
                                                     yrange[0], yrange[1], nx, ny, region_threads);
            emit(region_out, out, [&](std::ostream& o) {
                if (region_out.json()) {
                    write_region_json(grid, o);
                } else {
                    write_region_csv(grid, o);
                }
            });
        } else if (simulate->parsed()) {
            const TestEquation eq = sim_eq.equation();
            const InitialState init = sim_eq.initial();
            const MethodSpec method = single_method(sim_kind, sim_theta, sim_sigma, sim_h);
            NoisePlan plan;
            plan.seed = sim_seed;
            plan.trajectories = sim_traj;
            plan.n_fine = std::max<std::uint32_t>(sim_steps, 1);
            plan.m = static_cast<std::uint32_t>(eq.m());
            plan.h_fine = sim_h;
            const EnsembleResult result =
                run_ensemble(method, eq, init, plan, sim_steps, 1, {sim_threads});
            const Table table = simulate_table(result);
            emit(sim_out, out, [&](std::ostream& o) {
                if (sim_out.json()) {
                    write_json(table, o,
                               metadata_json(eq, "simulate",
                                             {{"method", std::string(to_string(method.kind()))},
                                              {"theta", method.theta()},
                                              {"sigma", method.sigma()},
                                              {"h", method.h()},
                                              {"trajectories", static_cast<std::int64_t>(sim_traj)},
                                              {"seed", static_cast<std::int64_t>(sim_seed)}}));
                } else {
                    write_csv(table, o);
                }
            });
        } else if (converge->parsed()) {
            const TestEquation eq = conv_eq.equation();
            const InitialState init = conv_eq.initial();
            if (h_list.size() < 2) {
                throw Error(ErrorKind::Validation, "--h-list needs at least two step sizes");
            }
            const double h_fine =
                conv_h_fine ? *conv_h_fine : *std::min_element(h_list.begin(), h_list.end());
            if (!(h_fine > 0.0)) throw Error(ErrorKind::Validation, "--h-fine must be positive");
            const double n_fine = std::round(conv_T / h_fine);
            if (n_fine < 1.0 || n_fine > std::numeric_limits<std::uint32_t>::max() ||
                std::fabs(n_fine * h_fine - conv_T) > 1e-9 * conv_T) {
                throw Error(ErrorKind::Validation, "h_fine must divide T");
            }
            NoisePlan plan;
            plan.seed = conv_seed;
            plan.trajectories = conv_traj;
            plan.n_fine = static_cast<std::uint32_t>(n_fine);
            plan.m = static_cast<std::uint32_t>(eq.m());
            plan.h_fine = h_fine;
            const MethodSpec method = single_method(conv_kind, conv_theta, conv_sigma, h_list[0]);
            const ConvergenceResult result =
                estimate_convergence_order(method, eq, init, conv_T, h_list, plan, {conv_threads});
            const Table table = converge_table(result);
            emit(conv_out, out, [&](std::ostream& o) {
                if (conv_out.json()) {
                    write_json(table, o,
                               metadata_json(eq, "converge",
                                             {{"method", std::string(to_string(method.kind()))},
                                              {"theta", method.theta()},
                                              {"sigma", method.sigma()},
                                              {"T", conv_T},
                                              {"h_fine", h_fine},
                                              {"trajectories", static_cast<std::int64_t>(conv_traj)},
                                              {"seed", static_cast<std::int64_t>(conv_seed)},
                                              {"slope", result.slope}}));
                } else {
                    write_csv(table, o);
                }
            });
        }
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code_for(e.kind());
    }
    return kOk;
}

}  // namespace msstab::cli
