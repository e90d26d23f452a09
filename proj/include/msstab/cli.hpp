#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "msstab/error.hpp"
#include "msstab/model.hpp"
#include "msstab/montecarlo.hpp"
#include "msstab/schemes.hpp"
#include "msstab/stability.hpp"

namespace msstab::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kValidation = 2,
    kNumeric = 3,
    kIo = 4,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Parses `RE`, `RE+IMi` or `RE-IMi` (decimal components, no whitespace).
/// Throws Error(Validation) on anything else.
Complex parse_complex(std::string_view text);

MethodKind parse_method(std::string_view text);

/// Round-trippable decimal: 17 significant digits, "inf"/"-inf"/"nan".
std::string format_double(double value);

using Cell = std::variant<std::monostate, double, std::int64_t, bool, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// Header row always present; booleans as 0/1, empty cells left blank.
void write_csv(const Table& table, std::ostream& out);
/// {"rows": [{column: value, ...}, ...]} plus any `extra` fields.
void write_json(const Table& table, std::ostream& out, std::string_view extra_json = {});

/// One row for the SDE itself followed by one per method.
Table check_table(const TestEquation& eq, const std::vector<MethodSpec>& methods);

Table simulate_table(const EnsembleResult& result);

Table converge_table(const ConvergenceResult& result);

void write_region_csv(const RegionGrid& grid, std::ostream& out);
void write_region_json(const RegionGrid& grid, std::ostream& out);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace msstab::cli
