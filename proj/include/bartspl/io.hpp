#pragma once

#include "bartspl/core_data.hpp"

#include <iosfwd>
#include <string>

namespace bartspl {

/// Reads a comma-separated file with a header row. Empty cells and `NA`
/// become NaN; any other non-numeric cell is a ValidationError.
RawTable read_csv_table(const std::string& path);
RawTable parse_csv_table(std::istream& in, const std::string& source = "<stream>");

/// Locale-independent, round-trippable formatting used by every writer.
std::string format_double(double x);

}  // namespace bartspl
