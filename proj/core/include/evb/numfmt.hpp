#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace evb {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

// Undefined rates render as the literal "nan".
std::string format_rate(std::optional<double> value);

// Strict full-string parse; throws FormatError on trailing junk or empty input.
double parse_double(std::string_view text);

}  // namespace evb
