#pragma once

#include <string>
#include <string_view>

namespace gaitstream {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Strict parse of the whole field; throws FormatError on trailing garbage.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

} // namespace gaitstream
