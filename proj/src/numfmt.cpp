#include "gaitstream/numfmt.hpp"

#include <array>
#include <charconv>

#include "gaitstream/errors.hpp"

namespace gaitstream {

std::string format_double(double value)
{
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) {
        throw FormatError("cannot format number");
    }
    return std::string(buf.data(), end);
}

double parse_double(std::string_view text)
{
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw FormatError("not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text)
{
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw FormatError("not an integer: '" + std::string(text) + "'");
    }
    return value;
}

} // namespace gaitstream
