#include "les/format.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace les {

std::string format_double(double value)
{
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

std::string format_sci(double value, int precision)
{
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%.*e", precision, value);
    return buf.data();
}

} // namespace les
