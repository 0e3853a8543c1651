#pragma once

#include <string>

namespace les {

/// Shortest decimal text that reads back to the identical double.
std::string format_double(double value);

/// Fixed-width scientific text for tables.
std::string format_sci(double value, int precision = 10);

} // namespace les
