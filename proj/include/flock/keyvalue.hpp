#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

namespace flock {

/// Ordered `key = value` text block. Blank lines and lines starting with
/// '#' are ignored on read.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(std::istream& in);
void write_key_values(std::ostream& out, const KeyValues& kv);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);

}  // namespace flock
