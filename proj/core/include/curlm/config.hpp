#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace curlm {

/// Flat `key = value` settings. Blank lines and lines starting with '#' are
/// ignored; later assignments override earlier ones.
using KeyValues = std::map<std::string, std::string>;

/// Throws ParseError with the line number on a line without '='.
KeyValues parse_key_values(std::istream& in);
KeyValues load_key_values(const std::string& path);
void write_key_values(std::ostream& out, const KeyValues& values);

int parse_int_value(const std::string& key, const std::string& value);
long long parse_int64_value(const std::string& key, const std::string& value);
double parse_double_value(const std::string& key, const std::string& value);
bool parse_bool_value(const std::string& key, const std::string& value);
/// Comma-separated reals, e.g. "0.1, 0.3, 0.6".
std::vector<double> parse_double_list(const std::string& key, const std::string& value);

}  // namespace curlm
