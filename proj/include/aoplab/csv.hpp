#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace aoplab {

/// Shortest round-trip decimal form of v (std::to_chars), so CSV output is
/// byte-deterministic and re-parses to the identical double.
std::string format_double(double v);

/// Strict double parse of an entire field; throws std::runtime_error with
/// `where` in the message on failure.
double parse_double(std::string_view field, const std::string& where);

std::vector<std::string_view> split_csv_line(std::string_view line);

/// Reads all lines of a text file (strips trailing \r). Throws on open error.
std::vector<std::string> read_lines(const std::string& path);

/// Writes bytes to a file; throws on failure.
void write_file(const std::string& path, const std::string& contents);

}  // namespace aoplab
