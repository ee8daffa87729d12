#pragma once

#include <string>
#include <vector>

namespace stgcn {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Plain unquoted CSV. Rows must all have the header's width; violations
// raise IOError naming the offending row.
CsvTable read_csv(const std::string& path);

// Writes atomically (temp file in the same directory, then rename).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Shortest text that parses back to the same double (round-trips exactly).
std::string format_double(double v);

// Strict double parse of a whole cell; IOError on junk.
double parse_double(const std::string& cell, const std::string& context);

// Atomic whole-file write used by every artifact writer.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace stgcn
