#pragma once

#include <optional>
#include <string>
#include <vector>

namespace triphase {

/// Comma-separated table with optional `#%` metadata lines before the header.
struct CsvTable {
    std::vector<std::string> meta;   // metadata lines without the "#% " prefix
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 if absent
};

CsvTable read_csv(const std::string& path);

/// Writes content to path atomically (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);

/// Shortest representation that round-trips an IEEE double exactly.
std::string format_double(double v);

/// Empty string for blank cells.
std::optional<double> parse_optional_double(const std::string& cell, const std::string& context);
double parse_double(const std::string& cell, const std::string& context);
long parse_long(const std::string& cell, const std::string& context);

std::vector<std::string> split_csv_line(const std::string& line);
std::string join_csv(const std::vector<std::string>& cells);

} // namespace triphase
