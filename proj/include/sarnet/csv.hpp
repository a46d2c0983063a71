#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sarnet {

// Minimal CSV support for the numeric table formats used here: a header
// row, comma separators, '.' decimal point, blank cell = missing value.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;

    std::size_t column_index(const std::string& name) const; // npos if absent
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

CsvTable read_csv(const std::filesystem::path& path);

// All doubles are written with "%.17g" so that values round-trip exactly
// and identical data always serializes to identical bytes.
std::string format_double(double v);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

} // namespace sarnet
