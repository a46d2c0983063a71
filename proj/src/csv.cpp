#include "sarnet/csv.hpp"

#include "sarnet/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sarnet {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

} // namespace

std::size_t CsvTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    return npos;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::IoFailure, "cannot open " + path.string());

    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) raise(Errc::IoFailure, "empty file " + path.string());
    for (auto& name : split_line(line)) table.columns.push_back(trim(name));

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_line(line);
        std::vector<std::optional<double>> row(table.columns.size());
        for (std::size_t i = 0; i < table.columns.size() && i < cells.size(); ++i) {
            const std::string cell = trim(cells[i]);
            if (cell.empty()) continue;
            try {
                std::size_t pos = 0;
                const double v = std::stod(cell, &pos);
                if (pos != cell.size()) throw std::invalid_argument(cell);
                row[i] = v;
            } catch (const std::exception&) {
                raise(Errc::IoFailure, "non-numeric cell '" + cell + "' in " + path.string());
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out << ',';
        out << columns[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoFailure, "cannot write " + path.string());
    out << content;
    if (!out) raise(Errc::IoFailure, "write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoFailure, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace sarnet
