#pragma once

#include "hive/common.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace hive::io {

struct LabeledMatrix {
    Matrix values;
    std::vector<std::string> header;  // empty unless the file had one
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

/// Parses a rectangular numeric CSV; rows are samples. Errors name the
/// 1-based line and column of the offending cell.
inline LabeledMatrix parse_matrix_csv(std::istream& in, bool has_header, const std::string& source = "<stream>") {
    LabeledMatrix out;
    std::vector<double> data;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;
        auto cells = detail::split_commas(view);
        if (header_pending) {
            for (auto c : cells) out.header.emplace_back(detail::trim(c));
            cols = cells.size();
            header_pending = false;
            continue;
        }
        if (cols == 0) cols = cells.size();
        if (cells.size() != cols) {
            throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(cols));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            std::string_view cell = detail::trim(cells[c]);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw DataError(source + ": non-numeric value '" + std::string(cell) + "' at line " +
                                std::to_string(line_no) + ", column " + std::to_string(c + 1));
            }
            data.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError(source + ": no data rows");
    out.values.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out.values(static_cast<Index>(r), static_cast<Index>(c)) = data[r * cols + c];
    return out;
}

inline LabeledMatrix load_matrix_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return parse_matrix_csv(in, has_header, path);
}

/// 17 significant digits, '.' decimal point, independent of locale.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header = {}) {
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
    }
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_matrix_csv(out, m, header);
}

}  // namespace hive::io
