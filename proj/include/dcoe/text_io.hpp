#pragma once

// Plain-text inputs: z-vectors, index lists and delimited numeric matrices.
// Indices in files are 1-based; in memory they are 0-based.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/stat_vector.hpp"

namespace dcoe::io {

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open '" + path + "'");
    return in;
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Fields separated by commas, semicolons, tabs or spaces.
inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string current;
    for (char c : line) {
        if (c == ',' || c == ';' || c == '\t' || c == ' ' || c == '\r') {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

inline bool parse_double(const std::string& token, double& out) {
    // from_chars rejects a leading '+'
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

inline bool skip_line(std::string_view line) {
    const auto t = trim(line);
    return t.empty() || t.front() == '#';
}

}  // namespace detail

/// One value per line, or two columns (1-based index, z) in any order of rows.
inline std::vector<double> read_z_file(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<double> values;
    std::vector<std::pair<std::size_t, double>> indexed;
    std::string line;
    std::size_t line_no = 0;
    int columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::skip_line(line)) continue;
        const auto fields = detail::split_fields(line);
        const int width = static_cast<int>(fields.size());
        if (columns == 0) {
            columns = width;
            if (columns != 1 && columns != 2) {
                fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": expected 1 or 2 columns");
            }
        }
        if (width != columns) {
            fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": inconsistent column count");
        }
        double z = 0.0;
        if (!detail::parse_double(fields.back(), z) || !std::isfinite(z)) {
            if (columns == 2 && values.empty() && indexed.empty()) continue;  // header
            fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": invalid z value '" + fields.back() + "'");
        }
        if (columns == 1) {
            values.push_back(z);
        } else {
            double idx = 0.0;
            if (!detail::parse_double(fields.front(), idx) || idx < 1 || idx != std::floor(idx)) {
                fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": invalid index '" + fields.front() + "'");
            }
            indexed.emplace_back(static_cast<std::size_t>(idx) - 1, z);
        }
    }
    if (columns == 2) {
        values.assign(indexed.size(), 0.0);
        std::vector<bool> seen(indexed.size(), false);
        for (const auto& [idx, z] : indexed) {
            if (idx >= values.size() || seen[idx]) {
                fail(Errc::Parse, path + ": indices must be a permutation of 1..p");
            }
            seen[idx] = true;
            values[idx] = z;
        }
    }
    if (values.empty()) fail(Errc::Parse, path + ": no z values");
    return values;
}

/// 1-based indices, whitespace/comma separated; returned 0-based.
inline std::vector<std::size_t> read_index_file(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<std::size_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::skip_line(line)) continue;
        for (const auto& field : detail::split_fields(line)) {
            double idx = 0.0;
            if (!detail::parse_double(field, idx) || idx < 1 || idx != std::floor(idx)) {
                fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": invalid index '" + field + "'");
            }
            out.push_back(static_cast<std::size_t>(idx) - 1);
        }
    }
    return out;
}

/// Rows of a delimited numeric file. Non-finite entries are kept (callers validate).
inline std::vector<std::vector<double>> read_numeric_matrix(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::skip_line(line)) continue;
        std::vector<double> row;
        for (const auto& field : detail::split_fields(line)) {
            double v = 0.0;
            if (!detail::parse_double(field, v)) {
                fail(Errc::Parse, path + ":" + std::to_string(line_no) + ": invalid number '" + field + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline StatVector load_stat_vector(const std::string& z_path, Sidedness sided,
                                   const std::string& truth_path = {}) {
    StatVector stats(read_z_file(z_path), sided);
    if (!truth_path.empty()) stats.set_truth(read_index_file(truth_path));
    return stats;
}

}  // namespace dcoe::io
