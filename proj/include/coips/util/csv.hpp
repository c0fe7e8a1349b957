#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "coips/errors.hpp"

namespace coips::csv {

/// Splits one line on commas. Fields are never quoted in the formats this
/// project emits, so embedded commas are rejected at write time instead.
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string check_field(const std::string& s) {
    if (s.find_first_of(",\n\r") != std::string::npos) throw FormatError("CSV field contains a separator: " + s);
    return s;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw FormatError("missing CSV column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline Table parse(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            t.header = split_line(line);
            continue;
        }
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size())
            throw FormatError("CSV line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                              " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(row));
    }
    if (lineno == 0) throw FormatError("empty CSV (no header)");
    return t;
}

/// Shortest representation that parses back to the same double.
inline std::string fmt_exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string fmt_sig(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
    return v;
}

inline long long parse_int(const std::string& s) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("not an integer: '" + s + "'");
    return v;
}

}  // namespace coips::csv
