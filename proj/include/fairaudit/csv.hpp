#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fairaudit/error.hpp"

namespace fairaudit::csv {

// The artifact's CSV dialect is deliberately plain: comma-separated, no
// quoting, one record per line. Ids containing commas are rejected on write.

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

// All lines of a text file, without trailing newlines. Skips a final empty line.
inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    require_input(in.good(), "cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

inline double parse_double(const std::string& field, const std::string& context) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    require_input(ec == std::errc() && ptr == end, context + ": not a number: '" + field + "'");
    return value;
}

inline long parse_long(const std::string& field, const std::string& context) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    long value = 0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    require_input(ec == std::errc() && ptr == end, context + ": not an integer: '" + field + "'");
    return value;
}

// 17 significant digits round-trips every finite double.
inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline void check_field(const std::string& field) {
    require_input(field.find(',') == std::string::npos && field.find('\n') == std::string::npos,
                  "field may not contain ',' or newline: '" + field + "'");
}

// Write-temp-then-rename; readers never observe a partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require_input(out.good(), "cannot write file: " + tmp);
        out << content;
        out.flush();
        require_input(out.good(), "write failed: " + tmp);
    }
    require_input(std::rename(tmp.c_str(), path.c_str()) == 0, "cannot rename " + tmp + " to " + path);
}

} // namespace fairaudit::csv

