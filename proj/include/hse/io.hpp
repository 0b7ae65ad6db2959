#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "hse/error.hpp"

namespace hse {

/// Shortest round-trip decimal representation (std::to_chars). The same
/// bytes on every platform for the same double, which is what keeps plan
/// and result files bit-reproducible.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
    double v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::Schema,
                    "not a number: '" + std::string(text) + "'");
    }
    return v;
}

inline long parse_long(std::string_view text) {
    long v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCategory::Schema,
                    "not an integer: '" + std::string(text) + "'");
    }
    return v;
}

std::string read_file(const std::string& path);

/// Writes to `<path>.tmp.<pid>` then renames. Partial output never lands on
/// the final path.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace hse
