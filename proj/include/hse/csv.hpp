#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hse {

/// Minimal CSV codec: comma separator, double-quote quoting with "" escape,
/// LF line endings, UTF-8 passthrough.
namespace csv {

/// Quotes when necessary; `force_quote` always quotes (used for categorical
/// labels so they are unambiguous against numbers).
std::string encode_field(std::string_view field, bool force_quote = false);

std::string encode_row(const std::vector<std::string>& fields);

/// Splits one logical document into rows of fields. Quoted fields may
/// contain commas and newlines.
std::vector<std::vector<std::string>> parse(std::string_view text);

}  // namespace csv

}  // namespace hse
