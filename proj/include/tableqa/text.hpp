#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tableqa {

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

/// Decodes UTF-8 into code points. Invalid bytes decode as themselves.
std::u32string utf8_decode(std::string_view s);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);

std::string base64_encode(std::span<const std::uint8_t> data);

std::vector<std::string> split_lines(std::string_view text);

/// Contents of the first ``` fenced block, or the trimmed text when no fence
/// is present. An unterminated fence runs to the end of the text.
std::string strip_code_fences(std::string_view text);

/// Keeps at most max_chars bytes from the tail, cutting on a UTF-8 boundary.
std::string tail_excerpt(std::string_view text, std::size_t max_chars);

}  // namespace tableqa
