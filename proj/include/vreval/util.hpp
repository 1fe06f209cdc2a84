#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vreval::util {

// SHA-256 hex digest of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

// SHA-256 hex digest of a file's raw bytes. Throws IoError.
std::string sha256_file_hex(const std::string& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string read_file(const std::string& path);           // throws IoError
void write_file(const std::string& path, std::string_view content);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Splits on runs of whitespace; no empty tokens.
std::vector<std::string> whitespace_tokens(std::string_view s);

// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string text, std::string_view from, std::string_view to);

// Renders num/den as a percentage with `decimals` fraction digits, rounding
// half-up in exact integer arithmetic (e.g. 464/500, 1 -> "92.8").
std::string format_percent(std::int64_t num, std::int64_t den, int decimals);

// ISO-8601 UTC timestamp of the current wall clock.
std::string now_iso8601();

}  // namespace vreval::util
