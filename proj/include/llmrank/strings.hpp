#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace llmrank {

std::vector<std::string> split(std::string_view line, std::string_view delim);

std::string trim(std::string_view s);

bool starts_with_icase(std::string_view text, std::string_view prefix);

/// Lowercases and strips punctuation, collapsing whitespace runs; used to
/// compare item titles against free-form model output.
std::string normalize_title(std::string_view s);

/// Normalized tokens of a title (see normalize_title).
std::vector<std::string> title_tokens(std::string_view s);

/// Shortest decimal form that round-trips a double ("3", "4.5", "0.063046").
std::string format_double(double v);

/// Full-precision form for model files (round-trips bit-exactly).
std::string format_double_exact(double v);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace llmrank
