#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace memop {

std::string to_lower_ascii(std::string_view s);

// Collapses whitespace runs to single spaces and trims the ends.
std::string normalize_whitespace(std::string_view s);

// Lowercased tokens split on ASCII non-alphanumerics; byte runs >= 0x80
// (multibyte text) stay glued together as one token.
std::vector<std::string> tokenize(std::string_view s);

std::size_t word_count(std::string_view s);

// Fraction of distinct query tokens that occur in the document tokens.
double lexical_overlap(std::string_view query, std::string_view document);

// Segments on sentence punctuation ([.!?] runs and newlines); when that
// yields fewer than two segments, falls back to clause separators [,;].
std::vector<std::string> split_sentences(std::string_view s);

// Fixed-width character windows aligned to UTF-8 codepoint boundaries.
std::vector<std::string> split_chunks(std::string_view s, std::int64_t chunk_size);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace memop
