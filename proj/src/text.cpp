#include "memop/text.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

namespace memop {
namespace {

bool is_ascii_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_token_byte(unsigned char c) {
    return is_ascii_alnum(c) || c >= 0x80;
}

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += static_cast<char>(c);
        }
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : s) {
        if (is_token_byte(c)) {
            if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
            current += static_cast<char>(c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::size_t word_count(std::string_view s) {
    std::size_t count = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

double lexical_overlap(std::string_view query, std::string_view document) {
    std::unordered_set<std::string> q_terms;
    for (auto& t : tokenize(query)) q_terms.insert(std::move(t));
    if (q_terms.empty()) return 0.0;
    std::unordered_set<std::string> d_terms;
    for (auto& t : tokenize(document)) d_terms.insert(std::move(t));
    std::size_t hit = 0;
    for (const auto& t : q_terms) {
        if (d_terms.count(t)) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(q_terms.size());
}

namespace {

std::vector<std::string> segment_on(std::string_view s, std::string_view boundary_chars,
                                    bool keep_boundary) {
    std::vector<std::string> parts;
    std::string current;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (boundary_chars.find(c) != std::string_view::npos) {
            if (keep_boundary) current += c;
            // swallow a run of boundary characters (e.g. "?!" or "...")
            while (i + 1 < s.size() && boundary_chars.find(s[i + 1]) != std::string_view::npos) {
                if (keep_boundary) current += s[i + 1];
                ++i;
            }
            std::string trimmed = normalize_whitespace(current);
            if (!trimmed.empty()) parts.push_back(std::move(trimmed));
            current.clear();
        } else if (c == '\n') {
            std::string trimmed = normalize_whitespace(current);
            if (!trimmed.empty()) parts.push_back(std::move(trimmed));
            current.clear();
        } else {
            current += c;
        }
        ++i;
    }
    std::string trimmed = normalize_whitespace(current);
    if (!trimmed.empty()) parts.push_back(std::move(trimmed));
    return parts;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view s) {
    auto parts = segment_on(s, ".!?", true);
    if (parts.size() >= 2) return parts;
    auto clauses = segment_on(s, ",;", false);
    if (clauses.size() >= 2) return clauses;
    return parts;
}

std::vector<std::string> split_chunks(std::string_view s, std::int64_t chunk_size) {
    std::vector<std::string> chunks;
    if (chunk_size <= 0) return chunks;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t end = i;
        std::int64_t taken = 0;
        while (end < s.size() && taken < chunk_size) {
            std::size_t step = 1;
            const unsigned char c = static_cast<unsigned char>(s[end]);
            if (c >= 0xF0) step = 4;
            else if (c >= 0xE0) step = 3;
            else if (c >= 0xC0) step = 2;
            end = std::min(s.size(), end + step);
            ++taken;
        }
        std::string piece = normalize_whitespace(s.substr(i, end - i));
        if (!piece.empty()) chunks.push_back(std::move(piece));
        i = end;
    }
    return chunks;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string(buf, 16);
}

}  // namespace memop
