#include "memop/services.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memop/text.hpp"

namespace memop {

LocalServices::LocalServices(int dimension) : dimension_(std::max(1, dimension)) {}

ServiceDescriptor LocalServices::descriptor() const {
    return {"local-stub", dimension_, "1"};
}

std::vector<double> LocalServices::embed(std::string_view text) const {
    if (normalize_whitespace(text).empty())
        throw ServiceError(ServiceError::Code::EmptyText, "cannot embed empty text");

    const std::string lower = to_lower_ascii(text);
    std::vector<double> v(static_cast<std::size_t>(dimension_), 0.0);
    if (lower.size() < 3) {
        v[fnv1a64(lower) % static_cast<std::uint64_t>(dimension_)] += 1.0;
    } else {
        for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
            const std::uint64_t h = fnv1a64(std::string_view(lower).substr(i, 3));
            v[h % static_cast<std::uint64_t>(dimension_)] += 1.0;
        }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

std::string LocalServices::summarize(const std::vector<std::string>& texts,
                                     std::string_view focus, std::int64_t max_tokens) const {
    if (texts.empty())
        throw ServiceError(ServiceError::Code::EmptyInput, "nothing to summarize");
    if (max_tokens < 1)
        throw ServiceError(ServiceError::Code::EmptyBudget, "max_tokens must be >= 1");

    std::vector<std::string> sentences;
    for (const auto& text : texts) {
        for (auto& s : split_sentences(text)) sentences.push_back(std::move(s));
    }
    if (sentences.empty()) return "";

    std::vector<std::string> focus_terms = tokenize(focus);
    std::sort(focus_terms.begin(), focus_terms.end());
    focus_terms.erase(std::unique(focus_terms.begin(), focus_terms.end()), focus_terms.end());

    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> hits(sentences.size(), 0);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        auto terms = tokenize(sentences[i]);
        std::sort(terms.begin(), terms.end());
        for (const auto& f : focus_terms) {
            if (std::binary_search(terms.begin(), terms.end(), f)) ++hits[i];
        }
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return hits[a] > hits[b]; });

    // greedy pack under the word budget, then restore source order
    std::vector<bool> selected(sentences.size(), false);
    std::int64_t remaining = max_tokens;
    bool any = false;
    for (std::size_t idx : order) {
        const auto wc = static_cast<std::int64_t>(word_count(sentences[idx]));
        if (wc <= remaining) {
            selected[idx] = true;
            remaining -= wc;
            any = true;
        }
    }
    if (!any) {
        // even the best sentence exceeds the budget: truncate it instead
        const std::string& best = sentences[order.front()];
        std::string out;
        std::int64_t used = 0;
        std::size_t i = 0;
        while (i < best.size() && used < max_tokens) {
            while (i < best.size() && best[i] == ' ') ++i;
            std::size_t start = i;
            while (i < best.size() && best[i] != ' ') ++i;
            if (i > start) {
                if (!out.empty()) out += ' ';
                out.append(best, start, i - start);
                ++used;
            }
        }
        return out;
    }

    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (!selected[i]) continue;
        if (!out.empty()) out += ' ';
        out += sentences[i];
    }
    return out;
}

std::string LocalServices::merge_text(const std::vector<std::string>& texts) const {
    if (texts.size() < 2)
        throw ServiceError(ServiceError::Code::TooFewTexts, "merge needs at least two texts");

    std::vector<std::string> kept;
    std::vector<std::string> seen;
    for (const auto& text : texts) {
        for (auto& sentence : split_sentences(text)) {
            std::string key = to_lower_ascii(normalize_whitespace(sentence));
            if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
            seen.push_back(std::move(key));
            kept.push_back(std::move(sentence));
        }
    }
    std::string out;
    for (const auto& s : kept) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty() || a.size() != b.size()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace memop
