#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memop {

struct ServiceDescriptor {
    std::string name;
    int dimension = 0;
    std::string version;
};

class ServiceError : public std::runtime_error {
public:
    enum class Code { EmptyText, EmptyInput, EmptyBudget, TooFewTexts, Transport, BadResponse };

    ServiceError(Code code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

class ServiceInterface {
public:
    virtual ~ServiceInterface() = default;

    virtual ServiceDescriptor descriptor() const = 0;
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::string summarize(const std::vector<std::string>& texts, std::string_view focus,
                                  std::int64_t max_tokens) const = 0;
    virtual std::string merge_text(const std::vector<std::string>& texts) const = 0;
};

// Deterministic in-process stand-ins: a hashed-trigram embedding, an
// extractive summarizer, and sentence-level dedup for merge. No model, no
// randomness — identical inputs always produce identical outputs.
class LocalServices final : public ServiceInterface {
public:
    explicit LocalServices(int dimension = 64);

    ServiceDescriptor descriptor() const override;
    std::vector<double> embed(std::string_view text) const override;
    std::string summarize(const std::vector<std::string>& texts, std::string_view focus,
                          std::int64_t max_tokens) const override;
    std::string merge_text(const std::vector<std::string>& texts) const override;

private:
    int dimension_;
};

// Same contract spoken over HTTP: POST /embed, /summarize, /merge and
// GET /descriptor against a base URL. Transport failures surface as
// ServiceError rather than anything retried or cached.
class HttpServices final : public ServiceInterface {
public:
    explicit HttpServices(std::string base_url);
    ~HttpServices() override;

    ServiceDescriptor descriptor() const override;
    std::vector<double> embed(std::string_view text) const override;
    std::string summarize(const std::vector<std::string>& texts, std::string_view focus,
                          std::int64_t max_tokens) const override;
    std::string merge_text(const std::vector<std::string>& texts) const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace memop
