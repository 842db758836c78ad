#include "memop/services.hpp"

#include <nlohmann/json.hpp>

#include "httplib.h"

namespace memop {

using nlohmann::json;

struct HttpServices::Impl {
    explicit Impl(std::string url) : base_url(std::move(url)), client(base_url) {
        client.set_connection_timeout(5);
        client.set_read_timeout(10);
    }

    json post(const std::string& path, const json& body) const {
        auto res = client.Post(path, body.dump(), "application/json");
        if (!res)
            throw ServiceError(ServiceError::Code::Transport,
                               "no response from " + base_url + path);
        if (res->status != 200)
            throw ServiceError(ServiceError::Code::BadResponse,
                               path + " returned status " + std::to_string(res->status));
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded())
            throw ServiceError(ServiceError::Code::BadResponse, path + " returned non-JSON");
        return parsed;
    }

    std::string base_url;
    mutable httplib::Client client;
};

HttpServices::HttpServices(std::string base_url)
    : impl_(std::make_unique<Impl>(std::move(base_url))) {}

HttpServices::~HttpServices() = default;

ServiceDescriptor HttpServices::descriptor() const {
    auto res = impl_->client.Get("/descriptor");
    if (!res || res->status != 200)
        throw ServiceError(ServiceError::Code::Transport,
                           "no descriptor from " + impl_->base_url);
    json j = json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ServiceError(ServiceError::Code::BadResponse, "descriptor is not JSON");
    ServiceDescriptor d;
    d.name = j.value("name", "remote");
    d.dimension = j.value("dimension", 0);
    d.version = j.value("version", "unknown");
    return d;
}

std::vector<double> HttpServices::embed(std::string_view text) const {
    json resp = impl_->post("/embed", json{{"text", std::string(text)}});
    if (!resp.is_object() || !resp.contains("vector") || !resp["vector"].is_array())
        throw ServiceError(ServiceError::Code::BadResponse, "/embed response lacks a vector");
    std::vector<double> v;
    v.reserve(resp["vector"].size());
    for (const auto& x : resp["vector"]) {
        if (!x.is_number())
            throw ServiceError(ServiceError::Code::BadResponse, "/embed vector is non-numeric");
        v.push_back(x.get<double>());
    }
    return v;
}

std::string HttpServices::summarize(const std::vector<std::string>& texts,
                                    std::string_view focus, std::int64_t max_tokens) const {
    json resp = impl_->post("/summarize", json{{"texts", texts},
                                               {"focus", std::string(focus)},
                                               {"max_tokens", max_tokens}});
    if (!resp.is_object() || !resp.contains("summary") || !resp["summary"].is_string())
        throw ServiceError(ServiceError::Code::BadResponse,
                           "/summarize response lacks a summary");
    return resp["summary"].get<std::string>();
}

std::string HttpServices::merge_text(const std::vector<std::string>& texts) const {
    json resp = impl_->post("/merge", json{{"texts", texts}});
    if (!resp.is_object() || !resp.contains("merged") || !resp["merged"].is_string())
        throw ServiceError(ServiceError::Code::BadResponse, "/merge response lacks merged text");
    return resp["merged"].get<std::string>();
}

}  // namespace memop
