// SPDX-License-Identifier: Apache-2.0
#include <agenttune/llm_gateway.hpp>

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>

namespace agenttune {

namespace {

struct ParsedUrl {
    std::string origin; ///< scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw LlmError(fmt::format("backend URL '{}' lacks a scheme", url));
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    split_url(options_.url);
}

HttpBackendOptions HttpBackend::options_from_env(std::string model) {
    HttpBackendOptions o;
    const char* url = std::getenv("AGENTTUNE_LLM_URL");
    if (!url || !*url)
        throw LlmError("AGENTTUNE_LLM_URL is not set");
    o.url = url;
    if (const char* key = std::getenv("AGENTTUNE_LLM_KEY"))
        o.api_key = key;
    o.model = std::move(model);
    return o;
}

json HttpBackend::request_body(const HttpBackendOptions& options, const LlmRequest& request) {
    return {{"model", options.model},
            {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"max_tokens", request.max_output},
            {"temperature", request.temperature},
            {"metadata", {{"kind", to_string(request.kind)}}}};
}

LlmResponse HttpBackend::parse_response_body(std::string_view body) {
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw MalformedResponse("backend reply is not a JSON object");
    LlmResponse r;
    r.backend_id = "http";
    if (j.contains("text") && j.at("text").is_string()) {
        r.text = j.at("text").get<std::string>();
    } else if (j.contains("choices") && j.at("choices").is_array() && !j.at("choices").empty()) {
        // chat-completions shaped reply
        const auto& c = j.at("choices").at(0);
        if (c.contains("message") && c.at("message").contains("content") && c.at("message").at("content").is_string())
            r.text = c.at("message").at("content").get<std::string>();
        else if (c.contains("text") && c.at("text").is_string())
            r.text = c.at("text").get<std::string>();
        else
            throw MalformedResponse("backend reply has no text");
    } else {
        throw MalformedResponse("backend reply has no text");
    }
    if (j.contains("usage") && j.at("usage").is_object()) {
        const auto& u = j.at("usage");
        r.tokens_in = u.value("tokens_in", u.value("prompt_tokens", std::int64_t{0}));
        r.tokens_out = u.value("tokens_out", u.value("completion_tokens", std::int64_t{0}));
    }
    return r;
}

LlmResponse HttpBackend::complete(const LlmRequest& request) {
    const auto url = split_url(options_.url);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(options_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto res = client.Post(url.path, headers, request_body(options_, request).dump(), "application/json");
    if (!res)
        throw TransportError(fmt::format("POST {} failed: {}", options_.url, httplib::to_string(res.error())));
    if (res->status == 429 || res->status >= 500)
        throw TransportError(fmt::format("backend returned HTTP {}", res->status));
    if (res->status != 200)
        throw LlmError(fmt::format("backend returned HTTP {}: {}", res->status, res->body.substr(0, 200)));

    auto r = parse_response_body(res->body);
    if (r.tokens_in == 0 && r.tokens_out == 0) {
        r.tokens_in = estimate_tokens(request.prompt);
        r.tokens_out = estimate_tokens(r.text);
    }
    return r;
}

} // namespace agenttune
