#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "beliefnet/gateway.hpp"

namespace beliefnet {

/// Chat-completion client for OpenAI-compatible HTTP(S) endpoints.
class LiveBackend final : public ChatBackend {
public:
    explicit LiveBackend(const ModelConfig& config) : config_(config) {
        const auto& url = config.endpoint;
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error("endpoint must be an absolute URL: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        origin_ = url.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
        if (const char* key = std::getenv(config.api_key_env.c_str())) api_key_ = key;
        if (api_key_.empty() && origin_.rfind("https://", 0) == 0) {
            throw Error("live backend: environment variable " + config.api_key_env + " is not set");
        }
    }

    std::string complete(const ChatRequest& request) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        const auto res = client.Post(path_, headers, request.to_json().dump(), "application/json");
        if (!res) {
            throw TransportError("request to " + origin_ + path_ + " failed: " + httplib::to_string(res.error()),
                                 true);
        }
        if (res->status == 429) throw TransportError("HTTP 429 from " + origin_, true, true);
        if (res->status >= 500) throw TransportError("HTTP " + std::to_string(res->status) + " from " + origin_, true);
        if (res->status != 200) {
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + origin_ + ": " + res->body,
                                 false);
        }
        try {
            const auto body = nlohmann::json::parse(res->body);
            return body.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed chat-completion response: ") + e.what(), false);
        }
    }

private:
    ModelConfig config_;
    std::string origin_;
    std::string path_;
    std::string api_key_;
};

}  // namespace beliefnet
