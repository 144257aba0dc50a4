#include "veye/chat_client.hpp"

#include "veye/errors.hpp"
#include "veye/image_io.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>

namespace veye {

using nlohmann::json;

MockChatClient::MockChatClient(std::vector<std::string> responses) : responses_(std::move(responses)) {}

std::unique_ptr<MockChatClient> MockChatClient::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("mock client: cannot open " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw UsageError(std::string("mock client: bad JSON: ") + e.what());
    }
    if (!j.is_array()) {
        throw UsageError("mock client: expected a JSON array of response strings");
    }
    std::vector<std::string> responses;
    for (const json& item : j) {
        responses.push_back(item.get<std::string>());
    }
    return std::make_unique<MockChatClient>(std::move(responses));
}

std::string MockChatClient::complete(const std::vector<ChatMessage>&) {
    ++calls_;
    if (next_ >= responses_.size()) {
        throw ExternalServiceError("mock client: scripted responses exhausted after " +
                                   std::to_string(calls_ - 1) + " replies");
    }
    return responses_[next_++];
}

HttpChatClient::HttpChatClient(std::string endpoint, std::string model, std::string api_key_env)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), api_key_env_(std::move(api_key_env)) {}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
    json body;
    body["model"] = model_;
    body["messages"] = json::array();
    for (const ChatMessage& msg : messages) {
        json parts = json::array();
        for (const MessagePart& part : msg.parts) {
            if (part.kind == MessagePart::Kind::Text) {
                parts.push_back({{"type", "text"}, {"text", part.text}});
            } else {
                const std::string b64 = base64_encode(part.png.data(), part.png.size());
                parts.push_back({{"type", "image_url"},
                                 {"image_url", {{"url", "data:image/png;base64," + b64}}}});
            }
        }
        body["messages"].push_back({{"role", msg.role}, {"content", std::move(parts)}});
    }

    // Split endpoint into host and path.
    std::string url = endpoint_;
    std::string scheme_host = url;
    std::string path = "/";
    const size_t scheme_end = url.find("://");
    if (scheme_end != std::string::npos) {
        const size_t path_start = url.find('/', scheme_end + 3);
        if (path_start != std::string::npos) {
            scheme_host = url.substr(0, path_start);
            path = url.substr(path_start);
        }
    }

    httplib::Client client(scheme_host);
    client.set_read_timeout(120, 0);
    client.set_connection_timeout(30, 0);

    httplib::Headers headers;
    if (!api_key_env_.empty()) {
        const char* key = std::getenv(api_key_env_.c_str());
        if (!key || !*key) {
            throw ExternalServiceError("chat client: environment variable " + api_key_env_ + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const httplib::Result result = client.Post(path, headers, body.dump(), "application/json");
    if (!result) {
        throw ExternalServiceError("chat client: request to " + endpoint_ + " failed: " +
                                   httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw ExternalServiceError("chat client: HTTP " + std::to_string(result->status) + ": " + result->body);
    }
    try {
        const json reply = json::parse(result->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ExternalServiceError(std::string("chat client: malformed response body: ") + e.what());
    }
}

std::unique_ptr<ChatClient> make_chat_client(const std::string& endpoint, const std::string& model,
                                             const std::string& api_key_env) {
    if (endpoint.rfind("mock:", 0) == 0) {
        return MockChatClient::from_json_file(endpoint.substr(5));
    }
    return std::make_unique<HttpChatClient>(endpoint, model, api_key_env);
}

} // namespace veye
