#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace veye {

// One message part: text, or a PNG image sent base64-encoded.
struct MessagePart {
    enum class Kind { Text, ImagePng } kind = Kind::Text;
    std::string text;
    std::vector<std::uint8_t> png;
};

struct ChatMessage {
    std::string role;  // "system", "user", "assistant"
    std::vector<MessagePart> parts;

    static ChatMessage text(std::string role, std::string body) {
        ChatMessage m;
        m.role = std::move(role);
        m.parts.push_back({MessagePart::Kind::Text, std::move(body), {}});
        return m;
    }
};

// Blocking request/response chat-completion contract. Implementations must be
// safe to use from one thread at a time; callers wanting concurrency use
// independent instances.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

// Scripted responses consumed in order; throws ExternalServiceError when the
// script runs dry. Counts calls for transcript assertions.
class MockChatClient : public ChatClient {
public:
    explicit MockChatClient(std::vector<std::string> responses);
    static std::unique_ptr<MockChatClient> from_json_file(const std::string& path);

    std::string complete(const std::vector<ChatMessage>& messages) override;
    int calls() const { return calls_; }

private:
    std::vector<std::string> responses_;
    size_t next_ = 0;
    int calls_ = 0;
};

// POSTs an OpenAI-style chat/completions JSON body and reads the first
// choice's message content. The API key is read from `api_key_env`.
class HttpChatClient : public ChatClient {
public:
    HttpChatClient(std::string endpoint, std::string model, std::string api_key_env);
    std::string complete(const std::vector<ChatMessage>& messages) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_env_;
};

// Endpoint starting with "mock:" names a JSON file of scripted responses;
// anything else goes over HTTP.
std::unique_ptr<ChatClient> make_chat_client(const std::string& endpoint, const std::string& model,
                                             const std::string& api_key_env);

} // namespace veye
