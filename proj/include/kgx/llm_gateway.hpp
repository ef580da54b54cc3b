#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kgx/error.hpp"

namespace kgx {

struct ModelConfig {
    std::string model_name;
    std::string endpoint; // full chat-completions URL
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string api_key_env; // name of the environment variable holding the key

    // Throws Error on a negative temperature or a malformed endpoint.
    void validate() const;
};

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct Completion {
    std::string text;
    std::string model_name;
    double latency_ms = 0.0;
    std::optional<TokenUsage> usage;
    std::string fixture_key;
};

nlohmann::json to_json(const ModelConfig &c);
ModelConfig model_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Completion &c);
Completion completion_from_json(const nlohmann::json &j);

enum class GatewayMode { live, record, replay };

GatewayMode parse_gateway_mode(const std::string &s);
std::string to_string(GatewayMode m);

class TransportError : public Error {
  public:
    using Error::Error;
};

class MissingFixtureError : public Error {
  public:
    explicit MissingFixtureError(const std::string &key)
        : Error("missing fixture " + key), key_(key) {}
    const std::string &key() const noexcept { return key_; }

  private:
    std::string key_;
};

struct HttpResponse {
    int status = 0; // 0 for connection-level failures
    std::string body;
    std::string error;
};

// Posts a JSON body to a URL. Implementations must be thread-safe.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResponse post_json(const std::string &url, const std::string &body,
                                   const std::map<std::string, std::string> &headers) = 0;
};

class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120))
        : timeout_(timeout) {}
    HttpResponse post_json(const std::string &url, const std::string &body,
                           const std::map<std::string, std::string> &headers) override;

  private:
    std::chrono::seconds timeout_;
};

// Splits "scheme://host[:port]/path" into its origin and path.
struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;
    std::string origin() const;
};
std::optional<ParsedUrl> parse_url(const std::string &url);

// Directory of `<key>.json` files holding {prompt, config, completion}.
class FixtureStore {
  public:
    explicit FixtureStore(std::filesystem::path dir);

    std::optional<nlohmann::json> load(const std::string &key) const;
    void save(const std::string &key, const nlohmann::json &entry);
    const std::filesystem::path &dir() const noexcept { return dir_; }

  private:
    std::filesystem::path dir_;
    mutable std::mutex write_mutex_;
};

// Content hash over the UTF-8 prompt bytes, model name and temperature.
// Repeat samples of one prompt (sample > 0) get distinct keys.
std::string fixture_key(const std::string &prompt, const ModelConfig &config,
                        unsigned sample = 0);

struct GatewayOptions {
    std::size_t max_in_flight = 4;
    int max_retries = 3;
    std::chrono::milliseconds backoff{500}; // doubled after every retry
};

// Chat-completion access with retries, bounded concurrency and
// record/replay fixtures. Safe for concurrent use.
class LlmGateway {
  public:
    LlmGateway(GatewayMode mode, std::shared_ptr<FixtureStore> fixtures,
               std::shared_ptr<Transport> transport, GatewayOptions options = {});

    Completion complete(const std::string &prompt, const ModelConfig &config,
                        unsigned sample = 0);

    GatewayMode mode() const noexcept { return mode_; }
    std::size_t calls() const;

  private:
    GatewayMode mode_;
    std::shared_ptr<FixtureStore> fixtures_;
    std::shared_ptr<Transport> transport_;
    GatewayOptions options_;

    mutable std::mutex mutex_;
    std::condition_variable slot_free_;
    std::size_t in_flight_ = 0;
    std::size_t calls_ = 0;

    Completion call_live(const std::string &prompt, const ModelConfig &config);
};

// Request body in the chat-completions shape.
nlohmann::json chat_request(const std::string &prompt, const ModelConfig &config);
// Extracts choices[0].message.content; throws TransportError when absent.
Completion parse_chat_response(const std::string &body, const std::string &model_name);

} // namespace kgx
