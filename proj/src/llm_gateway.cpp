#include "kgx/llm_gateway.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>

#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;

void ModelConfig::validate() const {
    if (model_name.empty())
        throw Error("model name is empty");
    if (temperature < 0.0)
        throw Error("temperature must be >= 0");
    if (max_tokens <= 0)
        throw Error("max tokens must be positive");
    if (!endpoint.empty() && !parse_url(endpoint))
        throw Error("malformed endpoint URL: " + endpoint);
}

json to_json(const ModelConfig &c) {
    return json{{"model", c.model_name},
                {"endpoint", c.endpoint},
                {"temperature", c.temperature},
                {"max_tokens", c.max_tokens},
                {"api_key_env", c.api_key_env}};
}

ModelConfig model_config_from_json(const json &j) {
    ModelConfig c;
    c.model_name = j.at("model").get<std::string>();
    c.endpoint = j.value("endpoint", "");
    c.temperature = j.value("temperature", 0.0);
    c.max_tokens = j.value("max_tokens", 1024);
    c.api_key_env = j.value("api_key_env", "");
    return c;
}

json to_json(const Completion &c) {
    json j{{"text", c.text}, {"model", c.model_name}, {"latency_ms", c.latency_ms}};
    if (c.usage)
        j["usage"] = {{"prompt_tokens", c.usage->prompt_tokens},
                      {"completion_tokens", c.usage->completion_tokens}};
    return j;
}

Completion completion_from_json(const json &j) {
    Completion c;
    c.text = j.at("text").get<std::string>();
    c.model_name = j.value("model", "");
    c.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("usage"))
        c.usage = TokenUsage{j["usage"].value("prompt_tokens", 0),
                             j["usage"].value("completion_tokens", 0)};
    return c;
}

GatewayMode parse_gateway_mode(const std::string &s) {
    if (s == "live")
        return GatewayMode::live;
    if (s == "record")
        return GatewayMode::record;
    if (s == "replay")
        return GatewayMode::replay;
    throw Error("unknown gateway mode: " + s);
}

std::string to_string(GatewayMode m) {
    switch (m) {
    case GatewayMode::live:
        return "live";
    case GatewayMode::record:
        return "record";
    case GatewayMode::replay:
        return "replay";
    }
    return "live";
}

std::optional<ParsedUrl> parse_url(const std::string &url) {
    static const std::regex re(R"(^(https?)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(?::(\d{1,5}))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re))
        return std::nullopt;
    ParsedUrl u;
    u.scheme = m[1];
    u.host = m[2];
    u.port = m[3].matched ? std::stoi(m[3]) : (u.scheme == "https" ? 443 : 80);
    if (u.port <= 0 || u.port > 65535)
        return std::nullopt;
    u.path = m[4].matched ? std::string(m[4]) : "/";
    return u;
}

std::string ParsedUrl::origin() const {
    return scheme + "://" + host + ":" + std::to_string(port);
}

HttpResponse HttpTransport::post_json(const std::string &url, const std::string &body,
                                      const std::map<std::string, std::string> &headers) {
    const auto u = parse_url(url);
    if (!u)
        return {0, "", "malformed URL: " + url};
    httplib::Client client(u->origin());
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto &[k, v] : headers)
        h.emplace(k, v);
    auto res = client.Post(u->path, h, body, "application/json");
    if (!res)
        return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
}

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<json> FixtureStore::load(const std::string &key) const {
    const auto path = dir_ / (key + ".json");
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    return json::parse(in);
}

void FixtureStore::save(const std::string &key, const json &entry) {
    std::lock_guard lock(write_mutex_);
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / (key + ".json");
    const auto tmp = dir_ / (key + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write fixture " + tmp.string());
        out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

std::string fixture_key(const std::string &prompt, const ModelConfig &config, unsigned sample) {
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.6f", config.temperature);
    std::string material = prompt;
    material += '\x1f';
    material += config.model_name;
    material += '\x1f';
    material += temp;
    if (sample > 0) {
        material += '\x1f';
        material += "sample=" + std::to_string(sample);
    }
    return text::sha256_hex(material);
}

json chat_request(const std::string &prompt, const ModelConfig &config) {
    return json{{"model", config.model_name},
                {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                {"temperature", config.temperature},
                {"max_tokens", config.max_tokens}};
}

Completion parse_chat_response(const std::string &body, const std::string &model_name) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded())
        throw TransportError("completion response is not JSON");
    const auto *choices = j.contains("choices") ? &j["choices"] : nullptr;
    if (choices == nullptr || !choices->is_array() || choices->empty() ||
        !(*choices)[0].contains("message") || !(*choices)[0]["message"].contains("content") ||
        !(*choices)[0]["message"]["content"].is_string())
        throw TransportError("completion response lacks choices[0].message.content");
    Completion c;
    c.text = (*choices)[0]["message"]["content"].get<std::string>();
    c.model_name = j.value("model", model_name);
    if (j.contains("usage") && j["usage"].is_object())
        c.usage = TokenUsage{j["usage"].value("prompt_tokens", 0),
                             j["usage"].value("completion_tokens", 0)};
    if (c.text.empty())
        throw TransportError("completion text is empty");
    return c;
}

LlmGateway::LlmGateway(GatewayMode mode, std::shared_ptr<FixtureStore> fixtures,
                       std::shared_ptr<Transport> transport, GatewayOptions options)
    : mode_(mode), fixtures_(std::move(fixtures)), transport_(std::move(transport)),
      options_(options) {
    if (options_.max_in_flight == 0)
        options_.max_in_flight = 1;
    if (mode_ != GatewayMode::live && !fixtures_)
        throw Error(to_string(mode_) + " mode requires a fixture store");
    if (mode_ != GatewayMode::replay && !transport_)
        throw Error(to_string(mode_) + " mode requires a transport");
}

std::size_t LlmGateway::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

Completion LlmGateway::call_live(const std::string &prompt, const ModelConfig &config) {
    config.validate();
    if (config.endpoint.empty())
        throw TransportError("no endpoint configured for model " + config.model_name);
    std::map<std::string, std::string> headers;
    if (!config.api_key_env.empty()) {
        const char *key = std::getenv(config.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw TransportError("environment variable " + config.api_key_env + " is not set");
        headers["Authorization"] = std::string("Bearer ") + key;
    }
    const std::string body = chat_request(prompt, config).dump();

    // Bounded in-flight requests.
    {
        std::unique_lock lock(mutex_);
        slot_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
        ++in_flight_;
        ++calls_;
    }
    struct Release {
        LlmGateway *g;
        ~Release() {
            {
                std::lock_guard lock(g->mutex_);
                --g->in_flight_;
            }
            g->slot_free_.notify_one();
        }
    } release{this};

    auto backoff = options_.backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        const auto start = std::chrono::steady_clock::now();
        const auto res = transport_->post_json(config.endpoint, body, headers);
        const auto elapsed = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (res.status == 200) {
            auto c = parse_chat_response(res.body, config.model_name);
            c.latency_ms = elapsed;
            return c;
        }
        last_error = res.status == 0 ? res.error
                                     : "HTTP " + std::to_string(res.status) + ": " + res.body;
        const bool transient = res.status == 0 || res.status == 408 || res.status == 429 ||
                               res.status >= 500;
        if (!transient)
            throw TransportError(last_error);
    }
    throw TransportError("retries exhausted: " + last_error);
}

Completion LlmGateway::complete(const std::string &prompt, const ModelConfig &config,
                                unsigned sample) {
    const std::string key = fixture_key(prompt, config, sample);
    if (mode_ == GatewayMode::replay) {
        const auto entry = fixtures_->load(key);
        if (!entry)
            throw MissingFixtureError(key);
        auto c = completion_from_json(entry->at("completion"));
        c.fixture_key = key;
        return c;
    }
    auto c = call_live(prompt, config);
    c.fixture_key = key;
    if (mode_ == GatewayMode::record) {
        json entry{{"prompt", prompt}, {"config", to_json(config)}, {"completion", to_json(c)}};
        if (sample > 0)
            entry["sample"] = sample;
        fixtures_->save(key, entry);
    }
    return c;
}

} // namespace kgx
