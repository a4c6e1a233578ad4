#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/strings.hpp"
#include "tablefuse/json_extract.hpp"
#include "tablefuse/prompts.hpp"

namespace tablefuse {

enum class GatewayMode { live, record, replay };

inline const char* gateway_mode_tag(GatewayMode m) {
    switch (m) {
        case GatewayMode::live: return "live";
        case GatewayMode::record: return "record";
        case GatewayMode::replay: return "replay";
    }
    throw std::logic_error("unknown gateway mode");
}

inline GatewayMode gateway_mode_from_tag(const std::string& tag) {
    if (tag == "live") return GatewayMode::live;
    if (tag == "record") return GatewayMode::record;
    if (tag == "replay") return GatewayMode::replay;
    throw std::invalid_argument("unknown gateway mode: " + tag);
}

struct TransportResult {
    int status = 0;
    std::string body;
};

// Minimal POST-JSON surface so tests can instrument or script the endpoint.
class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportResult post_json(const std::string& path, const std::string& body) = 0;
};

struct LLMResponse {
    std::string text;
    std::string request_fingerprint;
    bool recorded = false;  // true when served from the fixture store
};

// fingerprint -> (purpose tag, response text). Writes are serialized; reads
// take a shared lock.
class FixtureStore {
public:
    struct Entry {
        std::string purpose;
        std::string response;
    };

    static std::shared_ptr<FixtureStore> load(const std::filesystem::path& path) {
        auto store = std::make_shared<FixtureStore>();
        store->merge_file(path);
        return store;
    }

    void merge_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open fixture file: " + path.string());
        nlohmann::json doc = nlohmann::json::parse(in);
        std::unique_lock lock(mutex_);
        for (const auto& [fp, entry] : doc.items())
            entries_[fp] = {entry.at("purpose").get<std::string>(),
                            entry.at("response").get<std::string>()};
    }

    void save(const std::filesystem::path& path) const {
        std::unique_lock lock(mutex_);
        save_locked(path);
    }

    std::optional<Entry> lookup(const std::string& fingerprint) const {
        std::shared_lock lock(mutex_);
        const auto it = entries_.find(fingerprint);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& fingerprint, const std::string& purpose,
             const std::string& response) {
        std::unique_lock lock(mutex_);
        entries_[fingerprint] = {purpose, response};
        if (!write_through_.empty()) save_locked(write_through_);
    }

    // When set, every put() persists the whole store to this path.
    void set_write_through(const std::filesystem::path& path) { write_through_ = path; }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

private:
    void save_locked(const std::filesystem::path& path) const {
        nlohmann::json doc = nlohmann::json::object();
        for (const auto& [fp, e] : entries_)
            doc[fp] = {{"purpose", e.purpose}, {"response", e.response}};
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write fixture file: " + path.string());
        out << doc.dump(2) << '\n';
    }

    std::map<std::string, Entry> entries_;
    std::filesystem::path write_through_;
    mutable std::shared_mutex mutex_;
};

struct GatewayConfig {
    GatewayMode mode = GatewayMode::replay;
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "AUTOML_LLM_API_KEY";
    // Per-purpose chat model override; absent purposes use the defaults below.
    std::map<std::string, std::string> chat_models;
    std::string default_chat_model = "gpt-3.5-turbo";
    std::string codegen_chat_model = "gpt-4";
    std::string embed_model = "text-embedding-ada-002";
    // The offline deterministic encoder; when false, embeddings go through
    // the endpoint (or fixtures in replay mode).
    bool fallback_embedder = true;
    std::size_t fallback_embedding_dim = 256;
    int max_retries = 2;

    std::string chat_model_for(Purpose p) const {
        const auto it = chat_models.find(purpose_tag(p));
        if (it != chat_models.end()) return it->second;
        if (p == Purpose::assemble_fusion || p == Purpose::assemble_processors)
            return codegen_chat_model;
        return default_chat_model;
    }
};

namespace detail {

// Seeded character-trigram hashing into fixed buckets, L2-normalized.
inline std::vector<double> fallback_embed(const std::string& text, std::size_t dim) {
    if (text.empty()) throw std::invalid_argument("cannot embed empty text");
    std::vector<double> v(dim, 0.0);
    const std::size_t n = 3;
    if (text.size() < n) {
        v[fnv1a64(text) % dim] += 1.0;
    } else {
        for (std::size_t i = 0; i + n <= text.size(); ++i)
            v[fnv1a64(std::string_view(text).substr(i, n)) % dim] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

inline std::string embed_fingerprint(const std::string& text) {
    std::uint64_t h = fnv1a64("embed");
    h = fnv1a64("\x1f", h);
    h = fnv1a64(text, h);
    return to_hex(h);
}

}  // namespace detail

// Single chokepoint for LLM traffic. In replay mode no transport exists and
// no code path can reach the network.
class LlmGateway {
public:
    LlmGateway(GatewayConfig config, std::shared_ptr<FixtureStore> fixtures,
               std::shared_ptr<Transport> transport = nullptr)
        : config_(std::move(config)),
          fixtures_(std::move(fixtures)),
          transport_(std::move(transport)) {
        if (!fixtures_) fixtures_ = std::make_shared<FixtureStore>();
        if (config_.mode == GatewayMode::replay) transport_.reset();
    }

    const GatewayConfig& config() const { return config_; }
    FixtureStore& fixtures() { return *fixtures_; }

    LLMResponse complete(const PromptBundle& bundle) {
        bundle.validate();
        const std::string fp = bundle.fingerprint();
        if (config_.mode != GatewayMode::live) {
            if (const auto hit = fixtures_->lookup(fp)) return {hit->response, fp, true};
            if (config_.mode == GatewayMode::replay)
                throw std::runtime_error(std::string("replay miss for purpose '") +
                                         purpose_tag(bundle.purpose) + "', fingerprint " + fp);
        }
        const std::string text = call_chat(bundle);
        if (config_.mode == GatewayMode::record)
            fixtures_->put(fp, purpose_tag(bundle.purpose), text);
        return {text, fp, false};
    }

    std::vector<double> embed(const std::string& text) {
        if (text.empty()) throw std::invalid_argument("cannot embed empty text");
        if (config_.fallback_embedder)
            return detail::fallback_embed(text, config_.fallback_embedding_dim);

        const std::string fp = detail::embed_fingerprint(text);
        if (config_.mode != GatewayMode::live) {
            if (const auto hit = fixtures_->lookup(fp)) return parse_vector(hit->response);
            if (config_.mode == GatewayMode::replay)
                throw std::runtime_error("replay miss for purpose 'embed', fingerprint " + fp);
        }
        const std::string body =
            nlohmann::json{{"model", config_.embed_model}, {"input", text}}.dump();
        const nlohmann::json doc = post_with_retries("/v1/embeddings", body);
        const auto vec = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
        if (config_.mode == GatewayMode::record)
            fixtures_->put(fp, "embed", nlohmann::json(vec).dump());
        return vec;
    }

private:
    static std::vector<double> parse_vector(const std::string& text) {
        return nlohmann::json::parse(text).get<std::vector<double>>();
    }

    std::string call_chat(const PromptBundle& bundle) {
        const nlohmann::json request = {
            {"model", config_.chat_model_for(bundle.purpose)},
            {"temperature", 0},
            {"messages",
             {{{"role", "system"}, {"content", bundle.system_text}},
              {{"role", "user"}, {"content", bundle.user_text}}}},
        };
        const nlohmann::json doc = post_with_retries("/v1/chat/completions", request.dump());
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    }

    nlohmann::json post_with_retries(const std::string& path, const std::string& body) {
        if (!transport_)
            throw std::runtime_error("no transport configured for mode '" +
                                     std::string(gateway_mode_tag(config_.mode)) + "'");
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            TransportResult res;
            try {
                res = transport_->post_json(path, body);
            } catch (const std::exception& e) {
                last_error = e.what();
                continue;
            }
            if (res.status == 401 || res.status == 403)
                throw std::runtime_error("endpoint auth failure (HTTP " +
                                         std::to_string(res.status) + ")");
            if (res.status == 200) return nlohmann::json::parse(res.body);
            last_error = "HTTP " + std::to_string(res.status) + ": " +
                         detail::truncate(res.body, 200);
            if (res.status >= 400 && res.status < 500) break;  // only 5xx/transport retry
        }
        throw std::runtime_error("endpoint request failed after retries: " + last_error);
    }

    GatewayConfig config_;
    std::shared_ptr<FixtureStore> fixtures_;
    std::shared_ptr<Transport> transport_;
};

// complete() + strict JSON extraction with one bounded corrective retry.
inline nlohmann::json complete_json(LlmGateway& gateway, const PromptBundle& bundle,
                                    const JsonShape& shape) {
    const LLMResponse first = gateway.complete(bundle);
    try {
        return extract_strict_json(first.text, shape);
    } catch (const JsonContractError&) {
        const PromptBundle retry = bundle.with_correction(
            "Your previous answer was not valid JSON; answer with JSON only.");
        const LLMResponse second = gateway.complete(retry);
        return extract_strict_json(second.text, shape);
    }
}

}  // namespace tablefuse
