#pragma once

// Kept out of gateway.hpp so replay-only binaries never compile httplib in.

#ifdef TABLEFUSE_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
// httplib pulls in <resolv.h>, whose _res macro breaks any later header that
// uses _res as an identifier (Eigen does).
#ifdef _res
#undef _res
#endif

#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>

#include "tablefuse/gateway.hpp"

namespace tablefuse {

class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key)
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

    TransportResult post_json(const std::string& path, const std::string& body) override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        const auto res = client.Post(path, headers, body, "application/json");
        if (!res) throw std::runtime_error("transport failure: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }

private:
    std::string base_url_;
    std::string api_key_;
};

// Builds the live transport for a config, reading the API key from the
// configured environment variable. Replay mode gets no transport.
inline std::shared_ptr<Transport> make_http_transport(const GatewayConfig& config) {
    if (config.mode == GatewayMode::replay) return nullptr;
    const char* key = std::getenv(config.api_key_env.c_str());
    return std::make_shared<HttpTransport>(config.base_url, key ? key : "");
}

}  // namespace tablefuse
