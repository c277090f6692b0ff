#pragma once

// Thin helpers over cpp-httplib shared by the remote embedder and the LLM
// providers. Include only where HTTP is needed; httplib is heavy.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "capecgen/errors.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>

namespace capecgen::http {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash, may be empty
};

inline Endpoint parse_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InputError("endpoint must include a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = url.substr(0, path_start);
    if (path_start != std::string::npos) {
        ep.prefix = url.substr(path_start);
        while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
    }
    return ep;
}

inline httplib::Client make_client(const Endpoint& ep, double timeout_s) {
    httplib::Client cli(ep.origin);
    auto secs = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    return cli;
}

inline std::optional<double> retry_after_seconds(const httplib::Response& res) {
    if (!res.has_header("Retry-After")) return std::nullopt;
    try {
        return std::stod(res.get_header_value("Retry-After"));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

inline bool retryable_status(int status) { return status == 429 || status >= 500; }

inline void backoff_sleep(double base_s, int attempt, std::optional<double> retry_after, double cap_s = 30.0) {
    double wait = retry_after ? *retry_after : base_s * std::pow(2.0, attempt - 1);
    wait = std::min(wait, cap_s);
    if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
}

}  // namespace capecgen::http
