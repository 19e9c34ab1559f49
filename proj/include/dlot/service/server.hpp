#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "dlot/service/session_host.hpp"
#include "dlot/time.hpp"

namespace dlot::service {

struct ServerOptions {
    std::string address = "127.0.0.1";
    std::uint16_t port = 8080;  // 0 picks an ephemeral port
    std::filesystem::path ui_dir;  // static observer UI; empty serves a built-in page
    Millis tick_interval{100};     // 0 disables the background ticker (tests tick by hand)
    Millis heartbeat_interval{5000};
    std::size_t threads = 4;
};

/// Parses `host:port` (as accepted by --addr and DLOT_ADDR). Throws kInvalidArgument.
std::pair<std::string, std::uint16_t> parse_address(const std::string& text);

/// HTTP JSON API plus the WebSocket event stream over a SessionRegistry.
class Server {
public:
    Server(SessionRegistry& registry, ServerOptions options);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts serving on background threads.
    void start();
    /// Stops accepting, closes connections and joins every thread.
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

    std::uint16_t port() const { return bound_port_; }

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
    std::uint16_t bound_port_ = 0;
};

}  // namespace dlot::service
