#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "qufleet/comanager.hpp"

namespace qufleet {

struct ManagerServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks an ephemeral port
    ManagerConfig core;
    bool virtual_clock = false;    // clock advances only via 'at' fields in messages
    std::string event_log_path;    // transition log, appended live; empty disables
    std::string port_file;         // bound port written here once listening
};

// TCP host for the scheduling core. Every registry mutation funnels through
// one mutex; socket writes happen outside it. Worker connections that drop
// are evicted immediately; the three-period heartbeat rule covers zombies
// whose connection stays open.
class ManagerServer {
public:
    explicit ManagerServer(ManagerServerOptions options);
    ~ManagerServer();

    void start();  // TransportError (naming the port) when the bind fails
    void stop();   // idempotent

    std::uint16_t port() const;
    std::size_t worker_count() const;
    std::vector<std::string> event_log_copy() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace qufleet
