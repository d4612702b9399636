#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace qufleet::net {

// Thin RAII wrapper over a connected TCP socket.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }
    void close();
    void shutdown();  // both directions; unblocks a blocked reader

    void send_all(std::string_view bytes);                // TransportError on failure
    std::size_t recv_some(char* buf, std::size_t len);    // 0 on EOF, TransportError on failure

private:
    int fd_ = -1;
};

Socket connect_tcp(const std::string& host, std::uint16_t port);

class Listener {
public:
    // Binds immediately; port 0 picks an ephemeral port. The error message
    // names the requested port.
    Listener(const std::string& host, std::uint16_t port);
    ~Listener();
    std::uint16_t port() const { return port_; }
    std::optional<Socket> accept();  // nullopt once shut down
    void shutdown();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
    bool down_ = false;
};

} // namespace qufleet::net
