#include "qufleet/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "qufleet/errors.hpp"

namespace qufleet::net {

namespace {

std::string errno_text() { return std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
        addr.sin_addr.s_addr = INADDR_ANY;
        return addr;
    }
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
        throw TransportError("cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

} // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::string_view bytes) {
    if (fd_ < 0) throw TransportError("send on a closed socket");
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError("send failed: " + errno_text());
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::size_t Socket::recv_some(char* buf, std::size_t len) {
    if (fd_ < 0) throw TransportError("recv on a closed socket");
    while (true) {
        const ssize_t n = ::recv(fd_, buf, len, 0);
        if (n >= 0) return static_cast<std::size_t>(n);
        if (errno == EINTR) continue;
        throw TransportError("recv failed: " + errno_text());
    }
}

Socket connect_tcp(const std::string& host, std::uint16_t port) {
    const sockaddr_in addr = resolve(host.empty() ? "127.0.0.1" : host, port);
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket: " + errno_text());
    Socket sock(fd);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
        throw TransportError("connect to " + host + ":" + std::to_string(port) + " failed: " + errno_text());
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return sock;
}

Listener::Listener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError("socket: " + errno_text());
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve(host, port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string detail = errno_text();
        ::close(fd_);
        fd_ = -1;
        throw TransportError("listen failed on port " + std::to_string(port) + ": " + detail);
    }
    if (::listen(fd_, 64) != 0) {
        const std::string detail = errno_text();
        ::close(fd_);
        fd_ = -1;
        throw TransportError("listen failed on port " + std::to_string(port) + ": " + detail);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

Listener::~Listener() {
    shutdown();
    if (fd_ >= 0) ::close(fd_);
}

std::optional<Socket> Listener::accept() {
    while (true) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return Socket(fd);
        }
        if (errno == EINTR) continue;
        return std::nullopt;  // shut down or fatal; the accept loop exits either way
    }
}

void Listener::shutdown() {
    if (!down_ && fd_ >= 0) {
        down_ = true;
        ::shutdown(fd_, SHUT_RDWR);
    }
}

} // namespace qufleet::net
