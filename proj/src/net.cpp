#include "ebtree/net.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "ebtree/errors.hpp"

namespace ebtree::net {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

// Reads up to the next newline; `buffer` keeps whatever followed it.
bool read_line(int fd, std::string& buffer, std::string& line) {
    std::size_t scanned = 0;
    for (;;) {
        const auto nl = buffer.find('\n', scanned);
        if (nl != std::string::npos) {
            line.assign(buffer, 0, nl);
            buffer.erase(0, nl + 1);
            return true;
        }
        scanned = buffer.size();
        char chunk[65536];
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

addrinfo* resolve(const Address& addr, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(addr.port);
    const int rc = ::getaddrinfo(addr.host.empty() ? nullptr : addr.host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0) throw TransportError("cannot resolve " + addr.host + ": " + ::gai_strerror(rc));
    return res;
}

}  // namespace

Address parse_address(const std::string& text) {
    Address a;
    const auto colon = text.rfind(':');
    std::string port;
    if (colon == std::string::npos) {
        a.host = text;
    } else {
        if (colon > 0) a.host = text.substr(0, colon);
        port = text.substr(colon + 1);
    }
    if (!port.empty()) {
        char* end = nullptr;
        const long p = std::strtol(port.c_str(), &end, 10);
        if (*end != '\0' || p < 0 || p > 65535) throw ConfigError("bad port in address '" + text + "'");
        a.port = static_cast<std::uint16_t>(p);
    }
    if (a.host.empty()) throw ConfigError("empty host in address '" + text + "'");
    return a;
}

Address default_address() {
    const char* env = std::getenv("EBTREE_ADDR");
    return env != nullptr && *env != '\0' ? parse_address(env) : Address{};
}

TcpServer::TcpServer(audit::StorageServer& server, Address addr) : server_(server), addr_(std::move(addr)) {}

TcpServer::~TcpServer() { stop(); }

void TcpServer::start() {
    addrinfo* res = resolve(addr_, true);
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 64) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw TransportError(errno_text(("cannot listen on " + addr_.host).c_str()));

    sockaddr_storage bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                              : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
    listen_fd_ = fd;
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED) continue;
            break;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(conn_mu_);
        reap(false);
        auto& c = connections_.emplace_back();
        c.fd = fd;
        c.thread = std::thread([this, &c] { serve(c); });
    }
}

void TcpServer::serve(Connection& c) {
    std::string buffer;
    std::string line;
    while (read_line(c.fd, buffer, line)) {
        if (line.empty()) continue;
        wire::Json reply;
        try {
            reply = server_.handle(wire::Json::parse(line));
        } catch (const wire::Json::exception& e) {
            reply = wire::error(wire::code::kMalformed, std::string("unparseable message: ") + e.what());
        }
        if (!send_all(c.fd, wire::canonical(reply) + "\n")) break;
    }
    c.done = true;
}

void TcpServer::reap(bool all) {
    for (auto it = connections_.begin(); it != connections_.end();) {
        if (all) ::shutdown(it->fd, SHUT_RDWR);
        if (all || it->done) {
            if (it->thread.joinable()) it->thread.join();
            ::close(it->fd);
            it = connections_.erase(it);
        } else {
            ++it;
        }
    }
}

void TcpServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::lock_guard lock(conn_mu_);
    reap(true);
    listen_fd_ = -1;
}

void TcpServer::wait() {
    while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

TcpChannel::TcpChannel(Address addr, std::chrono::milliseconds timeout) : addr_(std::move(addr)), timeout_(timeout) {}

TcpChannel::~TcpChannel() { close(); }

void TcpChannel::connect() {
    addrinfo* res = resolve(addr_, false);
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) {
        throw TransportError(errno_text(("cannot connect to " + addr_.host + ":" + std::to_string(addr_.port)).c_str()));
    }
    timeval tv{};
    tv.tv_sec = timeout_.count() / 1000;
    tv.tv_usec = (timeout_.count() % 1000) * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    fd_ = fd;
    pending_.clear();
}

void TcpChannel::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

wire::Json TcpChannel::request(const wire::Json& message) {
    if (fd_ < 0) connect();
    std::string line;
    if (!send_all(fd_, wire::canonical(message) + "\n") || !read_line(fd_, pending_, line)) {
        close();
        throw TransportError(errno_text("connection to server lost"));
    }
    try {
        return wire::Json::parse(line);
    } catch (const wire::Json::exception& e) {
        close();
        throw TransportError(std::string("unparseable reply: ") + e.what());
    }
}

}  // namespace ebtree::net
