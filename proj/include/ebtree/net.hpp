#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include "ebtree/audit.hpp"

namespace ebtree::net {

struct Address {
    std::string host = "127.0.0.1";
    std::uint16_t port = audit::kDefaultPort;
};

/// "host:port", "host" or ":port". Throws ConfigError.
Address parse_address(const std::string& text);
/// EBTREE_ADDR if set, else 127.0.0.1:7474.
Address default_address();

/// Newline-delimited JSON over TCP, one thread per connection.
class TcpServer {
  public:
    TcpServer(audit::StorageServer& server, Address addr);
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    void start();  // binds and listens; port 0 picks a free port
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();
    std::uint16_t port() const { return port_; }

  private:
    struct Connection {
        int fd;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void serve(Connection& c);
    void reap(bool all);

    audit::StorageServer& server_;
    Address addr_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::list<Connection> connections_;
};

class TcpChannel final : public audit::Channel {
  public:
    explicit TcpChannel(Address addr, std::chrono::milliseconds timeout = std::chrono::seconds(60));
    ~TcpChannel() override;
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;

    wire::Json request(const wire::Json& message) override;

  private:
    void connect();
    void close();

    Address addr_;
    std::chrono::milliseconds timeout_;
    int fd_ = -1;
    std::string pending_;
};

}  // namespace ebtree::net
