#pragma once
// tissue/net.hpp: byte transports for the wire protocol. Stream and Listener
// are small interfaces with two implementations: real TCP sockets, and an
// in-process loopback used by tests so protocol behaviour can be exercised
// without touching the network stack. LineReader splits any Stream into
// protocol lines with a hard cap on buffered bytes.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "tissue/core.hpp"

namespace tissue {

class Stream {
  public:
    virtual ~Stream() = default;

    // Blocks until bytes arrive. Returns the count read, 0 on clean EOF and
    // -1 on error or when stop becomes true.
    virtual int read_some(char* buf, std::size_t len, const std::atomic<bool>& stop) = 0;

    virtual bool write_all(std::string_view data) = 0;

    // Unblocks any reader of this stream, making it see EOF. Safe to call
    // from another thread; used to tear connections down on shutdown.
    virtual void shutdown_both() = 0;
};

class Listener {
  public:
    virtual ~Listener() = default;

    // Blocks for the next connection; nullptr once stopped or closed.
    virtual std::unique_ptr<Stream> accept(const std::atomic<bool>& stop) = 0;

    virtual std::string endpoint() const = 0;
    virtual void close() = 0;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw ConfigError("endpoint must be host:port, got '" + text + "'");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    std::string port = text.substr(colon + 1);
    if (port.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("endpoint port must be numeric, got '" + text + "'");
    unsigned long p = std::stoul(port);
    if (p > 65535) throw ConfigError("endpoint port out of range: '" + text + "'");
    ep.port = static_cast<std::uint16_t>(p);
    return ep;
}

class TcpStream : public Stream {
  public:
    explicit TcpStream(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~TcpStream() override {
        if (fd_ >= 0) ::close(fd_);
    }
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    int read_some(char* buf, std::size_t len, const std::atomic<bool>& stop) override {
        while (!stop.load(std::memory_order_relaxed)) {
            pollfd pfd{fd_, POLLIN, 0};
            int pr = ::poll(&pfd, 1, 200);
            if (pr < 0) {
                if (errno == EINTR) continue;
                return -1;
            }
            if (pr == 0) continue;
            ssize_t n = ::recv(fd_, buf, len, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                return -1;
            }
            return static_cast<int>(n);
        }
        return -1;
    }

    bool write_all(std::string_view data) override {
        while (!data.empty()) {
            ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                return false;
            }
            data.remove_prefix(static_cast<std::size_t>(n));
        }
        return true;
    }

    void shutdown_both() override { ::shutdown(fd_, SHUT_RDWR); }

  private:
    int fd_;
};

inline std::unique_ptr<Stream> connect_tcp(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve " + ep.host + ":" + port);
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw std::runtime_error("cannot connect to " + ep.host + ":" + port);
    return std::make_unique<TcpStream>(fd);
}

class TcpListener : public Listener {
  public:
    // Binds immediately; port 0 picks an ephemeral port, readable afterwards
    // through endpoint().
    explicit TcpListener(const Endpoint& ep) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        std::string port = std::to_string(ep.port);
        if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
            throw std::runtime_error("cannot resolve listen address " + ep.host + ":" + port);
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd_ < 0) continue;
            int one = 1;
            ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
            if (::bind(fd_, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd_, 16) == 0) break;
            ::close(fd_);
            fd_ = -1;
        }
        ::freeaddrinfo(res);
        if (fd_ < 0) throw std::runtime_error("cannot listen on " + ep.host + ":" + port);

        sockaddr_storage addr{};
        socklen_t alen = sizeof(addr);
        std::uint16_t bound_port = ep.port;
        if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &alen) == 0) {
            if (addr.ss_family == AF_INET)
                bound_port = ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
            else if (addr.ss_family == AF_INET6)
                bound_port = ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
        }
        endpoint_ = ep.host + ":" + std::to_string(bound_port);
    }
    ~TcpListener() override { close(); }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::unique_ptr<Stream> accept(const std::atomic<bool>& stop) override {
        while (!stop.load(std::memory_order_relaxed) && !closed_.load(std::memory_order_relaxed)) {
            pollfd pfd{fd_, POLLIN, 0};
            int pr = ::poll(&pfd, 1, 200);
            if (pr < 0) {
                if (errno == EINTR) continue;
                return nullptr;
            }
            if (pr == 0) continue;
            int cfd = ::accept(fd_, nullptr, nullptr);
            if (cfd < 0) {
                if (errno == EINTR) continue;
                return nullptr;
            }
            return std::make_unique<TcpStream>(cfd);
        }
        return nullptr;
    }

    std::string endpoint() const override { return endpoint_; }

    void close() override {
        bool was = closed_.exchange(true);
        if (!was && fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
        }
    }

  private:
    int fd_ = -1;
    std::atomic<bool> closed_{false};
    std::string endpoint_;
};

// In-process transport. Each direction of a connection is one Channel; a
// stream reads from one channel and writes to the other.
namespace loopback_detail {

struct Channel {
    std::mutex mu;
    std::condition_variable cv;
    std::string buf;
    bool closed = false;

    void close() {
        std::lock_guard<std::mutex> lock(mu);
        closed = true;
        cv.notify_all();
    }
};

class LoopbackStream : public Stream {
  public:
    LoopbackStream(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~LoopbackStream() override { shutdown_both(); }

    int read_some(char* buf, std::size_t len, const std::atomic<bool>& stop) override {
        std::unique_lock<std::mutex> lock(in_->mu);
        while (in_->buf.empty() && !in_->closed) {
            if (stop.load(std::memory_order_relaxed)) return -1;
            in_->cv.wait_for(lock, std::chrono::milliseconds(50));
        }
        if (in_->buf.empty()) return 0;  // closed with nothing buffered
        std::size_t n = std::min(len, in_->buf.size());
        std::memcpy(buf, in_->buf.data(), n);
        in_->buf.erase(0, n);
        return static_cast<int>(n);
    }

    bool write_all(std::string_view data) override {
        std::lock_guard<std::mutex> lock(out_->mu);
        if (out_->closed) return false;
        out_->buf.append(data.data(), data.size());
        out_->cv.notify_all();
        return true;
    }

    void shutdown_both() override {
        in_->close();
        out_->close();
    }

  private:
    std::shared_ptr<Channel> in_;
    std::shared_ptr<Channel> out_;
};

}  // namespace loopback_detail

// Builds a connected stream pair: bytes written to one end are read from the
// other.
inline std::pair<std::unique_ptr<Stream>, std::unique_ptr<Stream>> loopback_pair() {
    auto a2b = std::make_shared<loopback_detail::Channel>();
    auto b2a = std::make_shared<loopback_detail::Channel>();
    return {std::make_unique<loopback_detail::LoopbackStream>(b2a, a2b),
            std::make_unique<loopback_detail::LoopbackStream>(a2b, b2a)};
}

// Listener over loopback streams. Tests call connect() to obtain the client
// end; the matching server end is handed to whoever is blocked in accept().
class LoopbackListener : public Listener {
  public:
    std::unique_ptr<Stream> connect() {
        auto [client, server] = loopback_pair();
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (closed_) return nullptr;
            pending_.push_back(std::move(server));
        }
        cv_.notify_all();
        return std::move(client);
    }

    std::unique_ptr<Stream> accept(const std::atomic<bool>& stop) override {
        std::unique_lock<std::mutex> lock(mu_);
        while (pending_.empty() && !closed_) {
            if (stop.load(std::memory_order_relaxed)) return nullptr;
            cv_.wait_for(lock, std::chrono::milliseconds(50));
        }
        if (pending_.empty()) return nullptr;
        auto s = std::move(pending_.front());
        pending_.pop_front();
        return s;
    }

    std::string endpoint() const override { return "loopback"; }

    void close() override {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
        cv_.notify_all();
    }

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::unique_ptr<Stream>> pending_;
    bool closed_ = false;
};

// Splits a Stream into lines. Buffered bytes are capped: when a peer sends
// more than max_line bytes without a newline the oversized prefix is handed
// back as one (undecodable) line instead of growing the buffer.
class LineReader {
  public:
    static constexpr std::size_t max_line = 65536;

    explicit LineReader(Stream& stream) : stream_(stream) {}

    std::optional<std::string> next(const std::atomic<bool>& stop) {
        while (true) {
            auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                return line;
            }
            if (buf_.size() > max_line) {
                std::string line = buf_.substr(0, max_line);
                buf_.erase(0, max_line);
                return line;
            }
            if (eof_) {
                if (buf_.empty()) return std::nullopt;
                std::string line = std::move(buf_);
                buf_.clear();
                return line;
            }
            char tmp[4096];
            int n = stream_.read_some(tmp, sizeof(tmp), stop);
            if (n > 0) buf_.append(tmp, static_cast<std::size_t>(n));
            else if (n == 0) eof_ = true;
            else return std::nullopt;
        }
    }

  private:
    Stream& stream_;
    std::string buf_;
    bool eof_ = false;
};

}  // namespace tissue
