#ifndef PROMPTREC_EMBED_SERVICE_HPP
#define PROMPTREC_EMBED_SERVICE_HPP

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <sys/un.h>
#include <unistd.h>

#include "promptrec/common.hpp"
#include "promptrec/eval.hpp"

namespace promptrec {

struct ServiceConfig {
    int timeout_ms = 2000;  // per send/recv
    int retries = 2;        // additional attempts after the first
};

namespace detail {

class Fd {
public:
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    int get() const { return fd_; }

private:
    int fd_;
};

inline void send_all(int fd, const void* buf, std::size_t n) {
    const char* p = static_cast<const char*>(buf);
    while (n > 0) {
        const ssize_t w = ::send(fd, p, n, 0);
        if (w <= 0) throw DataError("embedding service: send failed (" + std::string(std::strerror(errno)) + ")");
        p += w;
        n -= static_cast<std::size_t>(w);
    }
}

inline void recv_all(int fd, void* buf, std::size_t n) {
    char* p = static_cast<char*>(buf);
    while (n > 0) {
        const ssize_t r = ::recv(fd, p, n, 0);
        if (r == 0) throw DataError("embedding service: connection closed mid-response");
        if (r < 0) throw DataError("embedding service: recv failed (" + std::string(std::strerror(errno)) + ")");
        p += r;
        n -= static_cast<std::size_t>(r);
    }
}

inline std::uint32_t recv_u32(int fd) {
    unsigned char b[4];
    recv_all(fd, b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

// Client for an external sentence-embedding process. One request/response
// exchange per call over "unix:<path>" or "tcp:<host>:<port>":
//   request:  u32 LE text length, UTF-8 text bytes
//   response: u32 LE id length, id bytes, u32 LE value count, values as
//             little-endian 64-bit reals
// Timeouts and retry count come from ServiceConfig; failures throw and are
// surfaced per-row by the benchmark harness.
class ServiceEmbedder : public Embedder {
public:
    explicit ServiceEmbedder(std::string endpoint, ServiceConfig cfg = {})
        : endpoint_(std::move(endpoint)), cfg_(cfg) {}

    // Probes the service on first use; call once from the owning thread
    // before sharing the embedder across benchmark workers.
    std::string id() const override {
        if (cached_id_.empty()) cached_id_ = embed_text("").embedder_id;
        return cached_id_;
    }

    EmbeddingVector embed_text(const std::string& text) const override {
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            try {
                return exchange(text);
            } catch (const DataError& e) {
                last_error = e.what();
            }
        }
        throw DataError("embedding service at '" + endpoint_ + "' failed after " +
                        std::to_string(cfg_.retries + 1) + " attempts: " + last_error);
    }

private:
    int connect_once() const {
        if (endpoint_.rfind("unix:", 0) == 0) {
            const std::string path = endpoint_.substr(5);
            int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
            if (fd < 0) throw DataError("embedding service: socket() failed");
            sockaddr_un addr{};
            addr.sun_family = AF_UNIX;
            if (path.size() >= sizeof(addr.sun_path)) {
                ::close(fd);
                throw DataError("embedding service: unix path too long: " + path);
            }
            std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
            if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
                ::close(fd);
                throw DataError("embedding service: cannot connect to '" + path + "'");
            }
            return fd;
        }
        if (endpoint_.rfind("tcp:", 0) == 0) {
            const std::string hostport = endpoint_.substr(4);
            const std::size_t colon = hostport.find_last_of(':');
            if (colon == std::string::npos)
                throw DataError("embedding service: endpoint '" + endpoint_ + "' needs tcp:host:port");
            const std::string host = hostport.substr(0, colon), port = hostport.substr(colon + 1);
            addrinfo hints{};
            hints.ai_family = AF_UNSPEC;
            hints.ai_socktype = SOCK_STREAM;
            addrinfo* res = nullptr;
            if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
                throw DataError("embedding service: cannot resolve '" + hostport + "'");
            int fd = -1;
            for (addrinfo* a = res; a; a = a->ai_next) {
                fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
                if (fd < 0) continue;
                if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
                ::close(fd);
                fd = -1;
            }
            ::freeaddrinfo(res);
            if (fd < 0) throw DataError("embedding service: cannot connect to '" + hostport + "'");
            return fd;
        }
        throw DataError("embedding service: endpoint '" + endpoint_ + "' must start with unix: or tcp:");
    }

    EmbeddingVector exchange(const std::string& text) const {
        detail::Fd fd(connect_once());
        timeval tv{};
        tv.tv_sec = cfg_.timeout_ms / 1000;
        tv.tv_usec = (cfg_.timeout_ms % 1000) * 1000;
        ::setsockopt(fd.get(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        ::setsockopt(fd.get(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));

        std::string req;
        detail::put_u32_le(req, static_cast<std::uint32_t>(text.size()));
        req += text;
        detail::send_all(fd.get(), req.data(), req.size());

        const std::uint32_t id_len = detail::recv_u32(fd.get());
        if (id_len > 4096) throw DataError("embedding service: implausible id length " + std::to_string(id_len));
        std::string id(id_len, '\0');
        if (id_len) detail::recv_all(fd.get(), id.data(), id_len);
        const std::uint32_t count = detail::recv_u32(fd.get());
        if (count == 0 || count > (1u << 20))
            throw DataError("embedding service: implausible vector width " + std::to_string(count));
        EmbeddingVector out;
        out.embedder_id = id;
        out.values.resize(count);
        std::vector<unsigned char> raw(static_cast<std::size_t>(count) * 8);
        detail::recv_all(fd.get(), raw.data(), raw.size());
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b)
                bits |= static_cast<std::uint64_t>(raw[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)])
                        << (8 * b);
            double d;
            std::memcpy(&d, &bits, 8);
            out.values[i] = d;
        }
        return out;
    }

    std::string endpoint_;
    ServiceConfig cfg_;
    mutable std::string cached_id_;
};

}  // namespace promptrec

#endif
