#include "transport.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "wire.hpp"

namespace icp2p {

namespace {

constexpr auto kRecvTimeout = std::chrono::seconds(120);

/// One node's inbox: frames in arrival order, closed flag for shutdown.
struct Inbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<uint8_t>> frames;
    bool closed = false;

    void push(std::vector<uint8_t> frame) {
        {
            std::lock_guard<std::mutex> lock(mu);
            frames.push_back(std::move(frame));
        }
        cv.notify_all();
    }

    bool pop(std::vector<uint8_t>& frame) {
        std::unique_lock<std::mutex> lock(mu);
        if (!cv.wait_for(lock, kRecvTimeout, [this] { return !frames.empty() || closed; }))
            return false;
        if (frames.empty()) return false;
        frame = std::move(frames.front());
        frames.pop_front();
        return true;
    }

    void close() {
        {
            std::lock_guard<std::mutex> lock(mu);
            closed = true;
        }
        cv.notify_all();
    }
};

class InProcTransport final : public Transport {
public:
    explicit InProcTransport(const std::vector<int32_t>& ids) {
        for (int32_t id : ids) inboxes_[id]; // default-construct
    }

    void send(int32_t from, int32_t dest, const std::vector<uint8_t>& frame) override {
        (void)from;
        auto it = inboxes_.find(dest);
        if (it == inboxes_.end())
            throw ProtocolError("transport: unknown destination " + std::to_string(dest));
        it->second.push(frame);
    }

    bool recv(int32_t self, std::vector<uint8_t>& frame) override {
        auto it = inboxes_.find(self);
        if (it == inboxes_.end())
            throw ProtocolError("transport: unknown receiver " + std::to_string(self));
        return it->second.pop(frame);
    }

    void shutdown() override {
        for (auto& [id, box] : inboxes_) {
            (void)id;
            box.close();
        }
    }

private:
    std::map<int32_t, Inbox> inboxes_;
};

[[noreturn]] void sys_fail(const std::string& what) {
    throw ProtocolError("transport: " + what + ": " + std::strerror(errno));
}

void write_all(int fd, const uint8_t* data, size_t len) {
    size_t off = 0;
    while (off < len) {
        const ssize_t n = ::write(fd, data + off, len - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            sys_fail("write");
        }
        off += static_cast<size_t>(n);
    }
}

/// Read exactly len bytes; false on clean EOF at offset 0, throws elsewhere.
bool read_all(int fd, uint8_t* data, size_t len) {
    size_t off = 0;
    while (off < len) {
        const ssize_t n = ::read(fd, data + off, len - off);
        if (n == 0) {
            if (off == 0) return false;
            throw ProtocolError("transport: connection closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (off == 0 && (errno == ECONNRESET || errno == EBADF)) return false;
            sys_fail("read");
        }
        off += static_cast<size_t>(n);
    }
    return true;
}

class SocketTransport final : public Transport {
public:
    explicit SocketTransport(const std::vector<int32_t>& ids) {
        try {
            setup(ids);
        } catch (...) {
            teardown();
            throw;
        }
    }

    ~SocketTransport() override {
        shutdown();
        teardown();
    }

    void send(int32_t from, int32_t dest, const std::vector<uint8_t>& frame) override {
        const auto it = out_.find({from, dest});
        if (it == out_.end())
            throw ProtocolError("transport: no socket " + std::to_string(from) + " -> " +
                                std::to_string(dest));
        write_all(it->second, frame.data(), frame.size());
    }

    bool recv(int32_t self, std::vector<uint8_t>& frame) override {
        auto it = inboxes_.find(self);
        if (it == inboxes_.end())
            throw ProtocolError("transport: unknown receiver " + std::to_string(self));
        return it->second.pop(frame);
    }

    void shutdown() override {
        bool expected = false;
        if (!shut_.compare_exchange_strong(expected, true)) return;
        for (auto& [key, fd] : out_) {
            (void)key;
            ::shutdown(fd, SHUT_RDWR);
        }
        for (int fd : accepted_) ::shutdown(fd, SHUT_RDWR);
        for (auto& t : readers_)
            if (t.joinable()) t.join();
        readers_.clear();
        for (auto& [id, box] : inboxes_) {
            (void)id;
            box.close();
        }
    }

private:
    void setup(const std::vector<int32_t>& ids) {
        // Listeners first so every later connect has a target.
        std::map<int32_t, uint16_t> port;
        for (int32_t id : ids) {
            inboxes_[id];
            const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
            if (fd < 0) sys_fail("socket");
            listeners_[id] = fd;
            sockaddr_in addr{};
            addr.sin_family = AF_INET;
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
            addr.sin_port = 0;
            if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) sys_fail("bind");
            if (::listen(fd, static_cast<int>(ids.size()) + 4) != 0) sys_fail("listen");
            socklen_t len = sizeof(addr);
            if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
                sys_fail("getsockname");
            port[id] = ntohs(addr.sin_port);
        }

        // Full mesh of ordered pairs.
        for (int32_t from : ids) {
            for (int32_t dest : ids) {
                if (from == dest) continue;
                const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
                if (fd < 0) sys_fail("socket");
                out_[{from, dest}] = fd;
                sockaddr_in addr{};
                addr.sin_family = AF_INET;
                addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
                addr.sin_port = htons(port[dest]);
                if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
                    sys_fail("connect");
            }
        }

        // Accept each node's K-1 inbound sockets; a reader thread per socket
        // re-frames the byte stream into whole messages for that node's inbox.
        for (int32_t id : ids) {
            for (size_t k = 0; k + 1 < ids.size(); ++k) {
                const int fd = ::accept(listeners_[id], nullptr, nullptr);
                if (fd < 0) sys_fail("accept");
                accepted_.push_back(fd);
                Inbox* box = &inboxes_[id];
                readers_.emplace_back([fd, box] { reader_loop(fd, *box); });
            }
        }
    }

    static void reader_loop(int fd, Inbox& box) {
        constexpr size_t kHeaderLen = 16;
        constexpr uint64_t kMaxPayload = 1ull << 30;
        for (;;) {
            std::vector<uint8_t> frame(kHeaderLen);
            if (!read_all(fd, frame.data(), kHeaderLen)) return;
            uint64_t payload_len = 0;
            std::memcpy(&payload_len, frame.data() + 8, 8);
            if (payload_len > kMaxPayload) return; // poisoned stream; drop it
            frame.resize(kHeaderLen + payload_len + 4);
            if (!read_all(fd, frame.data() + kHeaderLen, payload_len + 4)) return;
            box.push(std::move(frame));
        }
    }

    void teardown() {
        for (auto& t : readers_)
            if (t.joinable()) t.join();
        readers_.clear();
        for (auto& [key, fd] : out_) {
            (void)key;
            ::close(fd);
        }
        out_.clear();
        for (int fd : accepted_) ::close(fd);
        accepted_.clear();
        for (auto& [id, fd] : listeners_) {
            (void)id;
            ::close(fd);
        }
        listeners_.clear();
    }

    std::map<int32_t, Inbox> inboxes_;
    std::map<int32_t, int> listeners_;
    std::map<std::pair<int32_t, int32_t>, int> out_;
    std::vector<int> accepted_;
    std::vector<std::thread> readers_;
    std::atomic<bool> shut_{false};
};

} // namespace

std::unique_ptr<Transport> make_inproc_transport(const std::vector<int32_t>& ids) {
    return std::make_unique<InProcTransport>(ids);
}

std::unique_ptr<Transport> make_socket_transport(const std::vector<int32_t>& ids) {
    return std::make_unique<SocketTransport>(ids);
}

} // namespace icp2p
