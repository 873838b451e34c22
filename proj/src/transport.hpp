#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace icp2p {

/// Reliable, ordered, addressed frame delivery between nodes. A frame is the
/// exact wire encoding of one message (the length lives inside its header).
/// send() never blocks indefinitely; recv() blocks until a frame addressed
/// to `self` arrives, returning false on shutdown or timeout. Delivery from
/// one sender to one receiver preserves send order.
class Transport {
public:
    virtual ~Transport() = default;

    virtual void send(int32_t from, int32_t dest, const std::vector<uint8_t>& frame) = 0;

    virtual bool recv(int32_t self, std::vector<uint8_t>& frame) = 0;

    /// Wake every blocked receiver; their recv calls fail once the already
    /// delivered frames drain. Idempotent.
    virtual void shutdown() = 0;
};

/// Mutex-protected per-node FIFO queues in one process.
std::unique_ptr<Transport> make_inproc_transport(const std::vector<int32_t>& ids);

/// Loopback TCP: one listener per node on 127.0.0.1, a connected socket per
/// ordered node pair, frames written verbatim and re-framed by reading the
/// fixed header. Construction completes the full mesh; failures throw.
std::unique_ptr<Transport> make_socket_transport(const std::vector<int32_t>& ids);

} // namespace icp2p
