#pragma once

#include <cstdint>
#include <variant>

#include "controller.hpp"
#include "metrics.hpp"

namespace icp2p {

/// One-hop model transfer. params is the shipped weight vector; g_prev is
/// the sender's reference gradient for the receiver's correction; mv is the
/// sender's characteristic-set score; directive, when present, is the
/// controller instruction governing the next cycle.
struct ModelPacket {
    int32_t sender = -1;
    int32_t cycle = 0;
    int32_t site_rounds_done = 0;
    MetricVector mv;
    ParamVector params;
    bool has_g_prev = false;
    ParamVector g_prev;
    bool has_directive = false;
    ControlDirective directive;

    void check() const;
    bool operator==(const ModelPacket& o) const;
};

/// Per-institution cycle summary sent to the cycle-end decision node.
struct ScoreReport {
    int32_t sender = -1;
    int32_t cycle = 0;
    double rho = 0.0;
    MetricVector mv;

    void check() const;
    bool operator==(const ScoreReport& o) const;
};

bool operator==(const MetricVector& a, const MetricVector& b);
bool operator==(const ControlDirective& a, const ControlDirective& b);

using WireMessage = std::variant<ModelPacket, ScoreReport, ControlDirective>;

/// Decode failure cause; each contract violation is distinguishable.
enum class WireErrorCode {
    BadMagic = 1,
    Version,
    Length,    // frame shorter/longer than the header promises
    Crc,
    Malformed, // payload structure inconsistent with the message type
};

struct WireError : ProtocolError {
    WireErrorCode code;
    WireError(WireErrorCode c, const std::string& what) : ProtocolError(what), code(c) {}
};

/// IEEE CRC32 (reflected 0xEDB88320 polynomial); crc32("123456789") is the
/// standard check value 0xCBF43926.
uint32_t crc32(const uint8_t* data, size_t len);

/// Frame layout, little-endian: "ICP2" | version u16 = 1 | msg-type u8
/// (1 = ModelPacket, 2 = ScoreReport, 3 = ControlDirective) | flags u8
/// (bit0: g_prev present, bit1: directive present; only valid on type 1) |
/// payload-length u64 | payload | CRC32 of header + payload.
/// Parameter vectors encode as count u64 followed by raw IEEE-754 floats.
std::vector<uint8_t> encode(const ModelPacket& msg);
std::vector<uint8_t> encode(const ScoreReport& msg);
std::vector<uint8_t> encode(const ControlDirective& msg);
std::vector<uint8_t> encode(const WireMessage& msg);

/// Parses one complete frame; throws WireError on any defect, never crashes
/// on arbitrary input bytes.
WireMessage decode(const std::vector<uint8_t>& bytes);

} // namespace icp2p
