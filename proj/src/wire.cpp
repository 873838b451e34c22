#include "wire.hpp"

#include <array>
#include <cmath>
#include <cstring>

namespace icp2p {

// ---- message invariants -------------------------------------------------

static void check_mv_finite(const MetricVector& mv, const char* who) {
    if (!std::isfinite(mv.p) || !std::isfinite(mv.s) || !std::isfinite(mv.m))
        throw NumericError(std::string(who) + ": non-finite metric vector");
}

void ModelPacket::check() const {
    if (params.empty()) throw ShapeError("model packet: empty parameter vector");
    if (!all_finite(params)) throw NumericError("model packet: non-finite parameters");
    if (has_g_prev) {
        if (g_prev.size() != params.size())
            throw ShapeError("model packet: reference gradient length differs from parameters");
        if (!all_finite(g_prev)) throw NumericError("model packet: non-finite reference gradient");
    }
    if (cycle < 0 || site_rounds_done < 0)
        throw ShapeError("model packet: negative round counter");
    check_mv_finite(mv, "model packet");
    if (has_directive) directive.check();
}

void ScoreReport::check() const {
    if (cycle < 0) throw ShapeError("score report: negative cycle");
    if (!std::isfinite(rho)) throw NumericError("score report: non-finite score");
    check_mv_finite(mv, "score report");
}

bool operator==(const MetricVector& a, const MetricVector& b) {
    return a.p == b.p && a.s == b.s && a.m == b.m;
}

bool operator==(const ControlDirective& a, const ControlDirective& b) {
    return a.sequence == b.sequence && a.site_rounds == b.site_rounds &&
           a.trans_rounds == b.trans_rounds && a.converged == b.converged &&
           a.streak == b.streak && a.origin_id == b.origin_id;
}

bool ModelPacket::operator==(const ModelPacket& o) const {
    if (!(sender == o.sender && cycle == o.cycle && site_rounds_done == o.site_rounds_done &&
          mv == o.mv && params == o.params && has_g_prev == o.has_g_prev &&
          has_directive == o.has_directive))
        return false;
    if (has_g_prev && g_prev != o.g_prev) return false;
    if (has_directive && !(directive == o.directive)) return false;
    return true;
}

bool ScoreReport::operator==(const ScoreReport& o) const {
    return sender == o.sender && cycle == o.cycle && rho == o.rho && mv == o.mv;
}

// ---- crc32 --------------------------------------------------------------

uint32_t crc32(const uint8_t* data, size_t len) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

// ---- little-endian primitives ------------------------------------------

namespace {

constexpr uint8_t kMagic[4] = {'I', 'C', 'P', '2'};
constexpr uint16_t kVersion = 1;
constexpr size_t kHeaderLen = 4 + 2 + 1 + 1 + 8;
constexpr uint8_t kFlagGPrev = 0x01;
constexpr uint8_t kFlagDirective = 0x02;

struct Writer {
    std::vector<uint8_t> buf;

    void u8(uint8_t v) { buf.push_back(v); }
    void u16(uint16_t v) {
        buf.push_back(static_cast<uint8_t>(v & 0xFF));
        buf.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void params(const ParamVector& p) {
        u64(p.size());
        for (float v : p) f32(v);
    }
    void metric(const MetricVector& mv) {
        f64(mv.p);
        f64(mv.s);
        f64(mv.m);
    }
    void directive(const ControlDirective& d) {
        u64(d.sequence.size());
        for (size_t i = 0; i < d.sequence.size(); ++i) {
            i32(d.sequence[i]);
            i32(d.site_rounds[i]);
        }
        i32(d.trans_rounds);
        u8(d.converged ? 1 : 0);
        i32(d.streak);
        i32(d.origin_id);
    }
};

struct Reader {
    const uint8_t* p;
    size_t len;
    size_t at = 0;

    void need(size_t n) {
        if (at + n > len) throw WireError(WireErrorCode::Malformed, "payload truncated");
    }
    uint8_t u8() {
        need(1);
        return p[at++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[at] | (p[at + 1] << 8));
        at += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[at + static_cast<size_t>(i)]) << (8 * i);
        at += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[at + static_cast<size_t>(i)]) << (8 * i);
        at += 8;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    ParamVector params() {
        const uint64_t n = u64();
        if (n == 0) throw WireError(WireErrorCode::Malformed, "empty parameter vector");
        if (n > (len - at) / 4)
            throw WireError(WireErrorCode::Malformed, "parameter count exceeds payload");
        ParamVector out;
        out.reserve(static_cast<size_t>(n));
        for (uint64_t i = 0; i < n; ++i) out.push_back(f32());
        return out;
    }
    MetricVector metric() {
        MetricVector mv;
        mv.p = f64();
        mv.s = f64();
        mv.m = f64();
        return mv;
    }
    ControlDirective directive() {
        ControlDirective d;
        const uint64_t k = u64();
        if (k == 0 || k > (len - at) / 8)
            throw WireError(WireErrorCode::Malformed, "directive sequence length invalid");
        for (uint64_t i = 0; i < k; ++i) {
            d.sequence.push_back(i32());
            d.site_rounds.push_back(i32());
        }
        d.trans_rounds = i32();
        d.converged = u8() != 0;
        d.streak = i32();
        d.origin_id = i32();
        return d;
    }
    void done() {
        if (at != len) throw WireError(WireErrorCode::Malformed, "trailing payload bytes");
    }
};

std::vector<uint8_t> frame(uint8_t msg_type, uint8_t flags, const std::vector<uint8_t>& payload) {
    Writer w;
    w.buf.reserve(kHeaderLen + payload.size() + 4);
    w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
    w.u16(kVersion);
    w.u8(msg_type);
    w.u8(flags);
    w.u64(payload.size());
    w.buf.insert(w.buf.end(), payload.begin(), payload.end());
    w.u32(crc32(w.buf.data(), w.buf.size()));
    return w.buf;
}

void validate_decoded(const ModelPacket& m) {
    try {
        m.check();
    } catch (const Error& e) {
        throw WireError(WireErrorCode::Malformed, std::string("model packet invalid: ") + e.what());
    }
}

void validate_decoded(const ScoreReport& m) {
    try {
        m.check();
    } catch (const Error& e) {
        throw WireError(WireErrorCode::Malformed, std::string("score report invalid: ") + e.what());
    }
}

void validate_decoded(const ControlDirective& d) {
    try {
        d.check();
    } catch (const Error& e) {
        throw WireError(WireErrorCode::Malformed, std::string("directive invalid: ") + e.what());
    }
}

} // namespace

// ---- encode -------------------------------------------------------------

std::vector<uint8_t> encode(const ModelPacket& msg) {
    msg.check();
    Writer w;
    w.i32(msg.sender);
    w.i32(msg.cycle);
    w.i32(msg.site_rounds_done);
    w.metric(msg.mv);
    w.params(msg.params);
    uint8_t flags = 0;
    if (msg.has_g_prev) {
        flags |= kFlagGPrev;
        w.params(msg.g_prev);
    }
    if (msg.has_directive) {
        flags |= kFlagDirective;
        w.directive(msg.directive);
    }
    return frame(1, flags, w.buf);
}

std::vector<uint8_t> encode(const ScoreReport& msg) {
    msg.check();
    Writer w;
    w.i32(msg.sender);
    w.i32(msg.cycle);
    w.f64(msg.rho);
    w.metric(msg.mv);
    return frame(2, 0, w.buf);
}

std::vector<uint8_t> encode(const ControlDirective& msg) {
    msg.check();
    Writer w;
    w.directive(msg);
    return frame(3, 0, w.buf);
}

std::vector<uint8_t> encode(const WireMessage& msg) {
    return std::visit([](const auto& m) { return encode(m); }, msg);
}

// ---- decode -------------------------------------------------------------

WireMessage decode(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < kHeaderLen + 4)
        throw WireError(WireErrorCode::Length, "frame shorter than header plus checksum");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw WireError(WireErrorCode::BadMagic, "bad magic");

    Reader header{bytes.data() + 4, kHeaderLen - 4};
    const uint16_t version = header.u16();
    if (version != kVersion)
        throw WireError(WireErrorCode::Version,
                        "unsupported version " + std::to_string(version));
    const uint8_t msg_type = header.u8();
    const uint8_t flags = header.u8();
    const uint64_t payload_len = header.u64();

    if (payload_len != bytes.size() - kHeaderLen - 4)
        throw WireError(WireErrorCode::Length, "payload length does not match frame size");

    const uint32_t stored = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                            (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
                            (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
                            (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
    const uint32_t computed = crc32(bytes.data(), bytes.size() - 4);
    if (stored != computed) throw WireError(WireErrorCode::Crc, "checksum mismatch");

    Reader r{bytes.data() + kHeaderLen, static_cast<size_t>(payload_len)};
    switch (msg_type) {
        case 1: {
            ModelPacket m;
            m.sender = r.i32();
            m.cycle = r.i32();
            m.site_rounds_done = r.i32();
            m.mv = r.metric();
            m.params = r.params();
            if (flags & kFlagGPrev) {
                m.has_g_prev = true;
                m.g_prev = r.params();
            }
            if (flags & kFlagDirective) {
                m.has_directive = true;
                m.directive = r.directive();
            }
            if (flags & ~(kFlagGPrev | kFlagDirective))
                throw WireError(WireErrorCode::Malformed, "unknown flag bits");
            r.done();
            validate_decoded(m);
            return m;
        }
        case 2: {
            if (flags != 0) throw WireError(WireErrorCode::Malformed, "unexpected flags");
            ScoreReport m;
            m.sender = r.i32();
            m.cycle = r.i32();
            m.rho = r.f64();
            m.mv = r.metric();
            r.done();
            validate_decoded(m);
            return m;
        }
        case 3: {
            if (flags != 0) throw WireError(WireErrorCode::Malformed, "unexpected flags");
            ControlDirective d = r.directive();
            r.done();
            validate_decoded(d);
            return d;
        }
        default:
            throw WireError(WireErrorCode::Malformed,
                            "unknown message type " + std::to_string(msg_type));
    }
}

} // namespace icp2p
