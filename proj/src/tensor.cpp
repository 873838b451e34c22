#include "tensor.hpp"

#include <cstring>

namespace icp2p {

uint64_t param_digest(const ParamVector& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (float f : params) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::string digest_hex(uint64_t digest) {
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = hex[digest & 0xf];
        digest >>= 4;
    }
    return s;
}

} // namespace icp2p
