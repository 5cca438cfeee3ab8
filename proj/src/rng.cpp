/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/rng.hpp"

namespace fedweaver {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";
}

Bytes DeterministicRng::next_bytes(std::size_t n) {
    Bytes out;
    out.reserve(n);
    while (out.size() < n) {
        std::uint64_t word = next_u64();
        for (int i = 0; i < 8 && out.size() < n; ++i) {
            out.push_back(static_cast<unsigned char>(word >> (8 * i)));
        }
    }
    return out;
}

std::string DeterministicRng::next_hex(std::size_t n_bytes) {
    Bytes raw = next_bytes(n_bytes);
    std::string out;
    out.reserve(2 * raw.size());
    for (unsigned char b : raw) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

std::string DeterministicRng::opaque_id(std::string_view prefix) {
    std::string out(prefix);
    out += next_hex(16);
    return out;
}

} // namespace fedweaver
