/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_RNG_HPP
#define FEDWEAVER_RNG_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "fedweaver/common.hpp"

namespace fedweaver {

/// Seeded generator behind every "random" artifact in the testbed: salts,
/// nonces, opaque identifiers, drop decisions. Same seed, same stream.
class DeterministicRng {
public:
    explicit DeterministicRng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0,1) from the top 53 bits; avoids the
    /// implementation-defined std::uniform_real_distribution.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    Bytes next_bytes(std::size_t n);

    std::string next_hex(std::size_t n_bytes);

    /// prefix + 128 bits of hex, e.g. "s-3f09...".
    std::string opaque_id(std::string_view prefix);

private:
    std::mt19937_64 gen_;
};

} // namespace fedweaver

#endif
