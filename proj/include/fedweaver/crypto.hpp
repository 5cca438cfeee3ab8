/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_CRYPTO_HPP
#define FEDWEAVER_CRYPTO_HPP

#include <optional>
#include <string>
#include <string_view>

#include "fedweaver/common.hpp"
#include "fedweaver/rng.hpp"

namespace fedweaver::crypto {

/// Idempotent libsodium bootstrap; called by every entry point below.
void init();

inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kSecretKeySize = 32;

/// Ed25519 pair. Key material is always derived from seeds so that a run
/// seed fully determines every signature byte; nothing is hardcoded.
struct SigningKey {
    Bytes secret_key; // 64 bytes
    Bytes verify_key; // 32 bytes
};

SigningKey signing_key_from_seed(const Bytes& seed32);
Bytes sign(const SigningKey& key, std::string_view message);
bool verify(const Bytes& verify_key, std::string_view message, const Bytes& signature);

/// Symmetric authenticated sealing (XSalsa20-Poly1305). Output is
/// nonce || ciphertext; unseal fails on any modification.
using SecretKey = Bytes; // 32 bytes

Bytes seal(const SecretKey& key, std::string_view plaintext, DeterministicRng& rng);
std::optional<std::string> unseal(const SecretKey& key, const Bytes& sealed);

/// Domain-separated BLAKE2b-256.
Bytes hash32(std::string_view domain, std::string_view data);

/// Stable 32-byte seed for the named key slot of a run, e.g.
/// derive_seed32(seed, "entity-sign:idp.uni.example").
Bytes derive_seed32(std::uint64_t master_seed, std::string_view label);

} // namespace fedweaver::crypto

#endif
