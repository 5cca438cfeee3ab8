/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace fedweaver::crypto {

void init() {
    static const int rc = sodium_init();
    if (rc < 0) {
        throw std::runtime_error("libsodium initialization failed");
    }
}

SigningKey signing_key_from_seed(const Bytes& seed32) {
    init();
    if (seed32.size() != crypto_sign_SEEDBYTES) {
        throw std::invalid_argument("signing seed must be 32 bytes");
    }
    SigningKey key;
    key.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    key.verify_key.resize(crypto_sign_PUBLICKEYBYTES);
    crypto_sign_seed_keypair(key.verify_key.data(), key.secret_key.data(), seed32.data());
    return key;
}

Bytes sign(const SigningKey& key, std::string_view message) {
    init();
    Bytes signature(crypto_sign_BYTES);
    crypto_sign_detached(signature.data(), nullptr,
                         reinterpret_cast<const unsigned char*>(message.data()),
                         message.size(), key.secret_key.data());
    return signature;
}

bool verify(const Bytes& verify_key, std::string_view message, const Bytes& signature) {
    init();
    if (verify_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) {
        return false;
    }
    return crypto_sign_verify_detached(signature.data(),
                                       reinterpret_cast<const unsigned char*>(message.data()),
                                       message.size(), verify_key.data()) == 0;
}

Bytes seal(const SecretKey& key, std::string_view plaintext, DeterministicRng& rng) {
    init();
    if (key.size() != crypto_secretbox_KEYBYTES) {
        throw std::invalid_argument("secret key must be 32 bytes");
    }
    Bytes nonce = rng.next_bytes(crypto_secretbox_NONCEBYTES);
    Bytes out(crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES + plaintext.size());
    std::copy(nonce.begin(), nonce.end(), out.begin());
    crypto_secretbox_easy(out.data() + crypto_secretbox_NONCEBYTES,
                          reinterpret_cast<const unsigned char*>(plaintext.data()),
                          plaintext.size(), nonce.data(), key.data());
    return out;
}

std::optional<std::string> unseal(const SecretKey& key, const Bytes& sealed) {
    init();
    if (key.size() != crypto_secretbox_KEYBYTES ||
        sealed.size() < crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES) {
        return std::nullopt;
    }
    std::size_t cipher_len = sealed.size() - crypto_secretbox_NONCEBYTES;
    std::string plain(cipher_len - crypto_secretbox_MACBYTES, '\0');
    if (crypto_secretbox_open_easy(reinterpret_cast<unsigned char*>(plain.data()),
                                   sealed.data() + crypto_secretbox_NONCEBYTES, cipher_len,
                                   sealed.data(), key.data()) != 0) {
        return std::nullopt;
    }
    return plain;
}

Bytes hash32(std::string_view domain, std::string_view data) {
    init();
    Bytes out(32);
    crypto_generichash_state state;
    crypto_generichash_init(&state, nullptr, 0, out.size());
    auto update = [&state](std::string_view part) {
        crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(part.data()),
                                  part.size());
    };
    update(domain);
    update(std::string_view("\x00", 1));
    update(data);
    crypto_generichash_final(&state, out.data(), out.size());
    return out;
}

Bytes derive_seed32(std::uint64_t master_seed, std::string_view label) {
    std::string input(label);
    input.push_back('\x00');
    for (int i = 0; i < 8; ++i) {
        input.push_back(static_cast<char>(master_seed >> (8 * i)));
    }
    return hash32("seed", input);
}

} // namespace fedweaver::crypto
