/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include "fedweaver/crypto.hpp"
#include "fedweaver/rng.hpp"
#include "fedweaver/wire.hpp"

using namespace fedweaver;

TEST_CASE("record serialization is canonical and round-trips") {
    wire::Record record{{"b", "two"}, {"a", "one"}, {"z.1", "line\nbreak \\ and \r"}};
    std::string text = wire::serialize(record);
    CHECK(text == "a=one\nb=two\nz.1=line\\nbreak \\\\ and \\r\n");

    auto parsed = wire::parse(text);
    REQUIRE(parsed.ok());
    CHECK(parsed.value() == record);
    CHECK(wire::serialize(parsed.value()) == text);
}

TEST_CASE("record parse is strict") {
    CHECK_FALSE(wire::parse("b=1\na=2\n").ok());      // out of order
    CHECK_FALSE(wire::parse("a=1\na=2\n").ok());      // duplicate
    CHECK_FALSE(wire::parse("a=1").ok());             // missing newline
    CHECK_FALSE(wire::parse("a b=1\n").ok());         // bad key
    CHECK_FALSE(wire::parse("a=va\\qlue\n").ok());    // unknown escape
    CHECK_FALSE(wire::parse("novalue\n").ok());       // no '='
    CHECK(wire::parse("").ok());
    CHECK(wire::parse("").value().empty());
}

TEST_CASE("base64 and hex reject non-canonical input") {
    Bytes data{0x00, 0x10, 0xff, 0x7a};
    std::string b64 = wire::base64_encode(data);
    auto decoded = wire::base64_decode(b64);
    REQUIRE(decoded.ok());
    CHECK(decoded.value() == data);

    CHECK_FALSE(wire::base64_decode("####").ok());
    // Non-zero trailing padding bits decode to the same bytes under lax
    // decoders; the strict decoder must reject them.
    CHECK(wire::base64_decode("/w==").ok());
    CHECK_FALSE(wire::base64_decode("/x==").ok());

    std::string hex = wire::hex_encode(data);
    CHECK(hex == "0010ff7a");
    auto hex_decoded = wire::hex_decode(hex);
    REQUIRE(hex_decoded.ok());
    CHECK(hex_decoded.value() == data);
    CHECK_FALSE(wire::hex_decode("0010FF7A").ok()); // uppercase is non-canonical
    CHECK_FALSE(wire::hex_decode("abc").ok());
}

TEST_CASE("u64 text form is canonical") {
    CHECK(wire::format_u64(0) == "0");
    auto parsed = wire::parse_u64("12345");
    REQUIRE(parsed.ok());
    CHECK(parsed.value() == 12345);
    CHECK_FALSE(wire::parse_u64("012").ok());
    CHECK_FALSE(wire::parse_u64("").ok());
    CHECK_FALSE(wire::parse_u64("12x").ok());
    CHECK_FALSE(wire::parse_u64("99999999999999999999999").ok());
}

TEST_CASE("detached signature lines attach and split") {
    DeterministicRng rng(7);
    Bytes signature = rng.next_bytes(64);
    std::string body = "a=1\nb=2\n";
    std::string blob = wire::attach_signature(body, signature);
    auto split = wire::split_signed(blob);
    REQUIRE(split.ok());
    CHECK(split.value().body == body);
    CHECK(split.value().signature == signature);

    CHECK_FALSE(wire::split_signed(body).ok()); // no sig line
    CHECK_FALSE(wire::split_signed("").ok());
}

TEST_CASE("signing keys derive deterministically and verify") {
    Bytes seed = crypto::derive_seed32(42, "entity-sign:idp.example");
    CHECK(seed == crypto::derive_seed32(42, "entity-sign:idp.example"));
    CHECK(seed != crypto::derive_seed32(42, "entity-sign:idp.other"));
    CHECK(seed != crypto::derive_seed32(43, "entity-sign:idp.example"));

    crypto::SigningKey key = crypto::signing_key_from_seed(seed);
    crypto::SigningKey other =
        crypto::signing_key_from_seed(crypto::derive_seed32(42, "other"));
    std::string message = "federation metadata";
    Bytes signature = crypto::sign(key, message);
    CHECK(crypto::verify(key.verify_key, message, signature));
    CHECK_FALSE(crypto::verify(other.verify_key, message, signature));
    CHECK_FALSE(crypto::verify(key.verify_key, "federation metadatb", signature));

    Bytes tampered = signature;
    tampered[10] ^= 0x01;
    CHECK_FALSE(crypto::verify(key.verify_key, message, tampered));
}

TEST_CASE("sealing authenticates every byte") {
    DeterministicRng rng(11);
    crypto::SecretKey key = crypto::hash32("test-key", "k1");
    Bytes sealed = crypto::seal(key, "ticket content", rng);
    auto opened = crypto::unseal(key, sealed);
    REQUIRE(opened.has_value());
    CHECK(*opened == "ticket content");

    crypto::SecretKey wrong = crypto::hash32("test-key", "k2");
    CHECK_FALSE(crypto::unseal(wrong, sealed).has_value());

    for (std::size_t i = 0; i < sealed.size(); ++i) {
        Bytes mutated = sealed;
        mutated[i] ^= 0x01;
        CHECK_FALSE(crypto::unseal(key, mutated).has_value());
    }
}

TEST_CASE("deterministic rng reproduces streams per seed") {
    DeterministicRng a(1234);
    DeterministicRng b(1234);
    DeterministicRng c(1235);
    bool all_equal = true;
    bool any_diff_c = false;
    for (int i = 0; i < 100; ++i) {
        std::uint64_t va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_diff_c = any_diff_c || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff_c);

    DeterministicRng d(9);
    for (int i = 0; i < 1000; ++i) {
        double u = d.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(d.opaque_id("s-").size() == 2 + 32);
    CHECK(d.next_bytes(5).size() == 5);
}
