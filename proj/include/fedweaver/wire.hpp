/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_WIRE_HPP
#define FEDWEAVER_WIRE_HPP

#include <map>
#include <string>
#include <string_view>

#include "fedweaver/common.hpp"

namespace fedweaver::wire {

/// Flat string map with one canonical byte representation: lines of
/// "key=value\n" in strictly ascending key order. Signing and golden-file
/// comparisons rely on serialize() being bit-exact.
using Record = std::map<std::string, std::string>;

struct WireError {
    std::string message;
    std::size_t line = 0; // 1-based, 0 when not line-specific
};

/// Keys: [A-Za-z0-9_.@:/-]+ . Values escape backslash, LF and CR.
bool valid_key(std::string_view key);
std::string escape_value(std::string_view value);
Result<std::string, WireError> unescape_value(std::string_view value);

std::string serialize(const Record& record);

/// Strict parse: every line key=value, keys valid and strictly ascending,
/// escapes canonical. Anything else is rejected so that a parsed record
/// re-serializes to the exact input bytes.
Result<Record, WireError> parse(std::string_view text);

/// Signed blob layout: canonical record text followed by one final
/// "sig=<base64>" line. The signature is detached: it covers the record
/// text only.
std::string attach_signature(const std::string& body, const Bytes& signature);

struct SignedBlob {
    std::string body; // canonical record text, still serialized
    Bytes signature;
};
Result<SignedBlob, WireError> split_signed(std::string_view blob);

// Strict base64/hex: decode rejects any input that does not re-encode to
// the identical text, so no two distinct wire bytes share a decoding.
std::string base64_encode(const Bytes& data);
Result<Bytes, WireError> base64_decode(std::string_view text);
std::string hex_encode(const Bytes& data);
Result<Bytes, WireError> hex_decode(std::string_view text);

std::string format_u64(std::uint64_t value);
Result<std::uint64_t, WireError> parse_u64(std::string_view text);

} // namespace fedweaver::wire

#endif
