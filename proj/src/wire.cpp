/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/wire.hpp"

#include <sodium.h>

#include <cctype>

namespace fedweaver::wire {

namespace {

bool key_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '@' ||
           c == ':' || c == '/' || c == '-';
}

} // namespace

bool valid_key(std::string_view key) {
    if (key.empty()) {
        return false;
    }
    for (char c : key) {
        if (!key_char(c)) {
            return false;
        }
    }
    return true;
}

std::string escape_value(std::string_view value) {
    std::string out;
    out.reserve(value.size());
    for (char c : value) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c); break;
        }
    }
    return out;
}

Result<std::string, WireError> unescape_value(std::string_view value) {
    std::string out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        char c = value[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (i + 1 >= value.size()) {
            return WireError{"dangling escape"};
        }
        char next = value[++i];
        switch (next) {
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        default: return WireError{"unknown escape"};
        }
    }
    return out;
}

std::string serialize(const Record& record) {
    std::string out;
    for (const auto& [key, value] : record) {
        out += key;
        out.push_back('=');
        out += escape_value(value);
        out.push_back('\n');
    }
    return out;
}

Result<Record, WireError> parse(std::string_view text) {
    Record record;
    std::string last_key;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        ++line_no;
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            return WireError{"missing trailing newline", line_no};
        }
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            return WireError{"line without '='", line_no};
        }
        std::string key(line.substr(0, eq));
        if (!valid_key(key)) {
            return WireError{"invalid key", line_no};
        }
        if (!last_key.empty() && key <= last_key) {
            return WireError{"keys not strictly ascending", line_no};
        }
        auto value = unescape_value(line.substr(eq + 1));
        if (!value.ok()) {
            WireError err = value.error();
            err.line = line_no;
            return err;
        }
        record.emplace(key, value.take());
        last_key = std::move(key);
    }
    return record;
}

std::string attach_signature(const std::string& body, const Bytes& signature) {
    std::string out = body;
    out += "sig=";
    out += base64_encode(signature);
    out.push_back('\n');
    return out;
}

Result<SignedBlob, WireError> split_signed(std::string_view blob) {
    if (blob.empty() || blob.back() != '\n') {
        return WireError{"missing trailing newline"};
    }
    std::size_t body_end = blob.rfind('\n', blob.size() - 2);
    std::size_t sig_start = body_end == std::string_view::npos ? 0 : body_end + 1;
    std::string_view sig_line = blob.substr(sig_start, blob.size() - sig_start - 1);
    if (!sig_line.starts_with("sig=")) {
        return WireError{"missing signature line"};
    }
    auto signature = base64_decode(sig_line.substr(4));
    if (!signature.ok()) {
        return signature.error();
    }
    return SignedBlob{std::string(blob.substr(0, sig_start)), signature.take()};
}

std::string base64_encode(const Bytes& data) {
    std::string out(sodium_base64_encoded_len(data.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), data.data(), data.size(),
                      sodium_base64_VARIANT_ORIGINAL);
    out.resize(out.find('\0') == std::string::npos ? out.size() : out.find('\0'));
    return out;
}

Result<Bytes, WireError> base64_decode(std::string_view text) {
    Bytes out(text.size() == 0 ? 0 : (text.size() / 4 + 1) * 3);
    std::size_t decoded_len = 0;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr,
                          &decoded_len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
        return WireError{"invalid base64"};
    }
    out.resize(decoded_len);
    // Canonical form only: reject encodings that decode but differ.
    if (base64_encode(out) != text) {
        return WireError{"non-canonical base64"};
    }
    return out;
}

std::string hex_encode(const Bytes& data) {
    std::string out(data.size() * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), data.data(), data.size());
    out.resize(data.size() * 2);
    return out;
}

Result<Bytes, WireError> hex_decode(std::string_view text) {
    if (text.size() % 2 != 0) {
        return WireError{"odd-length hex"};
    }
    Bytes out(text.size() / 2);
    std::size_t decoded_len = 0;
    if (sodium_hex2bin(out.data(), out.size(), text.data(), text.size(), nullptr,
                       &decoded_len, nullptr) != 0) {
        return WireError{"invalid hex"};
    }
    out.resize(decoded_len);
    if (hex_encode(out) != text) {
        return WireError{"non-canonical hex"};
    }
    return out;
}

std::string format_u64(std::uint64_t value) {
    return std::to_string(value);
}

Result<std::uint64_t, WireError> parse_u64(std::string_view text) {
    if (text.empty() || text.size() > 20) {
        return WireError{"invalid integer"};
    }
    if (text.size() > 1 && text.front() == '0') {
        return WireError{"non-canonical integer"};
    }
    std::uint64_t value = 0;
    for (char c : text) {
        if (c < '0' || c > '9') {
            return WireError{"invalid integer"};
        }
        std::uint64_t digit = static_cast<std::uint64_t>(c - '0');
        if (value > (UINT64_MAX - digit) / 10) {
            return WireError{"integer overflow"};
        }
        value = value * 10 + digit;
    }
    return value;
}

} // namespace fedweaver::wire
