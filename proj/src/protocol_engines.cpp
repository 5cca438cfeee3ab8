/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/protocol_engines.hpp"

#include <algorithm>

#include "fedweaver/wire.hpp"

namespace fedweaver::proto {

namespace {

constexpr std::string_view kAttrPrefix = "attr.";

std::map<std::string, std::string> attributes_from_record(const wire::Record& record) {
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : record) {
        if (key.starts_with(kAttrPrefix)) {
            out.emplace(key.substr(kAttrPrefix.size()), value);
        }
    }
    return out;
}

CredError malformed(std::string detail) {
    return CredError{CredError::Code::Malformed, std::move(detail)};
}

// Strict field pull: every consumed key is accounted for, and any leftover
// key fails the parse. A one-byte change to a key never goes unnoticed.
struct RecordReader {
    const wire::Record& record;
    std::set<std::string> consumed;

    std::optional<std::string> take(const std::string& key) {
        auto it = record.find(key);
        if (it == record.end()) {
            return std::nullopt;
        }
        consumed.insert(key);
        return it->second;
    }

    bool fully_consumed(bool allow_attrs) {
        for (const auto& [key, value] : record) {
            if (consumed.count(key) > 0) {
                continue;
            }
            if (allow_attrs && key.starts_with(kAttrPrefix) && key.size() > kAttrPrefix.size()) {
                continue;
            }
            return false;
        }
        return true;
    }
};

Result<Tick, CredError> parse_tick(const std::optional<std::string>& text,
                                   std::string_view field) {
    if (!text.has_value()) {
        return malformed("missing " + std::string(field));
    }
    auto value = wire::parse_u64(*text);
    if (!value.ok()) {
        return malformed("bad " + std::string(field));
    }
    return value.take();
}

Result<LoaLevel, CredError> parse_loa_field(const std::optional<std::string>& text) {
    if (!text.has_value()) {
        return malformed("missing loa");
    }
    auto loa = trust::parse_loa(*text);
    if (!loa.has_value()) {
        return malformed("unknown loa '" + *text + "'");
    }
    return *loa;
}

wire::Record assertion_record(const Assertion& assertion) {
    wire::Record record;
    record["audience"] = assertion.audience;
    record["expires_at"] = wire::format_u64(assertion.expires_at);
    record["issued_at"] = wire::format_u64(assertion.issued_at);
    record["issuer"] = assertion.issuer;
    record["loa"] = trust::to_string(assertion.achieved_loa);
    record["request_id"] = assertion.request_id;
    record["subject"] = assertion.subject;
    if (!assertion.via.empty()) {
        record["via"] = assertion.via;
    }
    for (const auto& [name, value] : assertion.attributes) {
        record[std::string(kAttrPrefix) + name] = value;
    }
    return record;
}

wire::Record claims_record(const TokenSet& token_set) {
    wire::Record record;
    for (const auto& [name, value] : token_set.id_claims) {
        record[name] = value;
    }
    return record;
}

std::string ticket_content(const Ticket& ticket) {
    wire::Record record;
    record["auth_time"] = wire::format_u64(ticket.auth_time);
    record["client"] = ticket.client_principal;
    record["expires_at"] = wire::format_u64(ticket.expires_at);
    record["service"] = ticket.service_principal;
    record["session_key"] = wire::hex_encode(ticket.session_key);
    return wire::serialize(record);
}

Result<Ticket, KrbError> open_ticket(const crypto::SecretKey& key, const Bytes& sealed) {
    auto plain = crypto::unseal(key, sealed);
    if (!plain.has_value()) {
        return KrbError{KrbError::Code::BadTicket, "ticket does not unseal"};
    }
    auto record = wire::parse(*plain);
    if (!record.ok()) {
        return KrbError{KrbError::Code::BadTicket, "ticket content malformed"};
    }
    Ticket ticket;
    ticket.sealed_blob = sealed;
    auto get = [&](const char* field) -> const std::string* {
        auto it = record.value().find(field);
        return it == record.value().end() ? nullptr : &it->second;
    };
    const std::string* auth_time = get("auth_time");
    const std::string* client = get("client");
    const std::string* expires = get("expires_at");
    const std::string* service = get("service");
    const std::string* session_key = get("session_key");
    if (auth_time == nullptr || client == nullptr || expires == nullptr || service == nullptr ||
        session_key == nullptr || record.value().size() != 5) {
        return KrbError{KrbError::Code::BadTicket, "ticket content malformed"};
    }
    auto auth_time_v = wire::parse_u64(*auth_time);
    auto expires_v = wire::parse_u64(*expires);
    auto key_bytes = wire::hex_decode(*session_key);
    if (!auth_time_v.ok() || !expires_v.ok() || !key_bytes.ok()) {
        return KrbError{KrbError::Code::BadTicket, "ticket content malformed"};
    }
    ticket.auth_time = auth_time_v.take();
    ticket.expires_at = expires_v.take();
    ticket.client_principal = *client;
    ticket.service_principal = *service;
    ticket.session_key = key_bytes.take();
    return ticket;
}

Ticket seal_ticket(std::string_view client, std::string_view service, Bytes session_key,
                   Tick auth_time, Tick expires_at, const crypto::SecretKey& service_key,
                   DeterministicRng& rng) {
    Ticket ticket;
    ticket.client_principal = std::string(client);
    ticket.service_principal = std::string(service);
    ticket.session_key = std::move(session_key);
    ticket.auth_time = auth_time;
    ticket.expires_at = expires_at;
    ticket.sealed_blob = crypto::seal(service_key, ticket_content(ticket), rng);
    return ticket;
}

std::string client_part_content(const ClientTicketView& view) {
    wire::Record record;
    record["auth_time"] = wire::format_u64(view.auth_time);
    record["expires_at"] = wire::format_u64(view.expires_at);
    record["service"] = view.service_principal;
    record["session_key"] = wire::hex_encode(view.session_key);
    return wire::serialize(record);
}

} // namespace

const char* to_string(CredError::Code code) {
    switch (code) {
    case CredError::Code::Malformed: return "Malformed";
    case CredError::Code::BadSignature: return "BadSignature";
    case CredError::Code::WrongAudience: return "WrongAudience";
    case CredError::Code::Expired: return "Expired";
    case CredError::Code::NotYetValid: return "NotYetValid";
    case CredError::Code::Replayed: return "Replayed";
    case CredError::Code::UnknownCode: return "UnknownCode";
    case CredError::Code::CodeAlreadyUsed: return "CodeAlreadyUsed";
    case CredError::Code::WrongClient: return "WrongClient";
    case CredError::Code::InvalidInput: return "InvalidInput";
    case CredError::Code::UnsupportedTarget: return "UnsupportedTarget";
    }
    return "?";
}

const char* to_string(KrbError::Code code) {
    switch (code) {
    case KrbError::Code::UnknownPrincipal: return "UnknownPrincipal";
    case KrbError::Code::BadProof: return "BadProof";
    case KrbError::Code::BadTicket: return "BadTicket";
    case KrbError::Code::Expired: return "Expired";
    case KrbError::Code::UnknownService: return "UnknownService";
    case KrbError::Code::StaleAuthenticator: return "StaleAuthenticator";
    case KrbError::Code::Replayed: return "Replayed";
    }
    return "?";
}

// --------------------------------------------------------------------------
// Assertions

std::string assertion_to_wire(const Assertion& assertion) {
    return wire::attach_signature(wire::serialize(assertion_record(assertion)),
                                  assertion.signature);
}

Result<Assertion, CredError> assertion_from_wire(std::string_view blob) {
    auto split = wire::split_signed(blob);
    if (!split.ok()) {
        return malformed(split.error().message);
    }
    auto record = wire::parse(split.value().body);
    if (!record.ok()) {
        return malformed(record.error().message);
    }
    RecordReader reader{record.value(), {}};

    Assertion assertion;
    assertion.signature = split.value().signature;

    auto audience = reader.take("audience");
    auto issuer = reader.take("issuer");
    auto subject = reader.take("subject");
    auto request_id = reader.take("request_id");
    if (!audience || !issuer || !subject || !request_id) {
        return malformed("missing assertion field");
    }
    assertion.audience = *audience;
    assertion.issuer = *issuer;
    assertion.subject = *subject;
    assertion.request_id = *request_id;
    assertion.via = reader.take("via").value_or("");

    auto issued_at = parse_tick(reader.take("issued_at"), "issued_at");
    if (!issued_at.ok()) {
        return issued_at.error();
    }
    assertion.issued_at = issued_at.take();
    auto expires_at = parse_tick(reader.take("expires_at"), "expires_at");
    if (!expires_at.ok()) {
        return expires_at.error();
    }
    assertion.expires_at = expires_at.take();

    auto loa = parse_loa_field(reader.take("loa"));
    if (!loa.ok()) {
        return loa.error();
    }
    assertion.achieved_loa = loa.take();

    if (!reader.fully_consumed(/*allow_attrs=*/true)) {
        return malformed("unexpected assertion field");
    }
    assertion.attributes = attributes_from_record(record.value());
    return assertion;
}

Assertion issue_assertion(const crypto::SigningKey& idp_key, std::string_view issuer,
                          const AuthnRequest& request, std::string_view subject,
                          std::map<std::string, std::string> attributes, LoaLevel achieved_loa,
                          Tick now, Tick lifetime) {
    Assertion assertion;
    assertion.issuer = std::string(issuer);
    assertion.subject = std::string(subject);
    assertion.audience = request.sp;
    assertion.attributes = std::move(attributes);
    assertion.achieved_loa = achieved_loa;
    assertion.issued_at = now;
    assertion.expires_at = now + lifetime;
    assertion.request_id = request.request_id;
    assertion.signature = crypto::sign(idp_key, wire::serialize(assertion_record(assertion)));
    return assertion;
}

Result<ValidatedSubject, CredError> validate_assertion(const Assertion& assertion,
                                                       std::string_view expected_audience,
                                                       const Bytes& issuer_key, Tick now,
                                                       std::set<std::string>* seen_request_ids) {
    if (!crypto::verify(issuer_key, wire::serialize(assertion_record(assertion)),
                        assertion.signature)) {
        return CredError{CredError::Code::BadSignature, "assertion signature rejected"};
    }
    if (assertion.audience != expected_audience) {
        return CredError{CredError::Code::WrongAudience,
                         "assertion addressed to '" + assertion.audience + "'"};
    }
    if (now < assertion.issued_at) {
        return CredError{CredError::Code::NotYetValid, "assertion not yet valid"};
    }
    if (now > assertion.expires_at) {
        return CredError{CredError::Code::Expired, "assertion expired"};
    }
    if (seen_request_ids != nullptr) {
        if (seen_request_ids->count(assertion.request_id) > 0) {
            return CredError{CredError::Code::Replayed,
                             "request_id '" + assertion.request_id + "' already consumed"};
        }
        seen_request_ids->insert(assertion.request_id);
    }
    return ValidatedSubject{assertion.subject, assertion.attributes, assertion.achieved_loa};
}

// --------------------------------------------------------------------------
// Tokens

std::string id_token_to_wire(const TokenSet& token_set) {
    return wire::attach_signature(wire::serialize(claims_record(token_set)),
                                  token_set.id_signature);
}

Result<TokenSet, CredError> id_token_from_wire(std::string_view blob) {
    auto split = wire::split_signed(blob);
    if (!split.ok()) {
        return malformed(split.error().message);
    }
    auto record = wire::parse(split.value().body);
    if (!record.ok()) {
        return malformed(record.error().message);
    }
    RecordReader reader{record.value(), {}};
    for (const char* field : {"aud", "iss", "sub", "loa", "iat", "exp"}) {
        if (!reader.take(field).has_value()) {
            return malformed("missing claim '" + std::string(field) + "'");
        }
    }
    reader.take("via");
    if (!reader.fully_consumed(/*allow_attrs=*/true)) {
        return malformed("unexpected claim");
    }
    TokenSet token_set;
    token_set.id_claims = record.take();
    token_set.id_signature = split.value().signature;
    return token_set;
}

std::string issue_auth_code(OidcAuthority& authority, const AuthnRequest& request,
                            std::string_view subject,
                            std::map<std::string, std::string> attributes, LoaLevel achieved_loa,
                            DeterministicRng& rng) {
    std::string code = rng.opaque_id("c-");
    authority.codes[code] = CodeRecord{request.sp, std::string(subject), request.request_id,
                                       std::move(attributes), achieved_loa, /*used=*/false};
    return code;
}

Result<TokenSet, CredError> exchange_code(OidcAuthority& authority, std::string_view code,
                                          std::string_view presenting_sp, Tick now,
                                          DeterministicRng& rng) {
    auto it = authority.codes.find(std::string(code));
    if (it == authority.codes.end()) {
        return CredError{CredError::Code::UnknownCode, "auth code not issued here"};
    }
    CodeRecord& bound = it->second;
    if (bound.used) {
        return CredError{CredError::Code::CodeAlreadyUsed, "auth code already exchanged"};
    }
    if (bound.sp != presenting_sp) {
        return CredError{CredError::Code::WrongClient,
                         "auth code bound to '" + bound.sp + "'"};
    }
    bound.used = true;

    TokenSet token_set;
    token_set.auth_code = std::string(code);
    token_set.access_token = rng.opaque_id("at-");
    token_set.id_claims["aud"] = bound.sp;
    token_set.id_claims["iss"] = authority.issuer;
    token_set.id_claims["sub"] = bound.subject;
    token_set.id_claims["loa"] = trust::to_string(bound.achieved_loa);
    token_set.id_claims["iat"] = wire::format_u64(now);
    token_set.id_claims["exp"] = wire::format_u64(now + authority.token_lifetime);
    for (const auto& [name, value] : bound.attributes) {
        token_set.id_claims[std::string(kAttrPrefix) + name] = value;
    }
    token_set.id_signature =
        crypto::sign(authority.key, wire::serialize(claims_record(token_set)));
    return token_set;
}

Result<ValidatedSubject, CredError> validate_id_token(const TokenSet& token_set,
                                                      std::string_view expected_audience,
                                                      const Bytes& issuer_key, Tick now) {
    if (!crypto::verify(issuer_key, wire::serialize(claims_record(token_set)),
                        token_set.id_signature)) {
        return CredError{CredError::Code::BadSignature, "id token signature rejected"};
    }
    auto claim = [&](const char* name) -> const std::string* {
        auto it = token_set.id_claims.find(name);
        return it == token_set.id_claims.end() ? nullptr : &it->second;
    };
    const std::string* aud = claim("aud");
    const std::string* sub = claim("sub");
    const std::string* loa = claim("loa");
    const std::string* iat = claim("iat");
    const std::string* exp = claim("exp");
    if (aud == nullptr || sub == nullptr || loa == nullptr || iat == nullptr ||
        exp == nullptr || claim("iss") == nullptr) {
        return malformed("missing mandatory claim");
    }
    if (*aud != expected_audience) {
        return CredError{CredError::Code::WrongAudience, "id token addressed to '" + *aud + "'"};
    }
    auto iat_v = wire::parse_u64(*iat);
    auto exp_v = wire::parse_u64(*exp);
    auto loa_v = trust::parse_loa(*loa);
    if (!iat_v.ok() || !exp_v.ok() || !loa_v.has_value()) {
        return malformed("bad claim encoding");
    }
    if (now < iat_v.value()) {
        return CredError{CredError::Code::NotYetValid, "id token not yet valid"};
    }
    if (now > exp_v.value()) {
        return CredError{CredError::Code::Expired, "id token expired"};
    }
    ValidatedSubject out;
    out.subject = *sub;
    out.achieved_loa = *loa_v;
    for (const auto& [key, value] : token_set.id_claims) {
        if (key.starts_with(kAttrPrefix)) {
            out.attributes.emplace(key.substr(kAttrPrefix.size()), value);
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Tickets

crypto::SecretKey principal_key(std::string_view realm, std::string_view principal,
                                std::string_view password) {
    std::string input;
    input += realm;
    input.push_back('\x00');
    input += principal;
    input.push_back('\x00');
    input += password;
    return crypto::hash32("krb-principal-key", input);
}

Bytes make_preauth(const crypto::SecretKey& client_key, std::string_view principal, Tick now,
                   DeterministicRng& rng) {
    wire::Record record;
    record["principal"] = std::string(principal);
    record["ts"] = wire::format_u64(now);
    return crypto::seal(client_key, wire::serialize(record), rng);
}

Result<AsReply, KrbError> as_exchange(const KdcState& kdc, std::string_view client_principal,
                                      const Bytes& preauth, Tick now, DeterministicRng& rng) {
    auto principal = kdc.principals.find(std::string(client_principal));
    if (principal == kdc.principals.end()) {
        return KrbError{KrbError::Code::UnknownPrincipal,
                        "principal '" + std::string(client_principal) + "' not registered"};
    }
    auto plain = crypto::unseal(principal->second, preauth);
    if (!plain.has_value()) {
        return KrbError{KrbError::Code::BadProof, "pre-authentication does not unseal"};
    }
    auto record = wire::parse(*plain);
    if (!record.ok()) {
        return KrbError{KrbError::Code::BadProof, "pre-authentication malformed"};
    }
    auto principal_it = record.value().find("principal");
    auto ts_it = record.value().find("ts");
    if (principal_it == record.value().end() || ts_it == record.value().end() ||
        principal_it->second != client_principal) {
        return KrbError{KrbError::Code::BadProof, "pre-authentication mismatch"};
    }
    auto ts = wire::parse_u64(ts_it->second);
    if (!ts.ok()) {
        return KrbError{KrbError::Code::BadProof, "pre-authentication malformed"};
    }
    Tick delta = now > ts.value() ? now - ts.value() : ts.value() - now;
    if (delta > kdc.config.skew) {
        return KrbError{KrbError::Code::BadProof, "pre-authentication timestamp outside skew"};
    }

    AsReply reply;
    Bytes session_key = rng.next_bytes(crypto::kSecretKeySize);
    reply.tgt = seal_ticket(client_principal, kTgsPrincipal, session_key, now,
                            now + kdc.config.tgt_lifetime, kdc.tgs_key, rng);
    ClientTicketView view{std::string(kTgsPrincipal), session_key, now,
                          now + kdc.config.tgt_lifetime};
    reply.client_part = crypto::seal(principal->second, client_part_content(view), rng);
    return reply;
}

Result<ClientTicketView, KrbError> open_client_part(const crypto::SecretKey& key,
                                                    const Bytes& client_part) {
    auto plain = crypto::unseal(key, client_part);
    if (!plain.has_value()) {
        return KrbError{KrbError::Code::BadTicket, "client part does not unseal"};
    }
    auto record = wire::parse(*plain);
    if (!record.ok()) {
        return KrbError{KrbError::Code::BadTicket, "client part malformed"};
    }
    ClientTicketView view;
    auto service = record.value().find("service");
    auto session_key = record.value().find("session_key");
    auto auth_time = record.value().find("auth_time");
    auto expires = record.value().find("expires_at");
    if (service == record.value().end() || session_key == record.value().end() ||
        auth_time == record.value().end() || expires == record.value().end()) {
        return KrbError{KrbError::Code::BadTicket, "client part malformed"};
    }
    auto key_bytes = wire::hex_decode(session_key->second);
    auto auth_time_v = wire::parse_u64(auth_time->second);
    auto expires_v = wire::parse_u64(expires->second);
    if (!key_bytes.ok() || !auth_time_v.ok() || !expires_v.ok()) {
        return KrbError{KrbError::Code::BadTicket, "client part malformed"};
    }
    view.service_principal = service->second;
    view.session_key = key_bytes.take();
    view.auth_time = auth_time_v.take();
    view.expires_at = expires_v.take();
    return view;
}

Result<TgsReply, KrbError> tgs_exchange(const KdcState& kdc, const Bytes& tgt_sealed,
                                        std::string_view service_principal, Tick now,
                                        DeterministicRng& rng) {
    auto tgt = open_ticket(kdc.tgs_key, tgt_sealed);
    if (!tgt.ok()) {
        return tgt.error();
    }
    if (tgt.value().service_principal != kTgsPrincipal) {
        return KrbError{KrbError::Code::BadTicket, "not a ticket-granting ticket"};
    }
    if (now > tgt.value().expires_at) {
        return KrbError{KrbError::Code::Expired, "ticket-granting ticket expired"};
    }
    auto service = kdc.principals.find(std::string(service_principal));
    if (service == kdc.principals.end()) {
        return KrbError{KrbError::Code::UnknownService,
                        "service '" + std::string(service_principal) + "' not registered"};
    }

    TgsReply reply;
    Bytes session_key = rng.next_bytes(crypto::kSecretKeySize);
    Tick expires_at = std::min(tgt.value().expires_at, now + kdc.config.service_lifetime);
    reply.service_ticket = seal_ticket(tgt.value().client_principal, service_principal,
                                       session_key, now, expires_at, service->second, rng);
    ClientTicketView view{std::string(service_principal), session_key, now, expires_at};
    reply.client_part = crypto::seal(tgt.value().session_key, client_part_content(view), rng);
    return reply;
}

Bytes make_authenticator(const Bytes& session_key, std::string_view client_principal, Tick now,
                         std::string_view nonce, DeterministicRng& rng) {
    wire::Record record;
    record["client"] = std::string(client_principal);
    record["nonce"] = std::string(nonce);
    record["ts"] = wire::format_u64(now);
    return crypto::seal(session_key, wire::serialize(record), rng);
}

Result<ApResult, KrbError> ap_exchange(ServiceState& service, const Bytes& ticket_sealed,
                                       const Bytes& authenticator, Tick now,
                                       DeterministicRng& rng) {
    auto ticket = open_ticket(service.key, ticket_sealed);
    if (!ticket.ok()) {
        return ticket.error();
    }
    if (ticket.value().service_principal != service.principal) {
        return KrbError{KrbError::Code::BadTicket, "ticket for another service"};
    }
    if (now > ticket.value().expires_at) {
        return KrbError{KrbError::Code::Expired, "service ticket expired"};
    }

    auto plain = crypto::unseal(ticket.value().session_key, authenticator);
    if (!plain.has_value()) {
        return KrbError{KrbError::Code::BadTicket, "authenticator does not unseal"};
    }
    auto record = wire::parse(*plain);
    if (!record.ok()) {
        return KrbError{KrbError::Code::BadTicket, "authenticator malformed"};
    }
    auto client = record.value().find("client");
    auto nonce = record.value().find("nonce");
    auto ts_field = record.value().find("ts");
    if (client == record.value().end() || nonce == record.value().end() ||
        ts_field == record.value().end() || client->second != ticket.value().client_principal) {
        return KrbError{KrbError::Code::BadTicket, "authenticator mismatch"};
    }
    auto ts = wire::parse_u64(ts_field->second);
    if (!ts.ok()) {
        return KrbError{KrbError::Code::BadTicket, "authenticator malformed"};
    }
    // Replay is checked before freshness so a resent authenticator is
    // reported as Replayed even once it has also gone stale.
    std::string replay_key =
        client->second + "\x1f" + ts_field->second + "\x1f" + nonce->second;
    if (service.seen_authenticators.count(replay_key) > 0) {
        return KrbError{KrbError::Code::Replayed, "authenticator replayed"};
    }
    Tick delta = now > ts.value() ? now - ts.value() : ts.value() - now;
    if (delta > service.skew) {
        return KrbError{KrbError::Code::StaleAuthenticator,
                        "authenticator outside skew window"};
    }
    service.seen_authenticators.insert(replay_key);

    wire::Record proof;
    proof["nonce"] = nonce->second;
    proof["ts"] = ts_field->second;
    ApResult result;
    result.mutual_proof = crypto::seal(ticket.value().session_key, wire::serialize(proof), rng);
    result.client_principal = ticket.value().client_principal;
    result.session_key = ticket.value().session_key;
    return result;
}

bool verify_mutual_proof(const Bytes& session_key, const Bytes& mutual_proof,
                         std::string_view expected_nonce) {
    auto plain = crypto::unseal(session_key, mutual_proof);
    if (!plain.has_value()) {
        return false;
    }
    auto record = wire::parse(*plain);
    if (!record.ok()) {
        return false;
    }
    auto nonce = record.value().find("nonce");
    return nonce != record.value().end() && nonce->second == expected_nonce;
}

// --------------------------------------------------------------------------
// Translation

std::string credential_subject(const Credential& credential) {
    if (const auto* assertion = std::get_if<Assertion>(&credential)) {
        return assertion->subject;
    }
    const auto& claims = std::get<TokenSet>(credential).id_claims;
    auto it = claims.find("sub");
    return it == claims.end() ? std::string() : it->second;
}

std::map<std::string, std::string> credential_attributes(const Credential& credential) {
    if (const auto* assertion = std::get_if<Assertion>(&credential)) {
        return assertion->attributes;
    }
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : std::get<TokenSet>(credential).id_claims) {
        if (key.starts_with(kAttrPrefix)) {
            out.emplace(key.substr(kAttrPrefix.size()), value);
        }
    }
    return out;
}

LoaLevel credential_loa(const Credential& credential) {
    if (const auto* assertion = std::get_if<Assertion>(&credential)) {
        return assertion->achieved_loa;
    }
    const auto& claims = std::get<TokenSet>(credential).id_claims;
    auto it = claims.find("loa");
    if (it == claims.end()) {
        return LoaLevel::None;
    }
    return trust::parse_loa(it->second).value_or(LoaLevel::None);
}

Tick credential_expiry(const Credential& credential) {
    if (const auto* assertion = std::get_if<Assertion>(&credential)) {
        return assertion->expires_at;
    }
    const auto& claims = std::get<TokenSet>(credential).id_claims;
    auto it = claims.find("exp");
    if (it == claims.end()) {
        return 0;
    }
    auto value = wire::parse_u64(it->second);
    return value.ok() ? value.value() : 0;
}

Result<Credential, CredError> translate_credential(const Credential& input,
                                                   const TranslationProxy& proxy,
                                                   const Bytes& origin_issuer_key,
                                                   Protocol target,
                                                   std::string_view target_audience, Tick now,
                                                   DeterministicRng& rng) {
    if (target == Protocol::Ticket) {
        return CredError{CredError::Code::UnsupportedTarget,
                         "tickets are not a translation target"};
    }

    std::string origin_issuer;
    Result<ValidatedSubject, CredError> validated = [&]() -> Result<ValidatedSubject, CredError> {
        if (const auto* assertion = std::get_if<Assertion>(&input)) {
            origin_issuer = assertion->issuer;
            return validate_assertion(*assertion, proxy.entity_id, origin_issuer_key, now,
                                      /*seen_request_ids=*/nullptr);
        }
        const auto& token_set = std::get<TokenSet>(input);
        auto iss = token_set.id_claims.find("iss");
        origin_issuer = iss == token_set.id_claims.end() ? std::string() : iss->second;
        return validate_id_token(token_set, proxy.entity_id, origin_issuer_key, now);
    }();
    if (!validated.ok()) {
        return CredError{CredError::Code::InvalidInput,
                         std::string(to_string(validated.error().code)) + ": " +
                             validated.error().detail};
    }

    const ValidatedSubject& subject = validated.value();
    Tick expires_at = std::min(credential_expiry(input), now + proxy.default_lifetime);

    if (target == Protocol::Assertion) {
        AuthnRequest request;
        request.request_id = rng.opaque_id("r-");
        request.sp = std::string(target_audience);
        Assertion out = issue_assertion(proxy.key, proxy.entity_id, request, subject.subject,
                                        subject.attributes, subject.achieved_loa, now,
                                        expires_at - now);
        out.via = origin_issuer;
        out.signature = crypto::sign(proxy.key, wire::serialize(assertion_record(out)));
        return Credential{std::move(out)};
    }

    TokenSet out;
    out.access_token = rng.opaque_id("at-");
    out.id_claims["aud"] = std::string(target_audience);
    out.id_claims["iss"] = proxy.entity_id;
    out.id_claims["sub"] = subject.subject;
    out.id_claims["loa"] = trust::to_string(subject.achieved_loa);
    out.id_claims["iat"] = wire::format_u64(now);
    out.id_claims["exp"] = wire::format_u64(expires_at);
    out.id_claims["via"] = origin_issuer;
    for (const auto& [name, value] : subject.attributes) {
        out.id_claims[std::string(kAttrPrefix) + name] = value;
    }
    out.id_signature = crypto::sign(proxy.key, wire::serialize(claims_record(out)));
    return Credential{std::move(out)};
}

} // namespace fedweaver::proto
