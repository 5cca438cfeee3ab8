/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_PROTOCOL_ENGINES_HPP
#define FEDWEAVER_PROTOCOL_ENGINES_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>

#include "fedweaver/common.hpp"
#include "fedweaver/crypto.hpp"
#include "fedweaver/rng.hpp"
#include "fedweaver/trust_fabric.hpp"

namespace fedweaver::proto {

using trust::LoaLevel;
using trust::Protocol;

struct CredError {
    enum class Code {
        Malformed,
        BadSignature,
        WrongAudience,
        Expired,
        NotYetValid,
        Replayed,
        UnknownCode,
        CodeAlreadyUsed,
        WrongClient,
        InvalidInput,
        UnsupportedTarget,
    };
    Code code;
    std::string detail;
};
const char* to_string(CredError::Code code);

struct AuthnRequest {
    std::string request_id;
    std::string sp;
    LoaLevel requested_loa = LoaLevel::None;
    std::string return_address;
};

// ---------------------------------------------------------------------------
// Assertion family (SAML-like signed statements)

struct Assertion {
    std::string issuer;
    std::string subject;
    std::string audience;
    std::map<std::string, std::string> attributes;
    LoaLevel achieved_loa = LoaLevel::None;
    Tick issued_at = 0;
    Tick expires_at = 0;
    std::string request_id;
    std::string via; // informational origin issuer after translation
    Bytes signature; // over the canonical record of all fields above
};

std::string assertion_to_wire(const Assertion& assertion);
Result<Assertion, CredError> assertion_from_wire(std::string_view blob);

Assertion issue_assertion(const crypto::SigningKey& idp_key, std::string_view issuer,
                          const AuthnRequest& request, std::string_view subject,
                          std::map<std::string, std::string> attributes, LoaLevel achieved_loa,
                          Tick now, Tick lifetime);

struct ValidatedSubject {
    std::string subject;
    std::map<std::string, std::string> attributes;
    LoaLevel achieved_loa = LoaLevel::None;
};

/// Checks signature, audience, validity window and (when a seen-set is
/// supplied) request_id replay; accepted ids are added to the set.
/// Pass nullptr to validate statelessly, e.g. at a translation proxy.
Result<ValidatedSubject, CredError> validate_assertion(const Assertion& assertion,
                                                       std::string_view expected_audience,
                                                       const Bytes& issuer_key, Tick now,
                                                       std::set<std::string>* seen_request_ids);

// ---------------------------------------------------------------------------
// Token family (OAuth/OIDC-like code-for-token flow)

/// Auth code plus bearer tokens. Only id_claims are signed; the access
/// token stays opaque and is never introspected in this testbed.
struct TokenSet {
    std::string auth_code;
    std::string access_token;
    std::map<std::string, std::string> id_claims; // iss/sub/aud/loa/iat/exp (+attr.*, via)
    Bytes id_signature;
};

std::string id_token_to_wire(const TokenSet& token_set);
Result<TokenSet, CredError> id_token_from_wire(std::string_view blob);

struct CodeRecord {
    std::string sp;
    std::string subject;
    std::string request_id;
    std::map<std::string, std::string> attributes;
    LoaLevel achieved_loa = LoaLevel::None;
    bool used = false;
};

/// IDP-side token issuance state. Owned by the enclosing entity state
/// machine; engines mutate it only through these calls.
struct OidcAuthority {
    std::string issuer;
    crypto::SigningKey key;
    Tick token_lifetime = 300;
    std::map<std::string, CodeRecord> codes;
};

/// One-time code bound to (sp, subject, request_id); released attribute
/// values and the session LoA are captured at issuance time.
std::string issue_auth_code(OidcAuthority& authority, const AuthnRequest& request,
                            std::string_view subject,
                            std::map<std::string, std::string> attributes, LoaLevel achieved_loa,
                            DeterministicRng& rng);

Result<TokenSet, CredError> exchange_code(OidcAuthority& authority, std::string_view code,
                                          std::string_view presenting_sp, Tick now,
                                          DeterministicRng& rng);

/// Bearer-token validation: signature, audience, window. No replay set by
/// design; expiry is the only lifetime bound on id tokens.
Result<ValidatedSubject, CredError> validate_id_token(const TokenSet& token_set,
                                                      std::string_view expected_audience,
                                                      const Bytes& issuer_key, Tick now);

// ---------------------------------------------------------------------------
// Ticket family (Kerberos-like sealed tickets)

struct KrbError {
    enum class Code {
        UnknownPrincipal,
        BadProof,
        BadTicket,
        Expired,
        UnknownService,
        StaleAuthenticator,
        Replayed,
    };
    Code code;
    std::string detail;
};
const char* to_string(KrbError::Code code);

struct Ticket {
    std::string client_principal;
    std::string service_principal;
    Bytes session_key;
    Tick auth_time = 0;
    Tick expires_at = 0;
    Bytes sealed_blob; // ticket content under the target service's key
};

inline constexpr std::string_view kTgsPrincipal = "krbtgt";

struct KdcConfig {
    Tick tgt_lifetime = 500;
    Tick service_lifetime = 300;
    Tick skew = 2;
};

/// KDC = KAS + TGS over one principal database of long-term symmetric
/// keys. Client keys derive from passwords, service keys from seeds.
struct KdcState {
    std::string realm;
    crypto::SecretKey tgs_key;
    std::map<std::string, crypto::SecretKey> principals;
    KdcConfig config;
};

crypto::SecretKey principal_key(std::string_view realm, std::string_view principal,
                                std::string_view password);

/// Pre-authentication proof: a timestamp sealed under the client's
/// long-term key.
Bytes make_preauth(const crypto::SecretKey& client_key, std::string_view principal, Tick now,
                   DeterministicRng& rng);

struct AsReply {
    Ticket tgt;       // sealed under the TGS key
    Bytes client_part; // session key + window, sealed under the client key
};

Result<AsReply, KrbError> as_exchange(const KdcState& kdc, std::string_view client_principal,
                                      const Bytes& preauth, Tick now, DeterministicRng& rng);

struct ClientTicketView {
    std::string service_principal;
    Bytes session_key;
    Tick auth_time = 0;
    Tick expires_at = 0;
};

Result<ClientTicketView, KrbError> open_client_part(const crypto::SecretKey& key,
                                                    const Bytes& client_part);

struct TgsReply {
    Ticket service_ticket; // sealed under the service's key
    Bytes client_part;     // sealed under the TGT session key
};

/// Service-ticket expiry is min(tgt.expires_at, now + service lifetime).
Result<TgsReply, KrbError> tgs_exchange(const KdcState& kdc, const Bytes& tgt_sealed,
                                        std::string_view service_principal, Tick now,
                                        DeterministicRng& rng);

struct ServiceState {
    std::string principal;
    crypto::SecretKey key;
    Tick skew = 2;
    std::set<std::string> seen_authenticators;
};

Bytes make_authenticator(const Bytes& session_key, std::string_view client_principal, Tick now,
                         std::string_view nonce, DeterministicRng& rng);

struct ApResult {
    Bytes mutual_proof; // sealed under the session key; echoes the nonce
    std::string client_principal;
    Bytes session_key;
};

Result<ApResult, KrbError> ap_exchange(ServiceState& service, const Bytes& ticket_sealed,
                                       const Bytes& authenticator, Tick now,
                                       DeterministicRng& rng);

/// Client half of mutual authentication.
bool verify_mutual_proof(const Bytes& session_key, const Bytes& mutual_proof,
                         std::string_view expected_nonce);

// ---------------------------------------------------------------------------
// Cross-protocol translation

using Credential = std::variant<Assertion, TokenSet>;

struct TranslationProxy {
    std::string entity_id;
    crypto::SigningKey key;
    Tick default_lifetime = 300;
};

/// Re-issues a validated credential under the proxy's key for a new
/// audience and protocol family. Subject, attributes and achieved LoA are
/// preserved verbatim; expiry never extends past the input's. Ticket is
/// not a translation target.
Result<Credential, CredError> translate_credential(const Credential& input,
                                                   const TranslationProxy& proxy,
                                                   const Bytes& origin_issuer_key,
                                                   Protocol target,
                                                   std::string_view target_audience, Tick now,
                                                   DeterministicRng& rng);

// Field accessors shared by both translatable families.
std::string credential_subject(const Credential& credential);
std::map<std::string, std::string> credential_attributes(const Credential& credential);
LoaLevel credential_loa(const Credential& credential);
Tick credential_expiry(const Credential& credential);

} // namespace fedweaver::proto

#endif
