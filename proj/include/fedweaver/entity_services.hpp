/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_ENTITY_SERVICES_HPP
#define FEDWEAVER_ENTITY_SERVICES_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedweaver/common.hpp"
#include "fedweaver/crypto.hpp"
#include "fedweaver/protocol_engines.hpp"
#include "fedweaver/rng.hpp"
#include "fedweaver/simnet.hpp"
#include "fedweaver/trust_fabric.hpp"
#include "fedweaver/wire.hpp"

namespace fedweaver::entity {

using trust::LoaLevel;
using trust::Protocol;

// ---------------------------------------------------------------------------
// IDP core: user store, sessions, attribute release

/// One account at an IDP. The credential is never stored in clear: only a
/// per-user random salt and the salted hash.
struct DigitalIdentity {
    std::string username;
    Bytes salt;
    Bytes credential_hash;
    std::optional<std::string> second_factor_secret;
    std::map<std::string, std::string> attributes;
    std::set<std::string> roles;
    std::string home_domain;
};

DigitalIdentity make_identity(std::string_view username, std::string_view password,
                              std::optional<std::string> second_factor_secret,
                              std::map<std::string, std::string> attributes,
                              std::set<std::string> roles, std::string_view home_domain,
                              DeterministicRng& rng);

/// One-time code for the configured shared secret, valid for the tick it
/// was generated in (plus one tick of transit).
std::string totp_code(std::string_view secret, Tick now);

struct SsoSession {
    std::string session_id;
    std::string subject;
    Tick authn_time = 0;
    int factors_used = 0;
    LoaLevel achieved_loa = LoaLevel::None;
    Tick expires_at = 0;
};

struct AuthError {
    enum class Code {
        UnknownUser,
        BadCredential,
        BadSecondFactor,
        NoSession,
        Expired,
        StepUpRequired,
        DeniedDecision,
    };
    Code code;
    std::string detail;
};
const char* to_string(AuthError::Code code);

/// Mutable IDP state shared by the protocol-facing entity machine.
/// password_checks counts every salted-hash comparison; the SSO tests
/// assert on it.
struct IdpCore {
    std::string entity_id;
    LoaLevel entity_loa = LoaLevel::Basic;
    Tick session_lifetime = 600;
    std::map<std::string, DigitalIdentity> users;
    std::map<std::string, SsoSession> sessions;
    std::map<std::string, std::string> used_factor_codes; // username -> last accepted code
    std::uint64_t password_checks = 0;
};

/// Password (one factor, LoA capped at Basic) or password + one-time code
/// (two factors, LoA = the entity's registered level).
Result<SsoSession, AuthError> authenticate(IdpCore& idp, std::string_view username,
                                           std::string_view password,
                                           const std::optional<std::string>& second_factor_code,
                                           Tick now, DeterministicRng& rng);

/// Session reuse without touching credentials. StepUpRequired when alive
/// but below the required LoA.
Result<SsoSession, AuthError> resolve_sso(IdpCore& idp, std::string_view session_id,
                                          LoaLevel required_loa, Tick now);

/// identity.attributes restricted to the decision's released names;
/// missing attributes are omitted silently.
Result<std::map<std::string, std::string>, AuthError>
release_attributes(const DigitalIdentity& identity, const trust::TrustDecision& decision);

// ---------------------------------------------------------------------------
// Discovery

struct DiscoveryError {
    enum class Code { UnknownDomain, AmbiguousDomain };
    Code code;
    std::string detail;
};

/// Resolves "user@domain" or a bare domain to the unique member claiming
/// that domain.
Result<std::string, DiscoveryError> discover_idp(std::string_view hint,
                                                 const trust::FederationMetadata& metadata);

// ---------------------------------------------------------------------------
// Shared wiring for entities that consume federation metadata

/// One federation membership: trust anchor, last verified metadata and the
/// locally configured agreements.
struct TrustView {
    std::string federation_id;
    Bytes ttp_verify_key;
    std::optional<trust::FederationMetadata> metadata;
    std::vector<trust::Agreement> agreements;
};

struct PermissionMap {
    std::map<std::string, std::set<std::string>> role_permissions;

    /// Union of permissions over the given roles; unknown roles grant
    /// nothing.
    std::set<std::string> permissions_for(const std::set<std::string>& roles) const;
};

struct ResourceSpec {
    std::string path;
    LoaLevel required_loa = LoaLevel::None;
    std::string required_permission;
};

// Message types on the wire between entities (payload field "type").
namespace msg {
inline constexpr std::string_view kAuthnCredentials = "authn_credentials";
inline constexpr std::string_view kAuthnResult = "authn_result";
inline constexpr std::string_view kAuthnError = "authn_error";
inline constexpr std::string_view kAccessRequest = "access_request";
inline constexpr std::string_view kAccessResult = "access_result";
inline constexpr std::string_view kAuthnRedirect = "authn_redirect";
inline constexpr std::string_view kAuthnRequest = "authn_request";
inline constexpr std::string_view kAuthnFailed = "authn_failed";
inline constexpr std::string_view kAuthnAbort = "authn_abort";
inline constexpr std::string_view kAssertionIssued = "assertion_issued";
inline constexpr std::string_view kAssertionSubmit = "assertion_submit";
inline constexpr std::string_view kCodeIssued = "code_issued";
inline constexpr std::string_view kCodeForward = "code_forward";
inline constexpr std::string_view kTokenRequest = "token_request";
inline constexpr std::string_view kTokenResponse = "token_response";
inline constexpr std::string_view kTokenReady = "token_ready";
inline constexpr std::string_view kTokenSubmit = "token_submit";
inline constexpr std::string_view kMetadataPublish = "metadata_publish";
inline constexpr std::string_view kAsRequest = "as_request";
inline constexpr std::string_view kAsReply = "as_reply";
inline constexpr std::string_view kTgsRequest = "tgs_request";
inline constexpr std::string_view kTgsReply = "tgs_reply";
inline constexpr std::string_view kApRequest = "ap_request";
inline constexpr std::string_view kApReply = "ap_reply";
inline constexpr std::string_view kKrbError = "krb_error";
} // namespace msg

// ---------------------------------------------------------------------------
// IDP entity machine

class IdpEntity : public simnet::Entity {
public:
    IdpCore core;
    crypto::SigningKey signing_key;
    proto::OidcAuthority oidc;
    Tick assertion_lifetime = 300;
    std::vector<TrustView> views;
    std::optional<std::string> single_sp; // AD FS-style: serves exactly one SP

    const std::string& id() const override { return core.entity_id; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;

private:
    void handle_credentials(const wire::Record& message, const simnet::Envelope& envelope,
                            simnet::NetContext& ctx);
    void handle_authn_request(const wire::Record& message, const simnet::Envelope& envelope,
                              simnet::NetContext& ctx);
    void handle_token_request(const wire::Record& message, const simnet::Envelope& envelope,
                              simnet::NetContext& ctx);
};

// ---------------------------------------------------------------------------
// SP entity machine

class SpEntity : public simnet::Entity {
public:
    std::string entity_id;
    Protocol protocol = Protocol::Assertion; // family this SP speaks
    std::map<std::string, ResourceSpec> resources;
    PermissionMap permissions;
    std::vector<TrustView> views;
    std::set<std::string> seen_request_ids;

    const std::string& id() const override { return entity_id; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;

private:
    struct PendingAccess {
        std::string ua;
        std::string user_hint;
        std::string resource;
        std::string idp;
        std::size_t view_index = 0;
        std::string correlation_id;
    };
    std::map<std::string, PendingAccess> pending_; // request_id -> state

    void handle_access_request(const wire::Record& message, const simnet::Envelope& envelope,
                               simnet::NetContext& ctx);
    void deny(const PendingAccess& pending, std::string_view reason, simnet::NetContext& ctx);
    void authorize(const PendingAccess& pending, const proto::ValidatedSubject& subject,
                   simnet::NetContext& ctx);
    const Bytes* issuer_key_for(const PendingAccess& pending) const;
};

// ---------------------------------------------------------------------------
// Translation proxy entity machine

/// Per-SP translation gateway in front of one upstream IDP. Serving more
/// than one SP is exactly what the proxy adds over a single-SP IDP.
struct ProxyConfig {
    std::string upstream_idp;
    Protocol upstream_protocol = Protocol::Assertion;
    std::set<std::string> served_sps;
    std::map<std::string, Protocol> translation_targets; // sp -> family toward it
};

class ProxyEntity : public simnet::Entity {
public:
    std::string entity_id;
    crypto::SigningKey signing_key;
    Tick default_lifetime = 300;
    ProxyConfig config;
    std::vector<TrustView> views;

    const std::string& id() const override { return entity_id; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;

private:
    struct PendingForward {
        std::string original_request_id;
        std::string sp;
        std::string ua;
        std::string correlation_id;
    };
    std::map<std::string, PendingForward> pending_; // proxy-side request_id -> state

    const Bytes* upstream_key() const;
};

// ---------------------------------------------------------------------------
// User agent machine (the simulated browser/client)

class UserAgentEntity : public simnet::Entity {
public:
    UserAgentEntity(std::string user, std::string password,
                    std::optional<std::string> second_factor_secret);

    const std::string& id() const override { return ua_id_; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;

    /// Scripted actions; each runs to an outcome once the network drains.
    void begin_login(simnet::Network& net, std::string_view idp, bool with_second_factor);
    void begin_access(simnet::Network& net, std::string_view sp, std::string_view resource);

    bool outcome_ready() const { return outcome_ready_; }
    const std::string& last_outcome() const { return last_outcome_; }
    const std::string& user() const { return user_; }

private:
    struct Redirect {
        std::string requester; // entity the credential goes back to
        std::string idp;
        std::string audience;
        std::string protocol;
        std::string requested_loa;
        std::string correlation_id;
    };
    struct Relogin {
        std::string idp;
        std::string request_id; // resume this authn once logged in
        bool with_second_factor = false;
    };
    struct Access {
        std::string sp;
        std::string resource;
        bool retried_step_up = false;
        bool retried_expired = false;
    };

    std::string ua_id_;
    std::string user_; // user@domain
    std::string username_;
    std::string password_;
    std::optional<std::string> second_factor_secret_;
    std::map<std::string, std::string> sessions_;   // idp -> session id
    std::map<std::string, bool> last_second_factor_; // idp -> used 2nd factor
    std::map<std::string, Redirect> redirects_;     // request_id -> hop info
    std::optional<Relogin> relogin_;
    std::optional<Access> access_;
    bool scripted_login_pending_ = false;
    bool outcome_ready_ = false;
    std::string last_outcome_;

    void send_login(simnet::NetContext& ctx, const std::string& idp, bool with_second_factor,
                    std::string_view correlation_id);
    void resume_authn(const std::string& request_id, simnet::NetContext& ctx);
    void finish(std::string outcome);
};

// ---------------------------------------------------------------------------
// Kerberos entity machines (centralized I&AM; no federation involved)

class KdcEntity : public simnet::Entity {
public:
    std::string entity_id;
    proto::KdcState state;

    const std::string& id() const override { return entity_id; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;
};

class KrbServiceEntity : public simnet::Entity {
public:
    std::string entity_id;
    proto::ServiceState state;

    const std::string& id() const override { return entity_id; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;
};

class KrbClientEntity : public simnet::Entity {
public:
    KrbClientEntity(std::string principal, std::string realm, std::string password,
                    std::string kdc_entity);

    const std::string& id() const override { return client_id_; }
    void on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) override;

    void begin_kinit(simnet::Network& net);
    /// replay re-sends the previous AP request bytes untouched.
    void begin_service_access(simnet::Network& net, std::string_view service_entity,
                              std::string_view service_principal, bool replay);

    bool outcome_ready() const { return outcome_ready_; }
    const std::string& last_outcome() const { return last_outcome_; }

private:
    std::string client_id_;
    std::string principal_;
    std::string realm_;
    crypto::SecretKey key_;
    std::string kdc_entity_;

    std::optional<proto::ClientTicketView> tgt_view_;
    Bytes tgt_sealed_;

    struct PendingAccess {
        std::string service_entity;
        std::string service_principal;
        std::string nonce;
        Bytes session_key;
        std::string correlation_id;
    };
    std::optional<PendingAccess> pending_;
    struct LastApRequest {
        std::string service_entity;
        std::string nonce;
        Bytes session_key;
        std::string payload;
    };
    std::optional<LastApRequest> last_ap_;

    bool outcome_ready_ = false;
    std::string last_outcome_;

    void finish(std::string outcome);
};

// Shared helpers for entity implementations and the harness.
std::string hint_domain(std::string_view hint);
std::string make_payload(const wire::Record& record);
const trust::EntityDescriptor* find_descriptor(const std::vector<TrustView>& views,
                                               std::string_view entity_id,
                                               std::size_t* view_index = nullptr);

} // namespace fedweaver::entity

#endif
