/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_TRUST_FABRIC_HPP
#define FEDWEAVER_TRUST_FABRIC_HPP

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedweaver/common.hpp"
#include "fedweaver/crypto.hpp"

namespace fedweaver::trust {

/// Ordered level-of-assurance scale. Advanced and High require a second
/// authentication factor.
enum class LoaLevel { None = 0, Low = 1, Basic = 2, Advanced = 3, High = 4 };

int required_factor_count(LoaLevel level);
const char* to_string(LoaLevel level);
std::optional<LoaLevel> parse_loa(std::string_view text);

enum class Role { Idp, Sp };

enum class Protocol { Assertion, Token, Ticket };
const char* to_string(Protocol protocol);
std::optional<Protocol> parse_protocol(std::string_view text);

/// One member record of the aggregated federation metadata.
struct EntityDescriptor {
    std::string entity_id;
    std::set<Role> roles;
    std::map<Protocol, std::string> protocol_endpoints;
    Bytes verification_key;
    LoaLevel loa = LoaLevel::None;
    std::set<std::string> domains;
    std::string display_name;

    bool has_role(Role role) const { return roles.count(role) > 0; }
};

struct FederationMetadata {
    std::string federation_id;
    std::uint64_t serial = 0;
    Tick valid_from = 0;
    Tick valid_until = 0;
    std::vector<EntityDescriptor> members; // sorted by entity_id
    Bytes signature;

    const EntityDescriptor* find(std::string_view entity_id) const;
};

enum class AgreementKind { Contract, Whitelist, Blacklist };
const char* to_string(AgreementKind kind);
std::optional<AgreementKind> parse_agreement_kind(std::string_view text);

/// Collaboration agreement between two entities. Blacklist entries ignore
/// required_loa and released_attributes. QoS parameters are recorded and
/// echoed, never enforced.
struct Agreement {
    std::string party_a;
    std::string party_b;
    AgreementKind kind = AgreementKind::Contract;
    LoaLevel required_loa = LoaLevel::None;
    std::set<std::string> released_attributes;
    std::map<std::string, std::string> qos;

    bool matches(std::string_view x, std::string_view y) const {
        return (party_a == x && party_b == y) || (party_a == y && party_b == x);
    }
};

enum class TrustReason {
    Ok,
    NoAgreement,
    Blacklisted,
    LoaInsufficient,
    MetadataExpired,
    UnknownEntity,
};
const char* to_string(TrustReason reason);

struct TrustDecision {
    bool allowed = false;
    TrustReason reason = TrustReason::NoAgreement;
    std::set<std::string> effective_attributes;
};

struct TrustError {
    enum class Code { InvalidDescriptor, EmptyRegistry, UnknownEntity };
    Code code;
    std::string detail;
};

/// TTP-side member registry. Single-writer; aggregation bumps the serial.
struct Registry {
    std::string federation_id;
    crypto::SigningKey ttp_key;
    std::uint64_t last_serial = 0;
    std::map<std::string, EntityDescriptor> entities;
};

Result<Unit, TrustError> register_entity(Registry& registry, EntityDescriptor descriptor);

Result<FederationMetadata, TrustError> aggregate_metadata(Registry& registry, Tick now,
                                                          Tick validity_span);

/// Canonical key-sorted record text plus a detached base64 signature line;
/// byte-stable given the same key and registry.
std::string metadata_to_wire(const FederationMetadata& metadata);

enum class VerifyErrorCode { BadSignature, Expired, Malformed };
struct VerifyError {
    VerifyErrorCode code;
    std::string detail;
};
const char* to_string(VerifyErrorCode code);

Result<FederationMetadata, VerifyError> verify_metadata(std::string_view blob,
                                                        const Bytes& ttp_verify_key, Tick now);

/// Deny-by-default trust decision for an (idp, sp) pair. Blacklists beat
/// whitelists; the IDP's registered LoA must reach both the agreement's
/// required_loa and the caller's requested_loa. `now` is optional because
/// verify_metadata already gates freshness at parse time.
TrustDecision evaluate_trust(std::string_view idp, std::string_view sp,
                             const FederationMetadata& metadata,
                             std::span<const Agreement> agreements, LoaLevel requested_loa,
                             std::optional<Tick> now = std::nullopt);

struct CatalogueEntry {
    std::string entity_id;
    std::string display_name;
    std::vector<Protocol> protocols;
};

/// Trusted-service catalogue for one member: every SP the entity has a
/// live (non-blacklisted) agreement with, sorted by entity_id.
Result<std::vector<CatalogueEntry>, TrustError>
service_catalogue(const FederationMetadata& metadata, std::span<const Agreement> agreements,
                  std::string_view for_entity);

} // namespace fedweaver::trust

#endif
