/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/trust_fabric.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "fedweaver/wire.hpp"

namespace fedweaver::trust {

namespace {

std::string join_sorted(const std::set<std::string>& values) {
    std::string out;
    for (const std::string& value : values) {
        if (!out.empty()) {
            out.push_back(',');
        }
        out += value;
    }
    return out;
}

std::set<std::string> split_csv(std::string_view text) {
    std::set<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string_view item =
            text.substr(pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
        if (!item.empty()) {
            out.insert(std::string(item));
        }
        if (comma == std::string_view::npos) {
            break;
        }
        pos = comma + 1;
    }
    return out;
}

std::string member_prefix(std::size_t index) {
    std::ostringstream out;
    out << "member." << std::setw(4) << std::setfill('0') << index << '.';
    return out.str();
}

// Canonical record of the signable metadata content (everything except
// the signature itself).
wire::Record metadata_record(const FederationMetadata& metadata) {
    wire::Record record;
    record["federation_id"] = metadata.federation_id;
    record["serial"] = wire::format_u64(metadata.serial);
    record["valid_from"] = wire::format_u64(metadata.valid_from);
    record["valid_until"] = wire::format_u64(metadata.valid_until);
    record["member_count"] = wire::format_u64(metadata.members.size());
    for (std::size_t i = 0; i < metadata.members.size(); ++i) {
        const EntityDescriptor& member = metadata.members[i];
        const std::string prefix = member_prefix(i);
        record[prefix + "entity_id"] = member.entity_id;
        record[prefix + "display_name"] = member.display_name;
        record[prefix + "loa"] = to_string(member.loa);
        record[prefix + "key"] = wire::hex_encode(member.verification_key);
        record[prefix + "domains"] = join_sorted(member.domains);
        std::set<std::string> role_names;
        if (member.has_role(Role::Idp)) {
            role_names.insert("idp");
        }
        if (member.has_role(Role::Sp)) {
            role_names.insert("sp");
        }
        record[prefix + "roles"] = join_sorted(role_names);
        for (const auto& [protocol, address] : member.protocol_endpoints) {
            record[prefix + "endpoint." + to_string(protocol)] = address;
        }
    }
    return record;
}

Result<EntityDescriptor, VerifyError> member_from_record(const wire::Record& record,
                                                         const std::string& prefix,
                                                         std::set<std::string>& consumed) {
    EntityDescriptor member;
    auto want = [&](const std::string& field) -> Result<std::string, VerifyError> {
        auto it = record.find(prefix + field);
        if (it == record.end()) {
            return VerifyError{VerifyErrorCode::Malformed, "missing " + prefix + field};
        }
        consumed.insert(it->first);
        return it->second;
    };

    auto entity_id = want("entity_id");
    if (!entity_id.ok()) {
        return entity_id.error();
    }
    member.entity_id = entity_id.take();

    auto display = want("display_name");
    if (!display.ok()) {
        return display.error();
    }
    member.display_name = display.take();

    auto loa = want("loa");
    if (!loa.ok()) {
        return loa.error();
    }
    auto parsed_loa = parse_loa(loa.value());
    if (!parsed_loa.has_value()) {
        return VerifyError{VerifyErrorCode::Malformed, "unknown loa '" + loa.value() + "'"};
    }
    member.loa = *parsed_loa;

    auto key = want("key");
    if (!key.ok()) {
        return key.error();
    }
    auto key_bytes = wire::hex_decode(key.value());
    if (!key_bytes.ok()) {
        return VerifyError{VerifyErrorCode::Malformed, "bad member key encoding"};
    }
    member.verification_key = key_bytes.take();

    auto domains = want("domains");
    if (!domains.ok()) {
        return domains.error();
    }
    member.domains = split_csv(domains.value());

    auto roles = want("roles");
    if (!roles.ok()) {
        return roles.error();
    }
    for (const std::string& role : split_csv(roles.value())) {
        if (role == "idp") {
            member.roles.insert(Role::Idp);
        } else if (role == "sp") {
            member.roles.insert(Role::Sp);
        } else {
            return VerifyError{VerifyErrorCode::Malformed, "unknown role '" + role + "'"};
        }
    }

    for (Protocol protocol : {Protocol::Assertion, Protocol::Token, Protocol::Ticket}) {
        auto it = record.find(prefix + "endpoint." + to_string(protocol));
        if (it != record.end()) {
            consumed.insert(it->first);
            member.protocol_endpoints[protocol] = it->second;
        }
    }
    return member;
}

} // namespace

int required_factor_count(LoaLevel level) {
    switch (level) {
    case LoaLevel::None:
    case LoaLevel::Low:
    case LoaLevel::Basic:
        return 1;
    case LoaLevel::Advanced:
    case LoaLevel::High:
        return 2;
    }
    return 1;
}

const char* to_string(LoaLevel level) {
    switch (level) {
    case LoaLevel::None: return "None";
    case LoaLevel::Low: return "Low";
    case LoaLevel::Basic: return "Basic";
    case LoaLevel::Advanced: return "Advanced";
    case LoaLevel::High: return "High";
    }
    return "?";
}

std::optional<LoaLevel> parse_loa(std::string_view text) {
    for (LoaLevel level : {LoaLevel::None, LoaLevel::Low, LoaLevel::Basic, LoaLevel::Advanced,
                           LoaLevel::High}) {
        if (text == to_string(level)) {
            return level;
        }
    }
    return std::nullopt;
}

const char* to_string(Protocol protocol) {
    switch (protocol) {
    case Protocol::Assertion: return "assertion";
    case Protocol::Token: return "token";
    case Protocol::Ticket: return "ticket";
    }
    return "?";
}

std::optional<Protocol> parse_protocol(std::string_view text) {
    for (Protocol protocol : {Protocol::Assertion, Protocol::Token, Protocol::Ticket}) {
        if (text == to_string(protocol)) {
            return protocol;
        }
    }
    return std::nullopt;
}

const char* to_string(AgreementKind kind) {
    switch (kind) {
    case AgreementKind::Contract: return "contract";
    case AgreementKind::Whitelist: return "whitelist";
    case AgreementKind::Blacklist: return "blacklist";
    }
    return "?";
}

std::optional<AgreementKind> parse_agreement_kind(std::string_view text) {
    for (AgreementKind kind : {AgreementKind::Contract, AgreementKind::Whitelist,
                               AgreementKind::Blacklist}) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    return std::nullopt;
}

const char* to_string(TrustReason reason) {
    switch (reason) {
    case TrustReason::Ok: return "Ok";
    case TrustReason::NoAgreement: return "NoAgreement";
    case TrustReason::Blacklisted: return "Blacklisted";
    case TrustReason::LoaInsufficient: return "LoaInsufficient";
    case TrustReason::MetadataExpired: return "MetadataExpired";
    case TrustReason::UnknownEntity: return "UnknownEntity";
    }
    return "?";
}

const char* to_string(VerifyErrorCode code) {
    switch (code) {
    case VerifyErrorCode::BadSignature: return "BadSignature";
    case VerifyErrorCode::Expired: return "Expired";
    case VerifyErrorCode::Malformed: return "Malformed";
    }
    return "?";
}

const EntityDescriptor* FederationMetadata::find(std::string_view entity_id) const {
    for (const EntityDescriptor& member : members) {
        if (member.entity_id == entity_id) {
            return &member;
        }
    }
    return nullptr;
}

Result<Unit, TrustError> register_entity(Registry& registry, EntityDescriptor descriptor) {
    if (descriptor.entity_id.empty()) {
        return TrustError{TrustError::Code::InvalidDescriptor, "empty entity_id"};
    }
    if (descriptor.roles.empty()) {
        return TrustError{TrustError::Code::InvalidDescriptor,
                          "descriptor for '" + descriptor.entity_id + "' declares no role"};
    }
    if (descriptor.protocol_endpoints.empty()) {
        return TrustError{TrustError::Code::InvalidDescriptor,
                          "descriptor for '" + descriptor.entity_id + "' declares no endpoint"};
    }
    registry.entities[descriptor.entity_id] = std::move(descriptor);
    return Unit{};
}

Result<FederationMetadata, TrustError> aggregate_metadata(Registry& registry, Tick now,
                                                          Tick validity_span) {
    if (registry.entities.empty()) {
        return TrustError{TrustError::Code::EmptyRegistry, "registry has no members"};
    }
    FederationMetadata metadata;
    metadata.federation_id = registry.federation_id;
    metadata.serial = ++registry.last_serial;
    metadata.valid_from = now;
    metadata.valid_until = now + validity_span;
    for (const auto& [id, descriptor] : registry.entities) {
        metadata.members.push_back(descriptor); // std::map keeps entity_id order
    }
    metadata.signature =
        crypto::sign(registry.ttp_key, wire::serialize(metadata_record(metadata)));
    return metadata;
}

std::string metadata_to_wire(const FederationMetadata& metadata) {
    return wire::attach_signature(wire::serialize(metadata_record(metadata)),
                                  metadata.signature);
}

Result<FederationMetadata, VerifyError> verify_metadata(std::string_view blob,
                                                        const Bytes& ttp_verify_key, Tick now) {
    auto split = wire::split_signed(blob);
    if (!split.ok()) {
        return VerifyError{VerifyErrorCode::Malformed, split.error().message};
    }
    auto record_result = wire::parse(split.value().body);
    if (!record_result.ok()) {
        return VerifyError{VerifyErrorCode::Malformed, record_result.error().message};
    }
    const wire::Record& record = record_result.value();

    if (!crypto::verify(ttp_verify_key, split.value().body, split.value().signature)) {
        return VerifyError{VerifyErrorCode::BadSignature, "metadata signature rejected"};
    }

    FederationMetadata metadata;
    metadata.signature = split.value().signature;
    std::set<std::string> consumed;
    auto want = [&](const char* field) -> Result<std::string, VerifyError> {
        auto it = record.find(field);
        if (it == record.end()) {
            return VerifyError{VerifyErrorCode::Malformed, std::string("missing ") + field};
        }
        consumed.insert(it->first);
        return it->second;
    };

    auto federation_id = want("federation_id");
    if (!federation_id.ok()) {
        return federation_id.error();
    }
    metadata.federation_id = federation_id.take();

    for (auto [field, target] : {std::pair<const char*, Tick*>{"serial", &metadata.serial},
                                 {"valid_from", &metadata.valid_from},
                                 {"valid_until", &metadata.valid_until}}) {
        auto text = want(field);
        if (!text.ok()) {
            return text.error();
        }
        auto value = wire::parse_u64(text.value());
        if (!value.ok()) {
            return VerifyError{VerifyErrorCode::Malformed, std::string("bad ") + field};
        }
        *target = value.take();
    }

    auto count_text = want("member_count");
    if (!count_text.ok()) {
        return count_text.error();
    }
    auto count = wire::parse_u64(count_text.value());
    if (!count.ok()) {
        return VerifyError{VerifyErrorCode::Malformed, "bad member_count"};
    }

    for (std::uint64_t i = 0; i < count.value(); ++i) {
        auto member = member_from_record(record, member_prefix(i), consumed);
        if (!member.ok()) {
            return member.error();
        }
        metadata.members.push_back(member.take());
    }

    for (const auto& [key, value] : record) {
        if (consumed.find(key) == consumed.end()) {
            return VerifyError{VerifyErrorCode::Malformed, "unexpected field '" + key + "'"};
        }
    }

    for (std::size_t i = 1; i < metadata.members.size(); ++i) {
        if (!(metadata.members[i - 1].entity_id < metadata.members[i].entity_id)) {
            return VerifyError{VerifyErrorCode::Malformed, "members not sorted by entity_id"};
        }
    }
    if (metadata.valid_from >= metadata.valid_until) {
        return VerifyError{VerifyErrorCode::Malformed, "empty validity window"};
    }
    if (now < metadata.valid_from || now > metadata.valid_until) {
        return VerifyError{VerifyErrorCode::Expired, "metadata not valid at tick " +
                                                         wire::format_u64(now)};
    }
    return metadata;
}

TrustDecision evaluate_trust(std::string_view idp, std::string_view sp,
                             const FederationMetadata& metadata,
                             std::span<const Agreement> agreements, LoaLevel requested_loa,
                             std::optional<Tick> now) {
    TrustDecision decision;
    if (now.has_value() && (*now < metadata.valid_from || *now > metadata.valid_until)) {
        decision.reason = TrustReason::MetadataExpired;
        return decision;
    }
    const EntityDescriptor* idp_member = metadata.find(idp);
    const EntityDescriptor* sp_member = metadata.find(sp);
    if (idp_member == nullptr || sp_member == nullptr) {
        decision.reason = TrustReason::UnknownEntity;
        return decision;
    }

    std::vector<const Agreement*> matching;
    for (const Agreement& agreement : agreements) {
        if (!agreement.matches(idp, sp)) {
            continue;
        }
        if (agreement.kind == AgreementKind::Blacklist) {
            decision.reason = TrustReason::Blacklisted;
            return decision;
        }
        matching.push_back(&agreement);
    }
    if (matching.empty()) {
        decision.reason = TrustReason::NoAgreement;
        return decision;
    }

    bool satisfied = false;
    for (const Agreement* agreement : matching) {
        LoaLevel needed = std::max(agreement->required_loa, requested_loa);
        if (idp_member->loa >= needed) {
            satisfied = true;
            decision.effective_attributes.insert(agreement->released_attributes.begin(),
                                                 agreement->released_attributes.end());
        }
    }
    if (!satisfied) {
        decision.reason = TrustReason::LoaInsufficient;
        decision.effective_attributes.clear();
        return decision;
    }
    decision.allowed = true;
    decision.reason = TrustReason::Ok;
    return decision;
}

Result<std::vector<CatalogueEntry>, TrustError>
service_catalogue(const FederationMetadata& metadata, std::span<const Agreement> agreements,
                  std::string_view for_entity) {
    if (metadata.find(for_entity) == nullptr) {
        return TrustError{TrustError::Code::UnknownEntity,
                          "'" + std::string(for_entity) + "' is not a federation member"};
    }
    std::vector<CatalogueEntry> catalogue;
    for (const EntityDescriptor& member : metadata.members) {
        if (!member.has_role(Role::Sp) || member.entity_id == for_entity) {
            continue;
        }
        TrustDecision decision =
            evaluate_trust(for_entity, member.entity_id, metadata, agreements, LoaLevel::None);
        if (decision.reason == TrustReason::NoAgreement ||
            decision.reason == TrustReason::Blacklisted) {
            continue;
        }
        CatalogueEntry entry;
        entry.entity_id = member.entity_id;
        entry.display_name = member.display_name;
        for (const auto& [protocol, address] : member.protocol_endpoints) {
            entry.protocols.push_back(protocol);
        }
        catalogue.push_back(std::move(entry));
    }
    return catalogue;
}

} // namespace fedweaver::trust
