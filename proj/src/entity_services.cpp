/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/entity_services.hpp"

#include <algorithm>

namespace fedweaver::entity {

namespace {

constexpr std::string_view kRolesAttribute = "roles";

Bytes password_hash(const Bytes& salt, std::string_view password) {
    std::string input(salt.begin(), salt.end());
    input += password;
    return crypto::hash32("idp-password", input);
}

std::string join_csv(const std::set<std::string>& values) {
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

std::string field(const wire::Record& record, std::string_view key) {
    auto it = record.find(std::string(key));
    return it == record.end() ? std::string() : it->second;
}

std::string local_part(std::string_view user) {
    std::size_t at = user.find('@');
    return std::string(at == std::string_view::npos ? user : user.substr(0, at));
}

// Accept codes generated up to two ticks ago to absorb transit latency;
// each code is single-use per user.
bool second_factor_matches(const DigitalIdentity& identity, std::string_view code, Tick now) {
    if (!identity.second_factor_secret.has_value()) {
        return false;
    }
    for (Tick back = 0; back <= 2 && back <= now; ++back) {
        if (totp_code(*identity.second_factor_secret, now - back) == code) {
            return true;
        }
    }
    return false;
}

// Shared metadata_publish handling: verify against the view's trust
// anchor and store on success.
void handle_metadata_publish(std::vector<TrustView>& views, const wire::Record& message,
                             simnet::NetContext& ctx, std::string_view correlation_id) {
    std::string federation = field(message, "federation");
    for (TrustView& view : views) {
        if (view.federation_id != federation) {
            continue;
        }
        auto verified =
            trust::verify_metadata(field(message, "blob"), view.ttp_verify_key, ctx.now());
        if (!verified.ok()) {
            ctx.audit("metadata", correlation_id, "error",
                      std::string(to_string(verified.error().code)) + ": " +
                          verified.error().detail);
            return;
        }
        std::string serial = wire::format_u64(verified.value().serial);
        view.metadata = verified.take();
        ctx.audit("metadata", correlation_id, "ok",
                  "federation:" + federation + " serial:" + serial);
        return;
    }
    ctx.audit("metadata", correlation_id, "error", "not a member of '" + federation + "'");
}

} // namespace

const char* to_string(AuthError::Code code) {
    switch (code) {
    case AuthError::Code::UnknownUser: return "UnknownUser";
    case AuthError::Code::BadCredential: return "BadCredential";
    case AuthError::Code::BadSecondFactor: return "BadSecondFactor";
    case AuthError::Code::NoSession: return "NoSession";
    case AuthError::Code::Expired: return "Expired";
    case AuthError::Code::StepUpRequired: return "StepUpRequired";
    case AuthError::Code::DeniedDecision: return "DeniedDecision";
    }
    return "?";
}

DigitalIdentity make_identity(std::string_view username, std::string_view password,
                              std::optional<std::string> second_factor_secret,
                              std::map<std::string, std::string> attributes,
                              std::set<std::string> roles, std::string_view home_domain,
                              DeterministicRng& rng) {
    DigitalIdentity identity;
    identity.username = std::string(username);
    identity.salt = rng.next_bytes(16);
    identity.credential_hash = password_hash(identity.salt, password);
    identity.second_factor_secret = std::move(second_factor_secret);
    identity.attributes = std::move(attributes);
    identity.roles = std::move(roles);
    identity.home_domain = std::string(home_domain);
    return identity;
}

std::string totp_code(std::string_view secret, Tick now) {
    std::string input(secret);
    input.push_back('\x00');
    for (int i = 0; i < 8; ++i) {
        input.push_back(static_cast<char>(now >> (8 * i)));
    }
    Bytes digest = crypto::hash32("totp", input);
    return wire::hex_encode(Bytes(digest.begin(), digest.begin() + 3));
}

Result<SsoSession, AuthError> authenticate(IdpCore& idp, std::string_view username,
                                           std::string_view password,
                                           const std::optional<std::string>& second_factor_code,
                                           Tick now, DeterministicRng& rng) {
    auto it = idp.users.find(std::string(username));
    if (it == idp.users.end()) {
        return AuthError{AuthError::Code::UnknownUser,
                         "no identity '" + std::string(username) + "'"};
    }
    DigitalIdentity& identity = it->second;

    ++idp.password_checks;
    if (password_hash(identity.salt, password) != identity.credential_hash) {
        return AuthError{AuthError::Code::BadCredential, "password mismatch"};
    }

    int factors = 1;
    if (second_factor_code.has_value()) {
        if (!second_factor_matches(identity, *second_factor_code, now) ||
            idp.used_factor_codes[identity.username] == *second_factor_code) {
            return AuthError{AuthError::Code::BadSecondFactor, "second factor rejected"};
        }
        idp.used_factor_codes[identity.username] = *second_factor_code;
        factors = 2;
    }

    SsoSession session;
    session.session_id = rng.opaque_id("s-");
    session.subject = identity.username;
    session.authn_time = now;
    session.factors_used = factors;
    session.achieved_loa = factors >= 2 ? idp.entity_loa
                                        : std::min(idp.entity_loa, LoaLevel::Basic);
    session.expires_at = now + idp.session_lifetime;
    idp.sessions[session.session_id] = session;
    return session;
}

Result<SsoSession, AuthError> resolve_sso(IdpCore& idp, std::string_view session_id,
                                          LoaLevel required_loa, Tick now) {
    auto it = idp.sessions.find(std::string(session_id));
    if (session_id.empty() || it == idp.sessions.end()) {
        return AuthError{AuthError::Code::NoSession, "no live session"};
    }
    const SsoSession& session = it->second;
    if (now > session.expires_at) {
        return AuthError{AuthError::Code::Expired, "session expired"};
    }
    if (session.achieved_loa < required_loa) {
        return AuthError{AuthError::Code::StepUpRequired,
                         std::string("session at ") + trust::to_string(session.achieved_loa) +
                             ", resource requires " + trust::to_string(required_loa)};
    }
    return session;
}

Result<std::map<std::string, std::string>, AuthError>
release_attributes(const DigitalIdentity& identity, const trust::TrustDecision& decision) {
    if (!decision.allowed) {
        return AuthError{AuthError::Code::DeniedDecision,
                         "attribute release against a denied decision"};
    }
    std::map<std::string, std::string> out;
    for (const std::string& name : decision.effective_attributes) {
        auto it = identity.attributes.find(name);
        if (it != identity.attributes.end()) {
            out.emplace(it->first, it->second);
        }
    }
    return out;
}

std::string hint_domain(std::string_view hint) {
    std::size_t at = hint.rfind('@');
    return std::string(at == std::string_view::npos ? hint : hint.substr(at + 1));
}

Result<std::string, DiscoveryError> discover_idp(std::string_view hint,
                                                 const trust::FederationMetadata& metadata) {
    std::string domain = hint_domain(hint);
    std::vector<const trust::EntityDescriptor*> claimants;
    for (const trust::EntityDescriptor& member : metadata.members) {
        if (member.domains.count(domain) > 0) {
            claimants.push_back(&member);
        }
    }
    if (claimants.empty()) {
        return DiscoveryError{DiscoveryError::Code::UnknownDomain,
                              "no member claims domain '" + domain + "'"};
    }
    if (claimants.size() > 1) {
        return DiscoveryError{DiscoveryError::Code::AmbiguousDomain,
                              "domain '" + domain + "' claimed by " +
                                  std::to_string(claimants.size()) + " members"};
    }
    return claimants.front()->entity_id;
}

std::set<std::string> PermissionMap::permissions_for(const std::set<std::string>& roles) const {
    std::set<std::string> out;
    for (const std::string& role : roles) {
        auto it = role_permissions.find(role);
        if (it != role_permissions.end()) {
            out.insert(it->second.begin(), it->second.end());
        }
    }
    return out;
}

std::string make_payload(const wire::Record& record) {
    return wire::serialize(record);
}

const trust::EntityDescriptor* find_descriptor(const std::vector<TrustView>& views,
                                               std::string_view entity_id,
                                               std::size_t* view_index) {
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (!views[i].metadata.has_value()) {
            continue;
        }
        const trust::EntityDescriptor* descriptor = views[i].metadata->find(entity_id);
        if (descriptor != nullptr) {
            if (view_index != nullptr) {
                *view_index = i;
            }
            return descriptor;
        }
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// IdpEntity

void IdpEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unparseable payload");
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");
    if (type == msg::kAuthnCredentials) {
        handle_credentials(message, envelope, ctx);
    } else if (type == msg::kAuthnRequest) {
        handle_authn_request(message, envelope, ctx);
    } else if (type == msg::kTokenRequest) {
        handle_token_request(message, envelope, ctx);
    } else if (type == msg::kMetadataPublish) {
        handle_metadata_publish(views, message, ctx, envelope.correlation_id);
    } else {
        ctx.audit("protocol", envelope.correlation_id, "error", "unexpected type '" + type + "'");
    }
}

void IdpEntity::handle_credentials(const wire::Record& message,
                                   const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    std::optional<std::string> factor;
    if (message.count("factor") > 0) {
        factor = field(message, "factor");
    }
    auto session =
        authenticate(core, field(message, "username"), field(message, "password"), factor,
                     ctx.now(), ctx.rng());
    wire::Record reply;
    if (!session.ok()) {
        ctx.audit("authn", envelope.correlation_id, "error",
                  std::string("user:") + field(message, "username") + " " +
                      to_string(session.error().code));
        reply["type"] = std::string(msg::kAuthnError);
        reply["error"] = to_string(session.error().code);
    } else {
        const SsoSession& live = session.value();
        ctx.audit("authn", envelope.correlation_id, "ok",
                  "user:" + live.subject + " loa:" + trust::to_string(live.achieved_loa) +
                      " factors:" + std::to_string(live.factors_used));
        reply["type"] = std::string(msg::kAuthnResult);
        reply["session"] = live.session_id;
        reply["loa"] = trust::to_string(live.achieved_loa);
        reply["factors"] = std::to_string(live.factors_used);
    }
    ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
}

void IdpEntity::handle_authn_request(const wire::Record& message,
                                     const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    const std::string request_id = field(message, "request_id");
    const std::string audience = field(message, "sp");
    const std::string requested_loa_text = field(message, "requested_loa");
    LoaLevel requested_loa = trust::parse_loa(requested_loa_text).value_or(LoaLevel::None);

    auto fail = [&](std::string_view reason, std::string_view detail) {
        ctx.audit("sso", envelope.correlation_id, "error",
                  std::string(reason) + (detail.empty() ? "" : " " + std::string(detail)));
        wire::Record reply;
        reply["type"] = std::string(msg::kAuthnFailed);
        reply["request_id"] = request_id;
        reply["reason"] = std::string(reason);
        reply["requested_loa"] = requested_loa_text;
        ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
    };

    if (single_sp.has_value() && audience != *single_sp) {
        // AD FS-style deployment: direct service is limited to the one
        // configured SP; everything else needs the proxy in front.
        fail("NotServed", "single-sp idp serves only '" + *single_sp + "'");
        return;
    }

    auto session = resolve_sso(core, field(message, "session"), requested_loa, ctx.now());
    if (!session.ok()) {
        fail(to_string(session.error().code), session.error().detail);
        return;
    }
    ctx.audit("sso", envelope.correlation_id, "ok",
              "subject:" + session.value().subject +
                  " loa:" + trust::to_string(session.value().achieved_loa));

    // Entity-level trust gate; attribute scope comes from the agreement.
    const TrustView* view = nullptr;
    for (const TrustView& candidate : views) {
        if (candidate.metadata.has_value() && candidate.metadata->find(core.entity_id) &&
            candidate.metadata->find(audience)) {
            view = &candidate;
            break;
        }
    }
    if (view == nullptr) {
        fail(trust::to_string(trust::TrustReason::UnknownEntity),
             "no shared federation with '" + audience + "'");
        return;
    }
    trust::TrustDecision decision = trust::evaluate_trust(
        core.entity_id, audience, *view->metadata, view->agreements, requested_loa, ctx.now());
    ctx.audit("trust", envelope.correlation_id, trust::to_string(decision.reason),
              "sp:" + audience);
    if (!decision.allowed) {
        fail(trust::to_string(decision.reason), "");
        return;
    }

    const DigitalIdentity& identity = core.users.at(session.value().subject);
    auto released = release_attributes(identity, decision);
    std::map<std::string, std::string> attributes =
        released.ok() ? released.take() : std::map<std::string, std::string>{};
    if (decision.effective_attributes.count(std::string(kRolesAttribute)) > 0 &&
        !identity.roles.empty()) {
        attributes[std::string(kRolesAttribute)] = join_csv(identity.roles);
    }

    proto::AuthnRequest request{request_id, audience, requested_loa, envelope.from};
    const std::string protocol = field(message, "protocol");
    wire::Record reply;
    if (protocol == trust::to_string(Protocol::Assertion)) {
        proto::Assertion assertion =
            issue_assertion(signing_key, core.entity_id, request, session.value().subject,
                            attributes, session.value().achieved_loa, ctx.now(),
                            assertion_lifetime);
        ctx.audit("issue", envelope.correlation_id, "ok",
                  "family:assertion subject:" + session.value().subject + " audience:" +
                      audience);
        reply["type"] = std::string(msg::kAssertionIssued);
        reply["request_id"] = request_id;
        reply["blob"] = proto::assertion_to_wire(assertion);
    } else if (protocol == trust::to_string(Protocol::Token)) {
        std::string code = proto::issue_auth_code(oidc, request, session.value().subject,
                                                  attributes, session.value().achieved_loa,
                                                  ctx.rng());
        ctx.audit("issue", envelope.correlation_id, "ok",
                  "family:token subject:" + session.value().subject + " audience:" + audience);
        reply["type"] = std::string(msg::kCodeIssued);
        reply["request_id"] = request_id;
        reply["code"] = code;
    } else {
        fail("UnsupportedProtocol", "protocol '" + protocol + "'");
        return;
    }
    ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
}

void IdpEntity::handle_token_request(const wire::Record& message,
                                     const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto token_set = proto::exchange_code(oidc, field(message, "code"),
                                          field(message, "client"), ctx.now(), ctx.rng());
    wire::Record reply;
    reply["request_id"] = field(message, "request_id");
    if (!token_set.ok()) {
        ctx.audit("token", envelope.correlation_id, "error",
                  to_string(token_set.error().code));
        reply["type"] = std::string(msg::kAuthnFailed);
        reply["reason"] = to_string(token_set.error().code);
    } else {
        ctx.audit("token", envelope.correlation_id, "ok",
                  "client:" + field(message, "client"));
        reply["type"] = std::string(msg::kTokenResponse);
        reply["access_token"] = token_set.value().access_token;
        reply["id_token"] = proto::id_token_to_wire(token_set.value());
    }
    ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
}

// ---------------------------------------------------------------------------
// SpEntity

void SpEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unparseable payload");
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");

    if (type == msg::kAccessRequest) {
        handle_access_request(message, envelope, ctx);
        return;
    }
    if (type == msg::kMetadataPublish) {
        handle_metadata_publish(views, message, ctx, envelope.correlation_id);
        return;
    }

    auto it = pending_.find(field(message, "request_id"));
    if (it == pending_.end()) {
        ctx.audit("protocol", envelope.correlation_id, "error",
                  "no pending request for '" + field(message, "request_id") + "'");
        return;
    }
    PendingAccess pending = it->second;
    pending_.erase(it);

    if (type == msg::kAuthnAbort || type == msg::kAuthnFailed) {
        deny(pending, field(message, "reason"), ctx);
        return;
    }
    if (type == msg::kAssertionSubmit) {
        auto assertion = proto::assertion_from_wire(field(message, "blob"));
        if (!assertion.ok()) {
            ctx.audit("validate", envelope.correlation_id, "error",
                      to_string(assertion.error().code));
            deny(pending, to_string(assertion.error().code), ctx);
            return;
        }
        const Bytes* issuer_key = issuer_key_for(pending);
        if (issuer_key == nullptr) {
            deny(pending, trust::to_string(trust::TrustReason::UnknownEntity), ctx);
            return;
        }
        auto subject = proto::validate_assertion(assertion.value(), entity_id, *issuer_key,
                                                 ctx.now(), &seen_request_ids);
        if (!subject.ok()) {
            ctx.audit("validate", envelope.correlation_id, "error",
                      to_string(subject.error().code));
            deny(pending, to_string(subject.error().code), ctx);
            return;
        }
        ctx.audit("validate", envelope.correlation_id, "ok",
                  "family:assertion subject:" + subject.value().subject);
        authorize(pending, subject.value(), ctx);
        return;
    }
    if (type == msg::kCodeForward) {
        // Re-queue; the code-for-token exchange is server to server.
        pending_.emplace(field(message, "request_id"), pending);
        wire::Record request;
        request["type"] = std::string(msg::kTokenRequest);
        request["request_id"] = field(message, "request_id");
        request["code"] = field(message, "code");
        request["client"] = entity_id;
        ctx.send(pending.idp, pending.correlation_id, make_payload(request));
        return;
    }
    if (type == msg::kTokenResponse || type == msg::kTokenSubmit) {
        auto token_set = proto::id_token_from_wire(field(message, "id_token"));
        if (!token_set.ok()) {
            ctx.audit("validate", envelope.correlation_id, "error",
                      to_string(token_set.error().code));
            deny(pending, to_string(token_set.error().code), ctx);
            return;
        }
        const Bytes* issuer_key = issuer_key_for(pending);
        if (issuer_key == nullptr) {
            deny(pending, trust::to_string(trust::TrustReason::UnknownEntity), ctx);
            return;
        }
        auto subject =
            proto::validate_id_token(token_set.value(), entity_id, *issuer_key, ctx.now());
        if (!subject.ok()) {
            ctx.audit("validate", envelope.correlation_id, "error",
                      to_string(subject.error().code));
            deny(pending, to_string(subject.error().code), ctx);
            return;
        }
        ctx.audit("validate", envelope.correlation_id, "ok",
                  "family:token subject:" + subject.value().subject);
        authorize(pending, subject.value(), ctx);
        return;
    }
    // Unknown type with a valid pending request: surface, do not grant.
    deny(pending, "ProtocolError", ctx);
}

void SpEntity::handle_access_request(const wire::Record& message,
                                     const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    PendingAccess pending;
    pending.ua = envelope.from;
    pending.user_hint = field(message, "user");
    pending.resource = field(message, "resource");
    pending.correlation_id = envelope.correlation_id;

    auto resource = resources.find(pending.resource);
    if (resource == resources.end()) {
        deny(pending, "UnknownResource", ctx);
        return;
    }

    // Discovery across this SP's federations, first match wins.
    std::optional<DiscoveryError> ambiguous;
    for (std::size_t i = 0; i < views.size() && pending.idp.empty(); ++i) {
        if (!views[i].metadata.has_value()) {
            continue;
        }
        auto discovered = discover_idp(pending.user_hint, *views[i].metadata);
        if (discovered.ok()) {
            pending.idp = discovered.take();
            pending.view_index = i;
        } else if (discovered.error().code == DiscoveryError::Code::AmbiguousDomain) {
            ambiguous = discovered.error();
        }
    }
    if (pending.idp.empty()) {
        if (ambiguous.has_value()) {
            ctx.audit("discover", envelope.correlation_id, "error", ambiguous->detail);
            deny(pending, "AmbiguousDomain", ctx);
        } else {
            ctx.audit("discover", envelope.correlation_id, "error",
                      "user:" + pending.user_hint);
            deny(pending, trust::to_string(trust::TrustReason::UnknownEntity), ctx);
        }
        return;
    }
    ctx.audit("discover", envelope.correlation_id, "ok",
              "user:" + pending.user_hint + " idp:" + pending.idp);

    const TrustView& view = views[pending.view_index];
    trust::TrustDecision decision =
        trust::evaluate_trust(pending.idp, entity_id, *view.metadata, view.agreements,
                              resource->second.required_loa, ctx.now());
    ctx.audit("trust", envelope.correlation_id, trust::to_string(decision.reason),
              "idp:" + pending.idp);
    if (!decision.allowed) {
        deny(pending, trust::to_string(decision.reason), ctx);
        return;
    }

    std::string request_id = ctx.rng().opaque_id("r-");
    pending_.emplace(request_id, pending);

    wire::Record redirect;
    redirect["type"] = std::string(msg::kAuthnRedirect);
    redirect["request_id"] = request_id;
    redirect["idp"] = pending.idp;
    redirect["requested_loa"] = trust::to_string(resource->second.required_loa);
    redirect["protocol"] = trust::to_string(protocol);
    redirect["audience"] = entity_id;
    ctx.send(pending.ua, envelope.correlation_id, make_payload(redirect));
}

const Bytes* SpEntity::issuer_key_for(const PendingAccess& pending) const {
    if (pending.view_index >= views.size() || !views[pending.view_index].metadata.has_value()) {
        return nullptr;
    }
    const trust::EntityDescriptor* descriptor =
        views[pending.view_index].metadata->find(pending.idp);
    return descriptor == nullptr ? nullptr : &descriptor->verification_key;
}

void SpEntity::authorize(const PendingAccess& pending, const proto::ValidatedSubject& subject,
                         simnet::NetContext& ctx) {
    const ResourceSpec& resource = resources.at(pending.resource);
    if (subject.achieved_loa < resource.required_loa) {
        deny(pending, trust::to_string(trust::TrustReason::LoaInsufficient), ctx);
        return;
    }
    std::set<std::string> roles;
    auto roles_attr = subject.attributes.find(std::string(kRolesAttribute));
    if (roles_attr != subject.attributes.end()) {
        roles = split_csv(roles_attr->second);
    }
    std::set<std::string> granted = permissions.permissions_for(roles);
    if (granted.count(resource.required_permission) == 0) {
        deny(pending, "NoPermission", ctx);
        return;
    }

    std::string perms = join_csv(granted);
    std::string loa = trust::to_string(subject.achieved_loa);
    ctx.audit("access", pending.correlation_id, "granted",
              "resource:" + pending.resource + " subject:" + subject.subject + " perms:" +
                  perms + " loa:" + loa);
    wire::Record reply;
    reply["type"] = std::string(msg::kAccessResult);
    reply["outcome"] = "granted";
    reply["perms"] = perms;
    reply["loa"] = loa;
    ctx.send(pending.ua, pending.correlation_id, make_payload(reply));
}

void SpEntity::deny(const PendingAccess& pending, std::string_view reason,
                    simnet::NetContext& ctx) {
    ctx.audit("access", pending.correlation_id, "denied",
              "resource:" + pending.resource + " reason:" + std::string(reason));
    wire::Record reply;
    reply["type"] = std::string(msg::kAccessResult);
    reply["outcome"] = "denied";
    reply["reason"] = std::string(reason);
    ctx.send(pending.ua, pending.correlation_id, make_payload(reply));
}

// ---------------------------------------------------------------------------
// ProxyEntity

const Bytes* ProxyEntity::upstream_key() const {
    const trust::EntityDescriptor* descriptor = find_descriptor(views, config.upstream_idp);
    return descriptor == nullptr ? nullptr : &descriptor->verification_key;
}

void ProxyEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unparseable payload");
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");

    if (type == msg::kMetadataPublish) {
        handle_metadata_publish(views, message, ctx, envelope.correlation_id);
        return;
    }

    if (type == msg::kAuthnRequest) {
        const std::string request_id = field(message, "request_id");
        const std::string sp = field(message, "sp");
        if (config.served_sps.count(sp) == 0) {
            ctx.audit("forward", envelope.correlation_id, "error",
                      "UnservedSp sp:" + sp);
            wire::Record reply;
            reply["type"] = std::string(msg::kAuthnFailed);
            reply["request_id"] = request_id;
            reply["reason"] = "UnservedSp";
            reply["requested_loa"] = field(message, "requested_loa");
            ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
            return;
        }
        std::string own_request_id = ctx.rng().opaque_id("r-");
        pending_.emplace(own_request_id, PendingForward{request_id, sp, envelope.from,
                                                        envelope.correlation_id});
        ctx.audit("forward", envelope.correlation_id, "ok",
                  "sp:" + sp + " upstream:" + config.upstream_idp);
        wire::Record redirect;
        redirect["type"] = std::string(msg::kAuthnRedirect);
        redirect["request_id"] = own_request_id;
        redirect["idp"] = config.upstream_idp;
        redirect["requested_loa"] = field(message, "requested_loa");
        redirect["protocol"] = trust::to_string(config.upstream_protocol);
        redirect["audience"] = entity_id;
        ctx.send(envelope.from, envelope.correlation_id, make_payload(redirect));
        return;
    }

    if (type == msg::kCodeForward) {
        // Upstream family is token: redeem the code ourselves.
        auto it = pending_.find(field(message, "request_id"));
        if (it == pending_.end()) {
            ctx.audit("protocol", envelope.correlation_id, "error", "no pending forward");
            return;
        }
        wire::Record request;
        request["type"] = std::string(msg::kTokenRequest);
        request["request_id"] = field(message, "request_id");
        request["code"] = field(message, "code");
        request["client"] = entity_id;
        ctx.send(config.upstream_idp, it->second.correlation_id, make_payload(request));
        return;
    }

    auto it = pending_.find(field(message, "request_id"));
    if (it == pending_.end()) {
        ctx.audit("protocol", envelope.correlation_id, "error",
                  "no pending forward for '" + field(message, "request_id") + "'");
        return;
    }
    PendingForward pending = it->second;

    auto fail_downstream = [&](std::string_view reason) {
        pending_.erase(it);
        wire::Record reply;
        reply["type"] = std::string(msg::kAuthnFailed);
        reply["request_id"] = pending.original_request_id;
        reply["reason"] = std::string(reason);
        reply["requested_loa"] = trust::to_string(LoaLevel::None);
        ctx.send(pending.ua, pending.correlation_id, make_payload(reply));
    };

    if (type == msg::kAuthnAbort || type == msg::kAuthnFailed) {
        ctx.audit("forward", envelope.correlation_id, "error",
                  "upstream failure: " + field(message, "reason"));
        fail_downstream(field(message, "reason"));
        return;
    }

    proto::Credential upstream_credential = proto::Assertion{};
    if (type == msg::kAssertionSubmit) {
        auto assertion = proto::assertion_from_wire(field(message, "blob"));
        if (!assertion.ok()) {
            ctx.audit("translate", envelope.correlation_id, "error",
                      to_string(assertion.error().code));
            fail_downstream(to_string(assertion.error().code));
            return;
        }
        upstream_credential = assertion.take();
    } else if (type == msg::kTokenResponse) {
        auto token_set = proto::id_token_from_wire(field(message, "id_token"));
        if (!token_set.ok()) {
            ctx.audit("translate", envelope.correlation_id, "error",
                      to_string(token_set.error().code));
            fail_downstream(to_string(token_set.error().code));
            return;
        }
        upstream_credential = token_set.take();
    } else {
        ctx.audit("protocol", envelope.correlation_id, "error",
                  "unexpected type '" + type + "'");
        fail_downstream("ProtocolError");
        return;
    }

    const Bytes* key = upstream_key();
    if (key == nullptr) {
        fail_downstream(trust::to_string(trust::TrustReason::UnknownEntity));
        return;
    }
    auto target = config.translation_targets.find(pending.sp);
    Protocol target_protocol =
        target == config.translation_targets.end() ? Protocol::Token : target->second;

    proto::TranslationProxy translator{entity_id, signing_key, default_lifetime};
    auto translated = proto::translate_credential(upstream_credential, translator, *key,
                                                  target_protocol, pending.sp, ctx.now(),
                                                  ctx.rng());
    if (!translated.ok()) {
        ctx.audit("translate", envelope.correlation_id, "error", translated.error().detail);
        fail_downstream(to_string(translated.error().code));
        return;
    }
    pending_.erase(it);
    ctx.audit("translate", envelope.correlation_id, "ok",
              std::string("target:") + trust::to_string(target_protocol) + " sp:" + pending.sp);

    wire::Record reply;
    if (const auto* assertion = std::get_if<proto::Assertion>(&translated.value())) {
        reply["type"] = std::string(msg::kAssertionIssued);
        reply["request_id"] = pending.original_request_id;
        reply["blob"] = proto::assertion_to_wire(*assertion);
    } else {
        const auto& token_set = std::get<proto::TokenSet>(translated.value());
        reply["type"] = std::string(msg::kTokenReady);
        reply["request_id"] = pending.original_request_id;
        reply["access_token"] = token_set.access_token;
        reply["id_token"] = proto::id_token_to_wire(token_set);
    }
    ctx.send(pending.ua, pending.correlation_id, make_payload(reply));
}

// ---------------------------------------------------------------------------
// UserAgentEntity

UserAgentEntity::UserAgentEntity(std::string user, std::string password,
                                 std::optional<std::string> second_factor_secret)
    : ua_id_("ua:" + user), user_(std::move(user)), username_(local_part(user_)),
      password_(std::move(password)), second_factor_secret_(std::move(second_factor_secret)) {}

void UserAgentEntity::begin_login(simnet::Network& net, std::string_view idp,
                                  bool with_second_factor) {
    outcome_ready_ = false;
    last_outcome_.clear();
    scripted_login_pending_ = true;
    std::string correlation_id = net.rng().opaque_id("x-");

    wire::Record login;
    login["type"] = std::string(msg::kAuthnCredentials);
    login["username"] = username_;
    login["password"] = password_;
    if (with_second_factor) {
        login["factor"] = second_factor_secret_.has_value()
                              ? totp_code(*second_factor_secret_, net.now())
                              : "000000";
    }
    auto sent = net.send(ua_id_, idp, correlation_id, make_payload(login));
    if (!sent.ok()) {
        finish("error=" + sent.error().detail);
    }
}

void UserAgentEntity::begin_access(simnet::Network& net, std::string_view sp,
                                   std::string_view resource) {
    outcome_ready_ = false;
    last_outcome_.clear();
    access_ = Access{std::string(sp), std::string(resource), false, false};
    std::string correlation_id = net.rng().opaque_id("x-");

    wire::Record request;
    request["type"] = std::string(msg::kAccessRequest);
    request["user"] = user_;
    request["resource"] = std::string(resource);
    auto sent = net.send(ua_id_, sp, correlation_id, make_payload(request));
    if (!sent.ok()) {
        finish("error=" + sent.error().detail);
    }
}

void UserAgentEntity::send_login(simnet::NetContext& ctx, const std::string& idp,
                                 bool with_second_factor, std::string_view correlation_id) {
    wire::Record login;
    login["type"] = std::string(msg::kAuthnCredentials);
    login["username"] = username_;
    login["password"] = password_;
    if (with_second_factor && second_factor_secret_.has_value()) {
        login["factor"] = totp_code(*second_factor_secret_, ctx.now());
    }
    ctx.send(idp, correlation_id, make_payload(login));
}

void UserAgentEntity::resume_authn(const std::string& request_id, simnet::NetContext& ctx) {
    auto it = redirects_.find(request_id);
    if (it == redirects_.end()) {
        return;
    }
    const Redirect& redirect = it->second;
    wire::Record request;
    request["type"] = std::string(msg::kAuthnRequest);
    request["request_id"] = request_id;
    request["sp"] = redirect.audience;
    request["requested_loa"] = redirect.requested_loa;
    request["protocol"] = redirect.protocol;
    request["session"] = sessions_.count(redirect.idp) > 0 ? sessions_[redirect.idp] : "";
    ctx.send(redirect.idp, redirect.correlation_id, make_payload(request));
}

void UserAgentEntity::finish(std::string outcome) {
    last_outcome_ = std::move(outcome);
    outcome_ready_ = true;
    access_.reset();
    relogin_.reset();
    scripted_login_pending_ = false;
}

void UserAgentEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");

    if (type == msg::kAuthnResult) {
        sessions_[envelope.from] = field(message, "session");
        last_second_factor_[envelope.from] = field(message, "factors") == "2";
        if (relogin_.has_value() && relogin_->idp == envelope.from) {
            std::string request_id = relogin_->request_id;
            relogin_.reset();
            resume_authn(request_id, ctx);
            return;
        }
        if (scripted_login_pending_) {
            finish("ok loa=" + field(message, "loa"));
        }
        return;
    }
    if (type == msg::kAuthnError) {
        if (relogin_.has_value()) {
            std::string request_id = relogin_->request_id;
            relogin_.reset();
            auto redirect = redirects_.find(request_id);
            if (redirect != redirects_.end()) {
                wire::Record abort;
                abort["type"] = std::string(msg::kAuthnAbort);
                abort["request_id"] = request_id;
                abort["reason"] = field(message, "error");
                ctx.send(redirect->second.requester, redirect->second.correlation_id,
                         make_payload(abort));
            }
            return;
        }
        finish("error=" + field(message, "error"));
        return;
    }
    if (type == msg::kAuthnRedirect) {
        const std::string request_id = field(message, "request_id");
        Redirect redirect;
        redirect.requester = envelope.from;
        redirect.idp = field(message, "idp");
        redirect.audience = field(message, "audience");
        redirect.protocol = field(message, "protocol");
        redirect.requested_loa = field(message, "requested_loa");
        redirect.correlation_id = envelope.correlation_id;
        redirects_[request_id] = redirect;
        resume_authn(request_id, ctx);
        return;
    }
    if (type == msg::kAuthnFailed) {
        const std::string request_id = field(message, "request_id");
        const std::string reason = field(message, "reason");
        auto redirect = redirects_.find(request_id);
        if (redirect == redirects_.end()) {
            return;
        }
        bool can_step_up = reason == "StepUpRequired" && second_factor_secret_.has_value() &&
                           access_.has_value() && !access_->retried_step_up;
        bool can_relogin = (reason == "NoSession" || reason == "Expired") &&
                           access_.has_value() && !access_->retried_expired;
        if (can_step_up || can_relogin) {
            if (can_step_up) {
                access_->retried_step_up = true;
            } else {
                access_->retried_expired = true;
            }
            bool with_second_factor =
                can_step_up || last_second_factor_[redirect->second.idp];
            relogin_ = Relogin{redirect->second.idp, request_id, with_second_factor};
            send_login(ctx, redirect->second.idp, with_second_factor,
                       redirect->second.correlation_id);
            return;
        }
        wire::Record abort;
        abort["type"] = std::string(msg::kAuthnAbort);
        abort["request_id"] = request_id;
        abort["reason"] = reason;
        ctx.send(redirect->second.requester, redirect->second.correlation_id,
                 make_payload(abort));
        return;
    }
    if (type == msg::kAssertionIssued) {
        auto redirect = redirects_.find(field(message, "request_id"));
        if (redirect == redirects_.end()) {
            return;
        }
        wire::Record submit;
        submit["type"] = std::string(msg::kAssertionSubmit);
        submit["request_id"] = field(message, "request_id");
        submit["blob"] = field(message, "blob");
        ctx.send(redirect->second.requester, redirect->second.correlation_id,
                 make_payload(submit));
        return;
    }
    if (type == msg::kCodeIssued) {
        auto redirect = redirects_.find(field(message, "request_id"));
        if (redirect == redirects_.end()) {
            return;
        }
        wire::Record forward;
        forward["type"] = std::string(msg::kCodeForward);
        forward["request_id"] = field(message, "request_id");
        forward["code"] = field(message, "code");
        ctx.send(redirect->second.requester, redirect->second.correlation_id,
                 make_payload(forward));
        return;
    }
    if (type == msg::kTokenReady) {
        auto redirect = redirects_.find(field(message, "request_id"));
        if (redirect == redirects_.end()) {
            return;
        }
        wire::Record submit;
        submit["type"] = std::string(msg::kTokenSubmit);
        submit["request_id"] = field(message, "request_id");
        submit["access_token"] = field(message, "access_token");
        submit["id_token"] = field(message, "id_token");
        ctx.send(redirect->second.requester, redirect->second.correlation_id,
                 make_payload(submit));
        return;
    }
    if (type == msg::kAccessResult) {
        if (field(message, "outcome") == "granted") {
            finish("granted perms=" + field(message, "perms") + " loa=" +
                   field(message, "loa"));
        } else {
            finish("denied reason=" + field(message, "reason"));
        }
        return;
    }
}

// ---------------------------------------------------------------------------
// Kerberos entities

void KdcEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unparseable payload");
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");

    auto reply_error = [&](const proto::KrbError& error) {
        wire::Record reply;
        reply["type"] = std::string(msg::kKrbError);
        reply["error"] = to_string(error.code);
        ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
    };

    if (type == msg::kAsRequest) {
        auto preauth = wire::base64_decode(field(message, "preauth"));
        if (!preauth.ok()) {
            reply_error(proto::KrbError{proto::KrbError::Code::BadProof, "bad encoding"});
            return;
        }
        auto reply = proto::as_exchange(state, field(message, "principal"), preauth.value(),
                                        ctx.now(), ctx.rng());
        if (!reply.ok()) {
            ctx.audit("as_exchange", envelope.correlation_id, "error",
                      to_string(reply.error().code));
            reply_error(reply.error());
            return;
        }
        ctx.audit("as_exchange", envelope.correlation_id, "ok",
                  "principal:" + field(message, "principal"));
        wire::Record out;
        out["type"] = std::string(msg::kAsReply);
        out["tgt"] = wire::base64_encode(reply.value().tgt.sealed_blob);
        out["client_part"] = wire::base64_encode(reply.value().client_part);
        ctx.send(envelope.from, envelope.correlation_id, make_payload(out));
        return;
    }
    if (type == msg::kTgsRequest) {
        auto tgt = wire::base64_decode(field(message, "tgt"));
        if (!tgt.ok()) {
            reply_error(proto::KrbError{proto::KrbError::Code::BadTicket, "bad encoding"});
            return;
        }
        auto reply = proto::tgs_exchange(state, tgt.value(), field(message, "service"),
                                         ctx.now(), ctx.rng());
        if (!reply.ok()) {
            ctx.audit("tgs_exchange", envelope.correlation_id, "error",
                      to_string(reply.error().code));
            reply_error(reply.error());
            return;
        }
        ctx.audit("tgs_exchange", envelope.correlation_id, "ok",
                  "service:" + field(message, "service"));
        wire::Record out;
        out["type"] = std::string(msg::kTgsReply);
        out["ticket"] = wire::base64_encode(reply.value().service_ticket.sealed_blob);
        out["client_part"] = wire::base64_encode(reply.value().client_part);
        ctx.send(envelope.from, envelope.correlation_id, make_payload(out));
        return;
    }
    ctx.audit("protocol", envelope.correlation_id, "error", "unexpected type '" + type + "'");
}

void KrbServiceEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unparseable payload");
        return;
    }
    const wire::Record& message = parsed.value();
    if (field(message, "type") != msg::kApRequest) {
        ctx.audit("protocol", envelope.correlation_id, "error", "unexpected type");
        return;
    }
    auto ticket = wire::base64_decode(field(message, "ticket"));
    auto authenticator = wire::base64_decode(field(message, "authenticator"));
    if (!ticket.ok() || !authenticator.ok()) {
        wire::Record reply;
        reply["type"] = std::string(msg::kKrbError);
        reply["error"] = to_string(proto::KrbError::Code::BadTicket);
        ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
        return;
    }
    auto result =
        proto::ap_exchange(state, ticket.value(), authenticator.value(), ctx.now(), ctx.rng());
    wire::Record reply;
    if (!result.ok()) {
        ctx.audit("ap_exchange", envelope.correlation_id, "error",
                  to_string(result.error().code));
        reply["type"] = std::string(msg::kKrbError);
        reply["error"] = to_string(result.error().code);
    } else {
        ctx.audit("ap_exchange", envelope.correlation_id, "ok",
                  "client:" + result.value().client_principal);
        reply["type"] = std::string(msg::kApReply);
        reply["proof"] = wire::base64_encode(result.value().mutual_proof);
    }
    ctx.send(envelope.from, envelope.correlation_id, make_payload(reply));
}

KrbClientEntity::KrbClientEntity(std::string principal, std::string realm, std::string password,
                                 std::string kdc_entity)
    : client_id_("krb:" + principal + "@" + realm), principal_(std::move(principal)),
      realm_(std::move(realm)), kdc_entity_(std::move(kdc_entity)) {
    key_ = proto::principal_key(realm_, principal_, password);
}

void KrbClientEntity::begin_kinit(simnet::Network& net) {
    outcome_ready_ = false;
    last_outcome_.clear();
    std::string correlation_id = net.rng().opaque_id("x-");
    wire::Record request;
    request["type"] = std::string(msg::kAsRequest);
    request["principal"] = principal_;
    request["preauth"] =
        wire::base64_encode(proto::make_preauth(key_, principal_, net.now(), net.rng()));
    auto sent = net.send(client_id_, kdc_entity_, correlation_id, make_payload(request));
    if (!sent.ok()) {
        finish("error=" + sent.error().detail);
    }
}

void KrbClientEntity::begin_service_access(simnet::Network& net, std::string_view service_entity,
                                           std::string_view service_principal, bool replay) {
    outcome_ready_ = false;
    last_outcome_.clear();
    std::string correlation_id = net.rng().opaque_id("x-");

    if (replay) {
        if (!last_ap_.has_value()) {
            finish("error=NothingToReplay");
            return;
        }
        pending_ = PendingAccess{last_ap_->service_entity, std::string(service_principal),
                                 last_ap_->nonce, last_ap_->session_key, correlation_id};
        auto sent =
            net.send(client_id_, last_ap_->service_entity, correlation_id, last_ap_->payload);
        if (!sent.ok()) {
            finish("error=" + sent.error().detail);
        }
        return;
    }

    if (!tgt_view_.has_value()) {
        finish("error=NoTgt");
        return;
    }
    pending_ = PendingAccess{std::string(service_entity), std::string(service_principal), "",
                             {}, correlation_id};
    wire::Record request;
    request["type"] = std::string(msg::kTgsRequest);
    request["tgt"] = wire::base64_encode(tgt_sealed_);
    request["service"] = std::string(service_principal);
    auto sent = net.send(client_id_, kdc_entity_, correlation_id, make_payload(request));
    if (!sent.ok()) {
        finish("error=" + sent.error().detail);
    }
}

void KrbClientEntity::finish(std::string outcome) {
    last_outcome_ = std::move(outcome);
    outcome_ready_ = true;
    pending_.reset();
}

void KrbClientEntity::on_envelope(const simnet::Envelope& envelope, simnet::NetContext& ctx) {
    auto parsed = wire::parse(envelope.payload);
    if (!parsed.ok()) {
        return;
    }
    const wire::Record& message = parsed.value();
    std::string type = field(message, "type");

    if (type == msg::kKrbError) {
        finish("error=" + field(message, "error"));
        return;
    }
    if (type == msg::kAsReply) {
        auto tgt = wire::base64_decode(field(message, "tgt"));
        auto part = wire::base64_decode(field(message, "client_part"));
        if (!tgt.ok() || !part.ok()) {
            finish("error=BadReply");
            return;
        }
        auto view = proto::open_client_part(key_, part.value());
        if (!view.ok()) {
            finish("error=" + std::string(to_string(view.error().code)));
            return;
        }
        tgt_sealed_ = tgt.take();
        tgt_view_ = view.take();
        finish("ok");
        return;
    }
    if (type == msg::kTgsReply) {
        if (!pending_.has_value() || !tgt_view_.has_value()) {
            return;
        }
        auto ticket = wire::base64_decode(field(message, "ticket"));
        auto part = wire::base64_decode(field(message, "client_part"));
        if (!ticket.ok() || !part.ok()) {
            finish("error=BadReply");
            return;
        }
        auto view = proto::open_client_part(tgt_view_->session_key, part.value());
        if (!view.ok()) {
            finish("error=" + std::string(to_string(view.error().code)));
            return;
        }
        pending_->session_key = view.value().session_key;
        pending_->nonce = ctx.rng().opaque_id("n-");
        Bytes authenticator = proto::make_authenticator(view.value().session_key, principal_,
                                                        ctx.now(), pending_->nonce, ctx.rng());
        wire::Record request;
        request["type"] = std::string(msg::kApRequest);
        request["ticket"] = field(message, "ticket");
        request["authenticator"] = wire::base64_encode(authenticator);
        std::string payload = make_payload(request);
        last_ap_ = LastApRequest{pending_->service_entity, pending_->nonce,
                                 pending_->session_key, payload};
        ctx.send(pending_->service_entity, pending_->correlation_id, std::move(payload));
        return;
    }
    if (type == msg::kApReply) {
        if (!pending_.has_value()) {
            return;
        }
        auto proof = wire::base64_decode(field(message, "proof"));
        if (!proof.ok()) {
            finish("error=BadReply");
            return;
        }
        if (proto::verify_mutual_proof(pending_->session_key, proof.value(), pending_->nonce)) {
            finish("ok mutual=true");
        } else {
            finish("error=MutualProofFailed");
        }
        return;
    }
}

} // namespace fedweaver::entity
