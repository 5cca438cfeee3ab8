/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "fedweaver/simnet.hpp"
#include "fedweaver/wire.hpp"

namespace fedweaver::scenario {

namespace {

struct Token {
    std::string text;
    bool quoted = false;
};

// Whitespace-separated tokens; double quotes group, backslash escapes
// inside quotes; '#' starts a comment outside quotes.
Result<std::vector<Token>, ScenarioError> scan_line(std::string_view line, std::size_t line_no) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        char c = line[i];
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        if (c == '#') {
            break;
        }
        if (c == '"') {
            std::string text;
            ++i;
            bool closed = false;
            while (i < line.size()) {
                char q = line[i];
                if (q == '\\' && i + 1 < line.size() &&
                    (line[i + 1] == '"' || line[i + 1] == '\\')) {
                    text.push_back(line[i + 1]);
                    i += 2;
                    continue;
                }
                if (q == '"') {
                    closed = true;
                    ++i;
                    break;
                }
                text.push_back(q);
                ++i;
            }
            if (!closed) {
                return ScenarioError{ScenarioError::Kind::Parse, "unterminated quoted string",
                                     line_no};
            }
            tokens.push_back(Token{std::move(text), true});
        } else {
            std::size_t end = i;
            while (end < line.size() && line[end] != ' ' && line[end] != '\t' &&
                   line[end] != '#') {
                ++end;
            }
            tokens.push_back(Token{std::string(line.substr(i, end - i)), false});
            i = end;
        }
    }
    return tokens;
}

ScenarioError parse_error(std::string message, std::size_t line) {
    return ScenarioError{ScenarioError::Kind::Parse, std::move(message), line};
}

ScenarioError dangling(std::string message, std::size_t line = 0) {
    return ScenarioError{ScenarioError::Kind::DanglingReference, std::move(message), line};
}

Result<Tick, ScenarioError> parse_tick_token(const std::string& text, std::size_t line) {
    auto value = wire::parse_u64(text);
    if (!value.ok()) {
        return parse_error("expected a number, got '" + text + "'", line);
    }
    return value.take();
}

// Parser state: the most recent federation/entity/kdc block receives
// the indented-style property lines that follow it.
struct ParseContext {
    ScenarioConfig config;
    FederationSpec* federation = nullptr;
    EntitySpec* entity = nullptr;
    KdcSpec* kdc = nullptr;
    StepSpec* last_step = nullptr;
};

const UserSpec* find_user(const ScenarioConfig& config, std::string_view user_ref,
                          const EntitySpec** home = nullptr) {
    std::string local = std::string(user_ref.substr(0, user_ref.find('@')));
    std::string domain = entity::hint_domain(user_ref);
    for (const EntitySpec& entity : config.entities) {
        if (entity.domains.count(domain) == 0) {
            continue;
        }
        for (const UserSpec& user : entity.users) {
            if (user.name == local) {
                if (home != nullptr) {
                    *home = &entity;
                }
                return &user;
            }
        }
    }
    return nullptr;
}

const EntitySpec* find_entity(const ScenarioConfig& config, std::string_view id) {
    for (const EntitySpec& entity : config.entities) {
        if (entity.id == id) {
            return &entity;
        }
    }
    return nullptr;
}

const FederationSpec* find_federation(const ScenarioConfig& config, std::string_view id) {
    for (const FederationSpec& federation : config.federations) {
        if (federation.id == id) {
            return &federation;
        }
    }
    return nullptr;
}

const KdcSpec* find_kdc_by_realm(const ScenarioConfig& config, std::string_view realm) {
    for (const KdcSpec& kdc : config.kdcs) {
        if (kdc.realm == realm) {
            return &kdc;
        }
    }
    return nullptr;
}

Result<Unit, ScenarioError> check_references(const ScenarioConfig& config) {
    for (const EntitySpec& entity : config.entities) {
        for (const std::string& federation : entity.member_of) {
            if (find_federation(config, federation) == nullptr) {
                return dangling("entity '" + entity.id + "' references unknown federation '" +
                                federation + "'");
            }
        }
        if (entity.proxy.has_value()) {
            if (find_entity(config, entity.proxy->upstream) == nullptr) {
                return dangling("proxy '" + entity.id + "' references unknown upstream '" +
                                entity.proxy->upstream + "'");
            }
            for (const auto& [sp, protocol] : entity.proxy->serves) {
                if (find_entity(config, sp) == nullptr) {
                    return dangling("proxy '" + entity.id + "' serves unknown sp '" + sp + "'");
                }
            }
        }
    }
    for (const FederationSpec& federation : config.federations) {
        for (const trust::Agreement& agreement : federation.agreements) {
            for (const std::string* party : {&agreement.party_a, &agreement.party_b}) {
                if (find_entity(config, *party) == nullptr) {
                    return dangling("agreement in '" + federation.id +
                                    "' references unknown entity '" + *party + "'");
                }
            }
        }
    }
    for (const StepSpec& step : config.steps) {
        switch (step.kind) {
        case StepKind::Login: {
            if (find_user(config, step.args[0]) == nullptr) {
                return dangling("step references unknown user '" + step.args[0] + "'",
                                step.line);
            }
            if (find_entity(config, step.args[1]) == nullptr) {
                return dangling("step references unknown idp '" + step.args[1] + "'",
                                step.line);
            }
            break;
        }
        case StepKind::AccessResource: {
            if (find_user(config, step.args[0]) == nullptr) {
                return dangling("step references unknown user '" + step.args[0] + "'",
                                step.line);
            }
            const EntitySpec* sp = find_entity(config, step.args[1]);
            if (sp == nullptr) {
                return dangling("step references unknown sp '" + step.args[1] + "'", step.line);
            }
            bool has_resource =
                std::any_of(sp->resources.begin(), sp->resources.end(),
                            [&](const entity::ResourceSpec& r) { return r.path == step.args[2]; });
            if (!has_resource) {
                return dangling("sp '" + sp->id + "' has no resource '" + step.args[2] + "'",
                                step.line);
            }
            break;
        }
        case StepKind::KerberosLogin:
        case StepKind::KerberosAccess: {
            const KdcSpec* kdc = find_kdc_by_realm(config, step.args[1]);
            if (kdc == nullptr) {
                return dangling("step references unknown realm '" + step.args[1] + "'",
                                step.line);
            }
            auto has_principal = [kdc](std::string_view name, bool service) {
                return std::any_of(kdc->principals.begin(), kdc->principals.end(),
                                   [&](const KrbPrincipalSpec& p) {
                                       return p.name == name && p.service == service;
                                   });
            };
            if (!has_principal(step.args[0], false)) {
                return dangling("realm '" + kdc->realm + "' has no principal '" + step.args[0] +
                                "'", step.line);
            }
            if (step.kind == StepKind::KerberosAccess && !has_principal(step.args[2], true)) {
                return dangling("realm '" + kdc->realm + "' has no service '" + step.args[2] +
                                "'", step.line);
            }
            break;
        }
        case StepKind::PublishMetadata:
            if (find_federation(config, step.args[0]) == nullptr) {
                return dangling("step references unknown federation '" + step.args[0] + "'",
                                step.line);
            }
            break;
        case StepKind::AdvanceClock:
            break;
        }
    }
    return Unit{};
}

std::string step_description(const StepSpec& step) {
    std::string out = to_string(step.kind);
    for (const std::string& arg : step.args) {
        out += ' ';
        out += arg;
    }
    if (step.mfa) {
        out += " mfa";
    }
    if (step.replay) {
        out += " replay";
    }
    return out;
}

std::string krb_client_id(std::string_view principal, std::string_view realm) {
    return "krb:" + std::string(principal) + "@" + std::string(realm);
}

std::string krb_service_id(std::string_view principal, std::string_view realm) {
    return "svc:" + std::string(principal) + "@" + std::string(realm);
}

} // namespace

const char* to_string(StepKind kind) {
    switch (kind) {
    case StepKind::Login: return "login";
    case StepKind::AccessResource: return "access";
    case StepKind::KerberosLogin: return "kinit";
    case StepKind::KerberosAccess: return "kaccess";
    case StepKind::AdvanceClock: return "advance";
    case StepKind::PublishMetadata: return "publish";
    }
    return "?";
}

Result<ScenarioConfig, ScenarioError> load_scenario_text(std::string_view text,
                                                         std::string base_dir) {
    ParseContext ctx;
    ctx.config.base_dir = std::move(base_dir);

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        ++line_no;
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

        auto scanned = scan_line(line, line_no);
        if (!scanned.ok()) {
            return scanned.error();
        }
        const std::vector<Token>& tokens = scanned.value();
        if (tokens.empty()) {
            continue;
        }
        const std::string& keyword = tokens[0].text;
        auto need = [&](std::size_t count) -> std::optional<ScenarioError> {
            if (tokens.size() < count) {
                return parse_error("'" + keyword + "' expects more arguments", line_no);
            }
            return std::nullopt;
        };

        if (keyword == "scenario") {
            if (auto err = need(2)) return *err;
            ctx.config.name = tokens[1].text;
        } else if (keyword == "latency") {
            if (auto err = need(2)) return *err;
            auto value = parse_tick_token(tokens[1].text, line_no);
            if (!value.ok()) return value.error();
            ctx.config.latency = value.take();
        } else if (keyword == "drop-probability") {
            if (auto err = need(2)) return *err;
            try {
                ctx.config.drop_probability = std::stod(tokens[1].text);
            } catch (const std::exception&) {
                return parse_error("bad drop probability", line_no);
            }
        } else if (keyword == "livelock-cap") {
            if (auto err = need(2)) return *err;
            auto value = parse_tick_token(tokens[1].text, line_no);
            if (!value.ok()) return value.error();
            ctx.config.livelock_cap = value.take();
        } else if (keyword == "federation") {
            if (auto err = need(2)) return *err;
            ctx.config.federations.push_back(FederationSpec{tokens[1].text});
            ctx.federation = &ctx.config.federations.back();
            ctx.entity = nullptr;
            ctx.kdc = nullptr;
        } else if (keyword == "ttp" || keyword == "validity" || keyword == "agreement") {
            if (ctx.federation == nullptr) {
                return parse_error("'" + keyword + "' outside a federation block", line_no);
            }
            if (keyword == "ttp") {
                if (auto err = need(2)) return *err;
                ctx.federation->ttp_entity = tokens[1].text;
            } else if (keyword == "validity") {
                if (auto err = need(2)) return *err;
                auto value = parse_tick_token(tokens[1].text, line_no);
                if (!value.ok()) return value.error();
                ctx.federation->validity = value.take();
            } else {
                if (auto err = need(4)) return *err;
                auto kind = trust::parse_agreement_kind(tokens[1].text);
                if (!kind.has_value()) {
                    return parse_error("unknown agreement kind '" + tokens[1].text + "'",
                                       line_no);
                }
                trust::Agreement agreement;
                agreement.kind = *kind;
                agreement.party_a = tokens[2].text;
                agreement.party_b = tokens[3].text;
                if (agreement.party_a == agreement.party_b) {
                    return parse_error("agreement parties must differ", line_no);
                }
                std::size_t i = 4;
                while (i < tokens.size()) {
                    const std::string& option = tokens[i].text;
                    if (option == "loa" && i + 1 < tokens.size()) {
                        auto loa = trust::parse_loa(tokens[i + 1].text);
                        if (!loa.has_value()) {
                            return parse_error("unknown loa '" + tokens[i + 1].text + "'",
                                               line_no);
                        }
                        agreement.required_loa = *loa;
                        i += 2;
                    } else if (option == "release" && i + 1 < tokens.size()) {
                        std::istringstream csv(tokens[i + 1].text);
                        std::string item;
                        while (std::getline(csv, item, ',')) {
                            if (!item.empty()) {
                                agreement.released_attributes.insert(item);
                            }
                        }
                        i += 2;
                    } else if (option == "qos" && i + 1 < tokens.size()) {
                        std::string_view pair = tokens[i + 1].text;
                        std::size_t eq = pair.find('=');
                        if (eq == std::string_view::npos) {
                            return parse_error("qos expects key=value", line_no);
                        }
                        agreement.qos[std::string(pair.substr(0, eq))] =
                            std::string(pair.substr(eq + 1));
                        i += 2;
                    } else {
                        return parse_error("unknown agreement option '" + option + "'", line_no);
                    }
                }
                ctx.federation->agreements.push_back(std::move(agreement));
            }
        } else if (keyword == "entity") {
            if (auto err = need(2)) return *err;
            ctx.config.entities.push_back(EntitySpec{});
            ctx.entity = &ctx.config.entities.back();
            ctx.entity->id = tokens[1].text;
            ctx.entity->display = tokens[1].text;
            ctx.federation = nullptr;
            ctx.kdc = nullptr;
        } else if (keyword == "kdc") {
            if (auto err = need(4)) return *err;
            if (tokens[2].text != "realm") {
                return parse_error("kdc expects: kdc <entity-id> realm <REALM>", line_no);
            }
            ctx.config.kdcs.push_back(KdcSpec{tokens[1].text, tokens[3].text, {}, {}});
            ctx.kdc = &ctx.config.kdcs.back();
            ctx.federation = nullptr;
            ctx.entity = nullptr;
        } else if (keyword == "tgt-lifetime" || keyword == "service-lifetime" ||
                   keyword == "skew" || keyword == "principal" || keyword == "service") {
            if (ctx.kdc == nullptr) {
                return parse_error("'" + keyword + "' outside a kdc block", line_no);
            }
            if (keyword == "principal") {
                if (auto err = need(4)) return *err;
                if (tokens[2].text != "password") {
                    return parse_error("principal expects: principal <name> password \"<pw>\"",
                                       line_no);
                }
                ctx.kdc->principals.push_back(
                    KrbPrincipalSpec{tokens[1].text, tokens[3].text, false});
            } else if (keyword == "service") {
                if (auto err = need(2)) return *err;
                ctx.kdc->principals.push_back(KrbPrincipalSpec{tokens[1].text, "", true});
            } else {
                if (auto err = need(2)) return *err;
                auto value = parse_tick_token(tokens[1].text, line_no);
                if (!value.ok()) return value.error();
                if (keyword == "tgt-lifetime") {
                    ctx.kdc->config.tgt_lifetime = value.take();
                } else if (keyword == "service-lifetime") {
                    ctx.kdc->config.service_lifetime = value.take();
                } else {
                    ctx.kdc->config.skew = value.take();
                }
            }
        } else if (keyword == "step") {
            if (auto err = need(2)) return *err;
            const std::string& kind_text = tokens[1].text;
            StepSpec step;
            step.line = line_no;
            std::vector<std::string> args;
            for (std::size_t i = 2; i < tokens.size(); ++i) {
                args.push_back(tokens[i].text);
            }
            if (kind_text == "login") {
                step.kind = StepKind::Login;
                if (!args.empty() && args.back() == "mfa") {
                    step.mfa = true;
                    args.pop_back();
                }
                if (args.size() != 2) {
                    return parse_error("step login expects <user@domain> <idp> [mfa]", line_no);
                }
            } else if (kind_text == "access") {
                step.kind = StepKind::AccessResource;
                if (args.size() != 3) {
                    return parse_error("step access expects <user@domain> <sp> <resource>",
                                       line_no);
                }
            } else if (kind_text == "kinit") {
                step.kind = StepKind::KerberosLogin;
                if (args.size() != 2) {
                    return parse_error("step kinit expects <principal> <realm>", line_no);
                }
            } else if (kind_text == "kaccess") {
                step.kind = StepKind::KerberosAccess;
                if (!args.empty() && args.back() == "replay") {
                    step.replay = true;
                    args.pop_back();
                }
                if (args.size() != 3) {
                    return parse_error("step kaccess expects <principal> <realm> <service>",
                                       line_no);
                }
            } else if (kind_text == "advance") {
                step.kind = StepKind::AdvanceClock;
                if (args.size() != 1) {
                    return parse_error("step advance expects <ticks>", line_no);
                }
                auto amount = parse_tick_token(args[0], line_no);
                if (!amount.ok()) return amount.error();
                if (amount.value() == 0) {
                    return parse_error("advance amount must be positive", line_no);
                }
            } else if (kind_text == "publish") {
                step.kind = StepKind::PublishMetadata;
                if (args.size() != 1) {
                    return parse_error("step publish expects <federation>", line_no);
                }
            } else {
                return parse_error("unknown step kind '" + kind_text + "'", line_no);
            }
            step.args = std::move(args);
            ctx.config.steps.push_back(std::move(step));
            ctx.last_step = &ctx.config.steps.back();
        } else if (keyword == "expect") {
            if (ctx.last_step == nullptr) {
                return parse_error("'expect' without a preceding step", line_no);
            }
            std::string expected;
            for (std::size_t i = 1; i < tokens.size(); ++i) {
                if (!expected.empty()) {
                    expected.push_back(' ');
                }
                expected += tokens[i].text;
            }
            ctx.last_step->expected = expected;
        } else if (ctx.entity != nullptr) {
            EntitySpec& entity = *ctx.entity;
            if (keyword == "display") {
                if (auto err = need(2)) return *err;
                entity.display = tokens[1].text;
            } else if (keyword == "role") {
                for (std::size_t i = 1; i < tokens.size(); ++i) {
                    if (tokens[i].text == "idp") {
                        entity.roles.insert(trust::Role::Idp);
                    } else if (tokens[i].text == "sp") {
                        entity.roles.insert(trust::Role::Sp);
                    } else {
                        return parse_error("unknown role '" + tokens[i].text + "'", line_no);
                    }
                }
            } else if (keyword == "loa") {
                if (auto err = need(2)) return *err;
                auto loa = trust::parse_loa(tokens[1].text);
                if (!loa.has_value()) {
                    return parse_error("unknown loa '" + tokens[1].text + "'", line_no);
                }
                entity.loa = *loa;
            } else if (keyword == "domain") {
                if (auto err = need(2)) return *err;
                entity.domains.insert(tokens[1].text);
            } else if (keyword == "endpoint") {
                if (auto err = need(2)) return *err;
                auto protocol = trust::parse_protocol(tokens[1].text);
                if (!protocol.has_value()) {
                    return parse_error("unknown protocol '" + tokens[1].text + "'", line_no);
                }
                entity.endpoints.insert(*protocol);
            } else if (keyword == "member-of") {
                if (auto err = need(2)) return *err;
                entity.member_of.push_back(tokens[1].text);
            } else if (keyword == "model") {
                if (auto err = need(2)) return *err;
                entity.model_path = tokens[1].text;
            } else if (keyword == "key-seed") {
                if (auto err = need(2)) return *err;
                entity.key_seed_hex = tokens[1].text;
            } else if (keyword == "session-lifetime" || keyword == "assertion-lifetime" ||
                       keyword == "token-lifetime") {
                if (auto err = need(2)) return *err;
                auto value = parse_tick_token(tokens[1].text, line_no);
                if (!value.ok()) return value.error();
                if (keyword == "session-lifetime") {
                    entity.session_lifetime = value.take();
                } else if (keyword == "assertion-lifetime") {
                    entity.assertion_lifetime = value.take();
                } else {
                    entity.token_lifetime = value.take();
                }
            } else if (keyword == "single-sp") {
                if (auto err = need(2)) return *err;
                entity.single_sp = tokens[1].text;
            } else if (keyword == "user") {
                if (auto err = need(4)) return *err;
                if (tokens[2].text != "password") {
                    return parse_error("user expects: user <name> password \"<pw>\" "
                                       "[second-factor \"<secret>\"]",
                                       line_no);
                }
                UserSpec user;
                user.name = tokens[1].text;
                user.password = tokens[3].text;
                if (tokens.size() >= 6 && tokens[4].text == "second-factor") {
                    user.second_factor = tokens[5].text;
                } else if (tokens.size() != 4) {
                    return parse_error("unexpected tokens after user password", line_no);
                }
                entity.users.push_back(std::move(user));
            } else if (keyword == "attr") {
                if (auto err = need(4)) return *err;
                auto user = std::find_if(entity.users.begin(), entity.users.end(),
                                         [&](const UserSpec& u) { return u.name == tokens[1].text; });
                if (user == entity.users.end()) {
                    return dangling("attr for undeclared user '" + tokens[1].text + "'",
                                    line_no);
                }
                user->attributes[tokens[2].text] = tokens[3].text;
            } else if (keyword == "userrole") {
                if (auto err = need(3)) return *err;
                auto user = std::find_if(entity.users.begin(), entity.users.end(),
                                         [&](const UserSpec& u) { return u.name == tokens[1].text; });
                if (user == entity.users.end()) {
                    return dangling("userrole for undeclared user '" + tokens[1].text + "'",
                                    line_no);
                }
                user->roles.insert(tokens[2].text);
            } else if (keyword == "resource") {
                if (auto err = need(6)) return *err;
                if (tokens[2].text != "loa" || tokens[4].text != "permission") {
                    return parse_error(
                        "resource expects: resource <path> loa <L> permission <perm>", line_no);
                }
                auto loa = trust::parse_loa(tokens[3].text);
                if (!loa.has_value()) {
                    return parse_error("unknown loa '" + tokens[3].text + "'", line_no);
                }
                entity.resources.push_back(
                    entity::ResourceSpec{tokens[1].text, *loa, tokens[5].text});
            } else if (keyword == "permit") {
                if (auto err = need(3)) return *err;
                for (std::size_t i = 2; i < tokens.size(); ++i) {
                    entity.permits[tokens[1].text].insert(tokens[i].text);
                }
            } else if (keyword == "proxy-upstream") {
                if (auto err = need(3)) return *err;
                auto protocol = trust::parse_protocol(tokens[2].text);
                if (!protocol.has_value()) {
                    return parse_error("unknown protocol '" + tokens[2].text + "'", line_no);
                }
                if (!entity.proxy.has_value()) {
                    entity.proxy = ProxySpec{};
                }
                entity.proxy->upstream = tokens[1].text;
                entity.proxy->upstream_protocol = *protocol;
            } else if (keyword == "proxy-serve") {
                if (auto err = need(3)) return *err;
                auto protocol = trust::parse_protocol(tokens[2].text);
                if (!protocol.has_value()) {
                    return parse_error("unknown protocol '" + tokens[2].text + "'", line_no);
                }
                if (!entity.proxy.has_value()) {
                    entity.proxy = ProxySpec{};
                }
                entity.proxy->serves[tokens[1].text] = *protocol;
            } else {
                return parse_error("unknown entity property '" + keyword + "'", line_no);
            }
        } else {
            return parse_error("unknown record '" + keyword + "'", line_no);
        }
    }

    auto checked = check_references(ctx.config);
    if (!checked.ok()) {
        return checked.error();
    }
    return ctx.config;
}

Result<ScenarioConfig, ScenarioError> load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return ScenarioError{ScenarioError::Kind::Io, "cannot open '" + path + "'"};
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_scenario_text(buffer.str(),
                              std::filesystem::path(path).parent_path().string());
}

trust::EntityDescriptor descriptor_from_spec(const EntitySpec& spec, std::uint64_t master_seed) {
    Bytes seed;
    if (spec.key_seed_hex.has_value()) {
        auto decoded = wire::hex_decode(*spec.key_seed_hex);
        seed = decoded.ok() ? decoded.take() : crypto::derive_seed32(master_seed,
                                                                     "entity-sign:" + spec.id);
    } else {
        seed = crypto::derive_seed32(master_seed, "entity-sign:" + spec.id);
    }
    crypto::SigningKey key = crypto::signing_key_from_seed(seed);

    trust::EntityDescriptor descriptor;
    descriptor.entity_id = spec.id;
    descriptor.roles = spec.roles;
    descriptor.loa = spec.loa;
    descriptor.domains = spec.domains;
    descriptor.display_name = spec.display;
    descriptor.verification_key = key.verify_key;
    for (Protocol protocol : spec.endpoints) {
        descriptor.protocol_endpoints[protocol] =
            "sim://" + spec.id + "/" + trust::to_string(protocol);
    }
    return descriptor;
}

namespace {

crypto::SigningKey entity_signing_key(const EntitySpec& spec, std::uint64_t master_seed) {
    if (spec.key_seed_hex.has_value()) {
        auto decoded = wire::hex_decode(*spec.key_seed_hex);
        if (decoded.ok()) {
            return crypto::signing_key_from_seed(decoded.value());
        }
    }
    return crypto::signing_key_from_seed(
        crypto::derive_seed32(master_seed, "entity-sign:" + spec.id));
}

// Everything mutable a run needs, owned for the run's duration.
struct Runtime {
    simnet::AuditLog audit;
    std::unique_ptr<simnet::Network> net;
    std::map<std::string, trust::Registry> registries; // federation -> registry
    std::vector<std::unique_ptr<simnet::Entity>> entities;
    std::map<std::string, entity::UserAgentEntity*> user_agents;  // user@domain -> ua
    std::map<std::string, entity::KrbClientEntity*> krb_clients;  // principal@realm -> client
    std::map<std::string, entity::IdpEntity*> idps;               // entity id -> idp
};

std::vector<entity::TrustView> make_views(const ScenarioConfig& config, const EntitySpec& spec,
                                          const std::map<std::string, trust::Registry>& regs) {
    std::vector<entity::TrustView> views;
    for (const std::string& federation_id : spec.member_of) {
        const FederationSpec* federation = find_federation(config, federation_id);
        entity::TrustView view;
        view.federation_id = federation_id;
        view.ttp_verify_key = regs.at(federation_id).ttp_key.verify_key;
        if (federation != nullptr) {
            view.agreements = federation->agreements;
        }
        views.push_back(std::move(view));
    }
    return views;
}

Result<Unit, ScenarioError> build_runtime(const ScenarioConfig& config, std::uint64_t seed,
                                          Runtime& rt) {
    simnet::NetworkPolicy policy;
    policy.base_latency = config.latency;
    policy.drop_probability = config.drop_probability;
    policy.seed = seed;
    rt.net = std::make_unique<simnet::Network>(policy, rt.audit);

    for (const FederationSpec& federation : config.federations) {
        trust::Registry registry;
        registry.federation_id = federation.id;
        registry.ttp_key = crypto::signing_key_from_seed(
            crypto::derive_seed32(seed, "ttp:" + federation.id));
        rt.registries.emplace(federation.id, std::move(registry));
    }
    for (const EntitySpec& spec : config.entities) {
        for (const std::string& federation_id : spec.member_of) {
            auto registered = trust::register_entity(rt.registries.at(federation_id),
                                                     descriptor_from_spec(spec, seed));
            if (!registered.ok()) {
                return ScenarioError{ScenarioError::Kind::DanglingReference,
                                     registered.error().detail};
            }
        }
    }

    for (const EntitySpec& spec : config.entities) {
        if (!spec.proxy.has_value() && spec.roles.size() > 1) {
            return ScenarioError{ScenarioError::Kind::DanglingReference,
                                 "entity '" + spec.id +
                                     "' declares both roles; model separate endpoints or a proxy"};
        }
        if (spec.proxy.has_value()) {
            auto proxy = std::make_unique<entity::ProxyEntity>();
            proxy->entity_id = spec.id;
            proxy->signing_key = entity_signing_key(spec, seed);
            proxy->default_lifetime = spec.token_lifetime;
            proxy->config.upstream_idp = spec.proxy->upstream;
            proxy->config.upstream_protocol = spec.proxy->upstream_protocol;
            for (const auto& [sp, protocol] : spec.proxy->serves) {
                proxy->config.served_sps.insert(sp);
                proxy->config.translation_targets[sp] = protocol;
            }
            proxy->views = make_views(config, spec, rt.registries);
            rt.net->register_entity(*proxy);
            rt.entities.push_back(std::move(proxy));
            continue;
        }
        if (spec.roles.count(trust::Role::Idp) > 0) {
            auto idp = std::make_unique<entity::IdpEntity>();
            idp->core.entity_id = spec.id;
            idp->core.entity_loa = spec.loa;
            idp->core.session_lifetime = spec.session_lifetime;
            idp->signing_key = entity_signing_key(spec, seed);
            idp->oidc.issuer = spec.id;
            idp->oidc.key = idp->signing_key;
            idp->oidc.token_lifetime = spec.token_lifetime;
            idp->assertion_lifetime = spec.assertion_lifetime;
            idp->single_sp = spec.single_sp;
            idp->views = make_views(config, spec, rt.registries);
            std::string home_domain = spec.domains.empty() ? "" : *spec.domains.begin();
            for (const UserSpec& user : spec.users) {
                idp->core.users.emplace(
                    user.name, entity::make_identity(user.name, user.password,
                                                     user.second_factor, user.attributes,
                                                     user.roles, home_domain, rt.net->rng()));
            }
            rt.idps.emplace(spec.id, idp.get());
            rt.net->register_entity(*idp);
            rt.entities.push_back(std::move(idp));

            for (const UserSpec& user : spec.users) {
                for (const std::string& domain : spec.domains) {
                    std::string ref = user.name + "@" + domain;
                    auto ua = std::make_unique<entity::UserAgentEntity>(ref, user.password,
                                                                        user.second_factor);
                    rt.user_agents.emplace(ref, ua.get());
                    rt.net->register_entity(*ua);
                    rt.entities.push_back(std::move(ua));
                }
            }
        } else if (spec.roles.count(trust::Role::Sp) > 0) {
            auto sp = std::make_unique<entity::SpEntity>();
            sp->entity_id = spec.id;
            sp->protocol = spec.endpoints.empty() ? Protocol::Assertion : *spec.endpoints.begin();
            for (const entity::ResourceSpec& resource : spec.resources) {
                sp->resources.emplace(resource.path, resource);
            }
            sp->permissions.role_permissions = spec.permits;
            sp->views = make_views(config, spec, rt.registries);
            rt.net->register_entity(*sp);
            rt.entities.push_back(std::move(sp));
        }
    }

    for (const KdcSpec& spec : config.kdcs) {
        auto kdc = std::make_unique<entity::KdcEntity>();
        kdc->entity_id = spec.id;
        kdc->state.realm = spec.realm;
        kdc->state.config = spec.config;
        kdc->state.tgs_key = crypto::derive_seed32(seed, "krb-tgs:" + spec.realm);
        for (const KrbPrincipalSpec& principal : spec.principals) {
            crypto::SecretKey key =
                principal.service
                    ? crypto::derive_seed32(seed, "krb-svc:" + spec.realm + "/" + principal.name)
                    : proto::principal_key(spec.realm, principal.name, principal.password);
            kdc->state.principals.emplace(principal.name, key);

            if (principal.service) {
                auto service = std::make_unique<entity::KrbServiceEntity>();
                service->entity_id = krb_service_id(principal.name, spec.realm);
                service->state.principal = principal.name;
                service->state.key = key;
                service->state.skew = spec.config.skew;
                rt.net->register_entity(*service);
                rt.entities.push_back(std::move(service));
            } else {
                auto client = std::make_unique<entity::KrbClientEntity>(
                    principal.name, spec.realm, principal.password, spec.id);
                rt.krb_clients.emplace(principal.name + "@" + spec.realm, client.get());
                rt.net->register_entity(*client);
                rt.entities.push_back(std::move(client));
            }
        }
        rt.net->register_entity(*kdc);
        rt.entities.push_back(std::move(kdc));
    }
    return Unit{};
}

} // namespace

Result<ScenarioReport, ScenarioError> run_scenario(const ScenarioConfig& config,
                                                   std::uint64_t seed,
                                                   const std::string& trace_path) {
    Runtime rt;
    auto built = build_runtime(config, seed, rt);
    if (!built.ok()) {
        return built.error();
    }

    ScenarioReport report;
    report.scenario = config.name;
    report.seed = seed;
    report.trace_path = trace_path;

    for (std::size_t i = 0; i < config.steps.size(); ++i) {
        const StepSpec& step = config.steps[i];
        const std::string step_corr = "step-" + std::to_string(i + 1);
        std::string outcome;

        switch (step.kind) {
        case StepKind::PublishMetadata: {
            const std::string& federation_id = step.args[0];
            const FederationSpec* federation = find_federation(config, federation_id);
            trust::Registry& registry = rt.registries.at(federation_id);
            auto metadata =
                trust::aggregate_metadata(registry, rt.net->now(), federation->validity);
            if (!metadata.ok()) {
                outcome = "error=" + metadata.error().detail;
                break;
            }
            std::string blob = trust::metadata_to_wire(metadata.value());
            rt.audit.append(rt.net->now(), federation->ttp_entity, "publish", step_corr, "ok",
                            "federation:" + federation_id + " serial:" +
                                wire::format_u64(metadata.value().serial));
            for (const EntitySpec& spec : config.entities) {
                if (std::find(spec.member_of.begin(), spec.member_of.end(), federation_id) ==
                    spec.member_of.end()) {
                    continue;
                }
                wire::Record payload;
                payload["type"] = std::string(entity::msg::kMetadataPublish);
                payload["federation"] = federation_id;
                payload["blob"] = blob;
                rt.net->send(federation->ttp_entity, spec.id, step_corr,
                             entity::make_payload(payload));
            }
            auto ran = rt.net->run_until_idle(config.livelock_cap);
            if (!ran.ok()) {
                return ScenarioError{ScenarioError::Kind::Livelock, ran.error().detail};
            }
            outcome = "ok serial=" + wire::format_u64(metadata.value().serial);
            break;
        }
        case StepKind::Login: {
            entity::UserAgentEntity* ua = rt.user_agents.at(step.args[0]);
            ua->begin_login(*rt.net, step.args[1], step.mfa);
            auto ran = rt.net->run_until_idle(config.livelock_cap);
            if (!ran.ok()) {
                return ScenarioError{ScenarioError::Kind::Livelock, ran.error().detail};
            }
            outcome = ua->outcome_ready() ? ua->last_outcome() : "error=NoOutcome";
            break;
        }
        case StepKind::AccessResource: {
            entity::UserAgentEntity* ua = rt.user_agents.at(step.args[0]);
            ua->begin_access(*rt.net, step.args[1], step.args[2]);
            auto ran = rt.net->run_until_idle(config.livelock_cap);
            if (!ran.ok()) {
                return ScenarioError{ScenarioError::Kind::Livelock, ran.error().detail};
            }
            outcome = ua->outcome_ready() ? ua->last_outcome() : "error=NoOutcome";
            break;
        }
        case StepKind::KerberosLogin: {
            entity::KrbClientEntity* client =
                rt.krb_clients.at(step.args[0] + "@" + step.args[1]);
            client->begin_kinit(*rt.net);
            auto ran = rt.net->run_until_idle(config.livelock_cap);
            if (!ran.ok()) {
                return ScenarioError{ScenarioError::Kind::Livelock, ran.error().detail};
            }
            outcome = client->outcome_ready() ? client->last_outcome() : "error=NoOutcome";
            break;
        }
        case StepKind::KerberosAccess: {
            entity::KrbClientEntity* client =
                rt.krb_clients.at(step.args[0] + "@" + step.args[1]);
            client->begin_service_access(*rt.net, krb_service_id(step.args[2], step.args[1]),
                                         step.args[2], step.replay);
            auto ran = rt.net->run_until_idle(config.livelock_cap);
            if (!ran.ok()) {
                return ScenarioError{ScenarioError::Kind::Livelock, ran.error().detail};
            }
            outcome = client->outcome_ready() ? client->last_outcome() : "error=NoOutcome";
            break;
        }
        case StepKind::AdvanceClock: {
            Tick amount = wire::parse_u64(step.args[0]).take();
            rt.net->advance_clock(amount);
            outcome = "ok";
            break;
        }
        }

        rt.audit.append(rt.net->now(), "harness", "step", step_corr, outcome,
                        step_description(step));

        StepResult result;
        result.index = i + 1;
        result.description = step_description(step);
        result.outcome = outcome;
        result.expected = step.expected;
        result.passed = !step.expected.has_value() || *step.expected == outcome;
        if (!result.passed) {
            ++report.expectations_failed;
        }
        report.steps.push_back(std::move(result));
    }

    for (const auto& [id, idp] : rt.idps) {
        report.password_checks[id] = idp->core.password_checks;
    }
    report.trace_text = rt.audit.text();
    if (!trace_path.empty()) {
        std::ofstream out(trace_path, std::ios::binary);
        if (!out) {
            return ScenarioError{ScenarioError::Kind::Io,
                                 "cannot write trace '" + trace_path + "'"};
        }
        out << report.trace_text;
    }
    return report;
}

std::string ScenarioReport::render() const {
    std::ostringstream out;
    out << "scenario: " << scenario << "\n";
    out << "seed: " << seed << "\n";
    std::size_t expected_count = 0;
    for (const StepResult& step : steps) {
        if (step.expected.has_value()) {
            ++expected_count;
        }
    }
    out << "steps: " << steps.size() << " expectations: " << expected_count
        << " failed: " << expectations_failed << "\n";
    for (const StepResult& step : steps) {
        out << "step " << step.index << ": " << step.description << " -> " << step.outcome;
        if (step.expected.has_value()) {
            out << " [expected: " << *step.expected << "] "
                << (step.passed ? "PASS" : "FAIL");
        }
        out << "\n";
    }
    if (!trace_path.empty()) {
        out << "trace: " << trace_path << "\n";
    }
    out << "result: " << (all_passed() ? "PASS" : "FAIL") << "\n";
    return out.str();
}

std::vector<ModelReport> emit_model_reports(const ScenarioConfig& config) {
    std::vector<ModelReport> reports;
    for (const EntitySpec& spec : config.entities) {
        ModelReport report;
        report.entity_id = spec.id;
        if (!spec.model_path.has_value()) {
            report.has_model = false;
            report.findings.push_back(fimsm::Finding{fimsm::Severity::Info, "M0",
                                                     "model not provided", ""});
            report.report_text = "gap report for " + spec.id + "\nmodel not provided\n";
            reports.push_back(std::move(report));
            continue;
        }
        report.has_model = true;
        std::filesystem::path path = std::filesystem::path(config.base_dir) / *spec.model_path;
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            report.findings.push_back(fimsm::Finding{
                fimsm::Severity::Violation, "M0", "model file missing: " + path.string(), ""});
            reports.push_back(std::move(report));
            continue;
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();
        auto model = fimsm::load_model(buffer.str());
        if (!model.ok()) {
            report.findings.push_back(fimsm::Finding{fimsm::Severity::Violation, "M0",
                                                     "model failed to load: " +
                                                         model.error().message,
                                                     ""});
            reports.push_back(std::move(report));
            continue;
        }
        report.findings = fimsm::validate_model(model.value());
        report.report_text = fimsm::gap_report(model.value());
        reports.push_back(std::move(report));
    }
    return reports;
}

Result<RegistryFile, ScenarioError> load_registry_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return ScenarioError{ScenarioError::Kind::Io, "cannot open '" + path + "'"};
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    std::string text = buffer.str();

    RegistryFile registry;
    // Split registry header lines from the entity blocks, which reuse the
    // scenario entity grammar.
    std::string entity_section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool in_entities = false;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            std::string_view(text).substr(pos, eol == std::string::npos ? text.size() - pos
                                                                        : eol - pos);
        ++line_no;
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;

        auto scanned = scan_line(line, line_no);
        if (!scanned.ok()) {
            return scanned.error();
        }
        const std::vector<Token>& tokens = scanned.value();
        if (tokens.empty()) {
            continue;
        }
        if (tokens[0].text == "entity") {
            in_entities = true;
        }
        if (in_entities) {
            entity_section += std::string(line);
            entity_section.push_back('\n');
            continue;
        }
        const std::string& keyword = tokens[0].text;
        if (keyword == "federation" && tokens.size() == 2) {
            registry.federation_id = tokens[1].text;
        } else if (keyword == "ttp-key-seed" && tokens.size() == 2) {
            auto seed = wire::hex_decode(tokens[1].text);
            if (!seed.ok() || seed.value().size() != crypto::kSeedSize) {
                return parse_error("ttp-key-seed must be 32 bytes of hex", line_no);
            }
            registry.ttp_key_seed = seed.take();
        } else if (keyword == "serial" && tokens.size() == 2) {
            auto value = wire::parse_u64(tokens[1].text);
            if (!value.ok()) {
                return parse_error("bad serial", line_no);
            }
            registry.serial = value.take();
        } else if (keyword == "validity" && tokens.size() == 2) {
            auto value = parse_tick_token(tokens[1].text, line_no);
            if (!value.ok()) return value.error();
            registry.validity = value.take();
        } else {
            return parse_error("unknown registry record '" + keyword + "'", line_no);
        }
    }
    if (registry.federation_id.empty()) {
        return parse_error("registry file missing 'federation' record", 0);
    }
    if (registry.ttp_key_seed.empty()) {
        return parse_error("registry file missing 'ttp-key-seed' record", 0);
    }

    auto entities = load_scenario_text(entity_section, "");
    if (!entities.ok()) {
        return entities.error();
    }
    registry.entities = entities.value().entities;
    return registry;
}

} // namespace fedweaver::scenario
