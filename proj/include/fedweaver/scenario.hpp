/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_SCENARIO_HPP
#define FEDWEAVER_SCENARIO_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedweaver/common.hpp"
#include "fedweaver/entity_services.hpp"
#include "fedweaver/fimsm_model.hpp"
#include "fedweaver/protocol_engines.hpp"
#include "fedweaver/trust_fabric.hpp"

namespace fedweaver::scenario {

using trust::LoaLevel;
using trust::Protocol;

struct UserSpec {
    std::string name;
    std::string password;
    std::optional<std::string> second_factor;
    std::map<std::string, std::string> attributes;
    std::set<std::string> roles;
};

struct FederationSpec {
    std::string id;
    std::string ttp_entity;
    Tick validity = 100000;
    std::vector<trust::Agreement> agreements;
};

struct ProxySpec {
    std::string upstream;
    Protocol upstream_protocol = Protocol::Assertion;
    std::map<std::string, Protocol> serves; // sp -> family toward it
};

struct EntitySpec {
    std::string id;
    std::string display;
    std::set<trust::Role> roles;
    LoaLevel loa = LoaLevel::Basic;
    std::set<std::string> domains;
    std::set<Protocol> endpoints;
    std::vector<std::string> member_of;
    std::optional<std::string> model_path;
    std::optional<std::string> key_seed_hex;
    Tick session_lifetime = 600;
    Tick assertion_lifetime = 300;
    Tick token_lifetime = 300;
    std::optional<std::string> single_sp;
    std::vector<UserSpec> users;
    std::vector<entity::ResourceSpec> resources;
    std::map<std::string, std::set<std::string>> permits; // role -> permissions
    std::optional<ProxySpec> proxy;
};

struct KrbPrincipalSpec {
    std::string name;
    std::string password; // empty for service principals
    bool service = false;
};

struct KdcSpec {
    std::string id;
    std::string realm;
    proto::KdcConfig config;
    std::vector<KrbPrincipalSpec> principals;
};

enum class StepKind {
    Login,
    AccessResource,
    KerberosLogin,
    KerberosAccess,
    AdvanceClock,
    PublishMetadata,
};
const char* to_string(StepKind kind);

struct StepSpec {
    StepKind kind;
    std::vector<std::string> args;
    bool mfa = false;    // Login with second factor
    bool replay = false; // KerberosAccess: re-send the previous AP request
    std::optional<std::string> expected;
    std::size_t line = 0;
};

struct ScenarioConfig {
    std::string name;
    Tick latency = 1;
    double drop_probability = 0.0;
    std::uint64_t livelock_cap = 100000;
    std::vector<FederationSpec> federations;
    std::vector<EntitySpec> entities;
    std::vector<KdcSpec> kdcs;
    std::vector<StepSpec> steps;
    std::string base_dir; // model refs resolve against this
};

struct ScenarioError {
    enum class Kind { Parse, DanglingReference, Io, Livelock };
    Kind kind;
    std::string message;
    std::size_t line = 0;
};

Result<ScenarioConfig, ScenarioError> load_scenario_text(std::string_view text,
                                                         std::string base_dir);
Result<ScenarioConfig, ScenarioError> load_scenario(const std::string& path);

struct StepResult {
    std::size_t index = 0; // 1-based
    std::string description;
    std::string outcome;
    std::optional<std::string> expected;
    bool passed = true; // steps without expectations pass vacuously
};

struct ScenarioReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::vector<StepResult> steps;
    std::size_t expectations_failed = 0;
    std::string trace_path;
    std::string trace_text;
    std::map<std::string, std::uint64_t> password_checks; // idp -> counter

    bool all_passed() const { return expectations_failed == 0; }
    std::string render() const;
};

/// Wires the configured entities over simnet, executes the script and
/// evaluates the inline expectations. Writes the audit trace to
/// trace_path when non-empty.
Result<ScenarioReport, ScenarioError> run_scenario(const ScenarioConfig& config,
                                                   std::uint64_t seed,
                                                   const std::string& trace_path = "");

struct ModelReport {
    std::string entity_id;
    bool has_model = false;
    std::vector<fimsm::Finding> findings;
    std::string report_text;
};

/// Per-entity conformance reports for every declared model reference.
/// Entities without one get an Info finding instead.
std::vector<ModelReport> emit_model_reports(const ScenarioConfig& config);

// Registry files for the metadata CLI: a federation header plus entity
// blocks in the scenario syntax.
struct RegistryFile {
    std::string federation_id;
    Bytes ttp_key_seed;
    std::uint64_t serial = 0;
    Tick validity = 10000;
    std::vector<EntitySpec> entities;
};

Result<RegistryFile, ScenarioError> load_registry_file(const std::string& path);

/// Descriptor as it would appear in metadata; key material derives from
/// key_seed_hex when present, otherwise from (master_seed, entity id).
trust::EntityDescriptor descriptor_from_spec(const EntitySpec& spec, std::uint64_t master_seed);

} // namespace fedweaver::scenario

#endif
