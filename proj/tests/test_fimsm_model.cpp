/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "fedweaver/fimsm_model.hpp"
#include "fedweaver/rng.hpp"

using namespace fedweaver;
using namespace fedweaver::fimsm;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(FEDWEAVER_FIXTURE_DIR) + "/models/" + name,
                     std::ios::binary);
    REQUIRE(in);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

FimsmModel load_fixture(const std::string& name) {
    auto model = load_model(read_fixture(name));
    REQUIRE(model.ok());
    return model.take();
}

std::set<std::string> f1_messages(const std::vector<Finding>& findings) {
    std::set<std::string> out;
    for (const Finding& finding : findings) {
        if (finding.rule_id == "F1") {
            out.insert(finding.message);
        }
    }
    return out;
}

} // namespace

TEST_CASE("minimal document: one external actor") {
    auto model = load_model("element u1 External Actor \"end user\"\n");
    REQUIRE(model.ok());
    CHECK(model.value().elements.size() == 1);
    CHECK(model.value().relations.empty());
    CHECK(model.value().elements[0].name == "end user");
    CHECK(model.value().elements[0].layer == Layer::External);
}

TEST_CASE("dangling relation is a schema error naming the id") {
    auto model = load_model("element a External Actor \"a\"\n"
                            "relation uses a x9\n");
    REQUIRE_FALSE(model.ok());
    CHECK(model.error().kind == ModelError::Kind::Schema);
    CHECK(model.error().message.find("x9") != std::string::npos);
}

TEST_CASE("schema and parse errors are distinguished") {
    auto duplicate = load_model("element a External Actor \"a\"\n"
                                "element a Business Service \"again\"\n");
    REQUIRE_FALSE(duplicate.ok());
    CHECK(duplicate.error().kind == ModelError::Kind::Schema);

    auto bad_layer = load_model("element a Cloud Actor \"a\"\n");
    REQUIRE_FALSE(bad_layer.ok());
    CHECK(bad_layer.error().kind == ModelError::Kind::Schema);

    auto bad_kind = load_model("element a External Widget \"a\"\n");
    REQUIRE_FALSE(bad_kind.ok());
    CHECK(bad_kind.error().kind == ModelError::Kind::Schema);

    auto unterminated = load_model("element a External Actor \"a\n");
    REQUIRE_FALSE(unterminated.ok());
    CHECK(unterminated.error().kind == ModelError::Kind::Parse);
    CHECK(unterminated.error().line == 1);
    CHECK(unterminated.error().column > 0);

    auto unknown = load_model("widget a\n");
    REQUIRE_FALSE(unknown.ok());
    CHECK(unknown.error().kind == ModelError::Kind::Parse);

    CHECK(load_model("# just a comment\n\n").ok());
}

TEST_CASE("university fixture covers all six layers with the expected software") {
    FimsmModel model = load_fixture("university.fim");
    std::set<Layer> layers;
    for (const LayeredElement& element : model.elements) {
        layers.insert(element.layer);
    }
    CHECK(layers.size() == 6);
    CHECK(model.find_element("ldapnode") != nullptr);
    CHECK(model.find_element("ldapnode")->kind == ElementKind::Node);
    CHECK(model.find_element("shibboleth") != nullptr);
    CHECK(model.find_element("shibboleth")->kind == ElementKind::Component);
    CHECK(model.find_element("discovery") != nullptr);
    CHECK(model.find_element("ttp") != nullptr);
    CHECK(model.find_element("ttp")->kind == ElementKind::Process);
}

TEST_CASE("university and company validate clean; hospital reports federation gaps") {
    CHECK(validate_model(load_fixture("university.fim")).empty());
    CHECK(validate_model(load_fixture("company.fim")).empty());

    std::vector<Finding> findings = validate_model(load_fixture("hospital.fim"));
    REQUIRE(findings.size() == 3);
    for (const Finding& finding : findings) {
        CHECK(finding.severity == Severity::Gap);
        CHECK(finding.rule_id == "F1");
    }
    std::set<std::string> messages = f1_messages(findings);
    CHECK(messages.count("no trusted third party process") == 1);
    CHECK(messages.count("no FIM protocol component") == 1);
    CHECK(messages.count("no discovery service usage") == 1);
}

TEST_CASE("empty model yields one coverage gap per layer") {
    std::vector<Finding> findings = validate_model(FimsmModel{});
    REQUIRE(findings.size() == 6);
    std::set<std::string> messages;
    for (const Finding& finding : findings) {
        CHECK(finding.severity == Severity::Gap);
        CHECK(finding.rule_id == "L0");
        messages.insert(finding.message);
    }
    CHECK(messages.size() == 6);
}

TEST_CASE("layer adjacency violations are flagged") {
    // serves must come from a service layer and point one layer up
    auto wrong_target = load_model("element bs BusinessService Service \"broker\"\n"
                                   "element b Business Service \"authnz core\"\n"
                                   "relation serves bs b\n");
    REQUIRE(wrong_target.ok());
    auto findings = validate_model(wrong_target.value());
    bool has_l1 = false;
    for (const Finding& finding : findings) {
        if (finding.rule_id == "L1") {
            has_l1 = true;
            CHECK(finding.severity == Severity::Violation);
            CHECK(finding.element_id == "bs");
        }
    }
    CHECK(has_l1);

    auto wrong_source = load_model("element e External Actor \"user\"\n"
                                   "element b Business Process \"p\"\n"
                                   "relation serves e b\n"
                                   "relation realizes e b\n");
    REQUIRE(wrong_source.ok());
    int l1_count = 0;
    for (const Finding& finding : validate_model(wrong_source.value())) {
        if (finding.rule_id == "L1") {
            ++l1_count;
        }
    }
    CHECK(l1_count == 2);
}

TEST_CASE("kind placement violations are flagged") {
    auto model = load_model("element a Business Actor \"misplaced actor\"\n"
                            "element n Application Node \"misplaced node\"\n");
    REQUIRE(model.ok());
    int l2_count = 0;
    for (const Finding& finding : validate_model(model.value())) {
        if (finding.rule_id == "L2") {
            ++l2_count;
            CHECK(finding.severity == Severity::Violation);
        }
    }
    CHECK(l2_count == 2);
}

TEST_CASE("findings are ordered and deterministic") {
    FimsmModel hospital = load_fixture("hospital.fim");
    std::vector<Finding> a = validate_model(hospital);
    std::vector<Finding> b = validate_model(hospital);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].rule_id == b[i].rule_id);
        CHECK(a[i].message == b[i].message);
    }
    for (std::size_t i = 1; i < a.size(); ++i) {
        CHECK(std::tie(a[i - 1].rule_id, a[i - 1].element_id, a[i - 1].message) <=
              std::tie(a[i].rule_id, a[i].element_id, a[i].message));
    }
}

TEST_CASE("gap report groups remediation by layer") {
    CHECK(gap_report(load_fixture("university.fim")).find("no gaps") != std::string::npos);

    std::string hospital = gap_report(load_fixture("hospital.fim"));
    CHECK(hospital.find("no gaps") == std::string::npos);
    CHECK(hospital.find("add trusted third party process to Business layer") !=
          std::string::npos);
    CHECK(hospital.find("add FIM protocol component to Application layer") !=
          std::string::npos);
    CHECK(hospital.find("add discovery service usage to ApplicationService layer") !=
          std::string::npos);
}

TEST_CASE("model missing only technical-service nodes reports a single section") {
    // No authnz-style names, so federation-readiness stays quiet.
    auto model = load_model("element a External Actor \"visitor\"\n"
                            "element b BusinessService Service \"billing service\"\n"
                            "element c Business Process \"billing process\"\n"
                            "element d ApplicationService Service \"billing api\"\n"
                            "element e Application Component \"billing app\"\n");
    REQUIRE(model.ok());
    std::vector<Finding> findings = validate_model(model.value());
    REQUIRE(findings.size() == 1);
    CHECK(findings[0].rule_id == "L0");
    CHECK(findings[0].severity == Severity::Gap);

    std::string report = gap_report(model.value());
    CHECK(report.find("TechnicalService:") != std::string::npos);
    for (const char* other : {"External:", "BusinessService:", "Business:",
                              "ApplicationService:", "Application:"}) {
        CHECK(report.find(other) == std::string::npos);
    }
}

TEST_CASE("adding a satisfying element only removes federation findings") {
    FimsmModel hospital = load_fixture("hospital.fim");
    std::set<std::string> before = f1_messages(validate_model(hospital));

    FimsmModel with_ttp = hospital;
    with_ttp.elements.push_back(
        LayeredElement{"ttp", "Trusted Third Party Process", Layer::Business,
                       ElementKind::Process});
    std::set<std::string> after = f1_messages(validate_model(with_ttp));
    CHECK(after.count("no trusted third party process") == 0);
    for (const std::string& message : after) {
        CHECK(before.count(message) == 1); // nothing new appears
    }

    FimsmModel with_fim = with_ttp;
    with_fim.elements.push_back(LayeredElement{"saml", "SAML Stack", Layer::Application,
                                               ElementKind::Component});
    with_fim.elements.push_back(LayeredElement{"disco", "Discovery Service",
                                               Layer::ApplicationService,
                                               ElementKind::Service});
    with_fim.relations.push_back(Relation{RelationKind::Uses, "ldapauthn", "disco"});
    CHECK(f1_messages(validate_model(with_fim)).empty());
}

TEST_CASE("serialize/load round-trips randomly generated models") {
    DeterministicRng rng(2024);
    for (int iteration = 0; iteration < 50; ++iteration) {
        FimsmModel model;
        model.entity_name = "entity-" + std::to_string(iteration);
        std::size_t element_count = 1 + rng.next_u64() % 12;
        for (std::size_t i = 0; i < element_count; ++i) {
            LayeredElement element;
            element.id = "e" + std::to_string(i);
            element.name = "name \"quoted\" \\ " + rng.next_hex(4);
            element.layer = kAllLayers[rng.next_u64() % kAllLayers.size()];
            element.kind = static_cast<ElementKind>(rng.next_u64() % 6);
            model.elements.push_back(std::move(element));
        }
        std::size_t relation_count = rng.next_u64() % 8;
        for (std::size_t i = 0; i < relation_count; ++i) {
            Relation relation;
            relation.kind = static_cast<RelationKind>(rng.next_u64() % 4);
            relation.source = "e" + std::to_string(rng.next_u64() % element_count);
            relation.target = "e" + std::to_string(rng.next_u64() % element_count);
            model.relations.push_back(std::move(relation));
        }

        auto reloaded = load_model(serialize(model));
        REQUIRE(reloaded.ok());
        REQUIRE(reloaded.value().elements.size() == model.elements.size());
        REQUIRE(reloaded.value().relations.size() == model.relations.size());
        CHECK(reloaded.value().entity_name == model.entity_name);
        for (std::size_t i = 0; i < model.elements.size(); ++i) {
            CHECK(reloaded.value().elements[i].id == model.elements[i].id);
            CHECK(reloaded.value().elements[i].name == model.elements[i].name);
            CHECK(reloaded.value().elements[i].layer == model.elements[i].layer);
            CHECK(reloaded.value().elements[i].kind == model.elements[i].kind);
        }
        for (std::size_t i = 0; i < model.relations.size(); ++i) {
            CHECK(reloaded.value().relations[i].kind == model.relations[i].kind);
            CHECK(reloaded.value().relations[i].source == model.relations[i].source);
            CHECK(reloaded.value().relations[i].target == model.relations[i].target);
        }
    }
}
