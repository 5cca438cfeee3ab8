/*
 * SPDX-License-Identifier: Apache-2.0
 */
#ifndef FEDWEAVER_FIMSM_MODEL_HPP
#define FEDWEAVER_FIMSM_MODEL_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedweaver/common.hpp"

namespace fedweaver::fimsm {

/// The six layers of the reference architecture, top to bottom.
enum class Layer {
    External,
    BusinessService,
    Business,
    ApplicationService,
    Application,
    TechnicalService,
};

inline constexpr std::array<Layer, 6> kAllLayers = {
    Layer::External,          Layer::BusinessService, Layer::Business,
    Layer::ApplicationService, Layer::Application,     Layer::TechnicalService,
};

enum class ElementKind { Actor, Service, Process, Function, Component, Node };

enum class RelationKind { Serves, Realizes, Uses, AssignedTo };

struct LayeredElement {
    std::string id;
    std::string name;
    Layer layer;
    ElementKind kind;
};

struct Relation {
    RelationKind kind;
    std::string source;
    std::string target;
};

struct FimsmModel {
    std::string entity_name;
    std::vector<LayeredElement> elements;
    std::vector<Relation> relations;

    const LayeredElement* find_element(std::string_view id) const;
};

enum class Severity { Gap, Violation, Info };

/// One validation result. rule_id is from the published catalogue:
///   L0 layer-coverage, L1 layer-adjacency, L2 kind-placement,
///   F1 federation-readiness.
struct Finding {
    Severity severity;
    std::string rule_id;
    std::string message;
    std::string element_id; // empty for model-level findings
};

struct ModelError {
    enum class Kind { Parse, Schema };
    Kind kind;
    std::string message;
    std::size_t line = 0;   // 1-based
    std::size_t column = 0; // 1-based, 0 when not applicable
};

const char* to_string(Layer layer);
const char* to_string(ElementKind kind);
const char* to_string(RelationKind kind);
const char* to_string(Severity severity);
std::optional<Layer> parse_layer(std::string_view text);
std::optional<ElementKind> parse_element_kind(std::string_view text);
std::optional<RelationKind> parse_relation_kind(std::string_view text);

/// Parses the line-oriented model format (docs/model-format.md):
///   entity "<name>"
///   element <id> <layer> <kind> "<name>"
///   relation <kind> <source-id> <target-id>
/// '#' starts a comment. Duplicate element ids and dangling relation
/// endpoints are schema errors.
Result<FimsmModel, ModelError> load_model(std::string_view document);

/// Inverse of load_model up to comments and ordering.
std::string serialize(const FimsmModel& model);

/// Deterministic conformance check; findings ordered by
/// (rule_id, element_id, message). Empty result means conformant.
std::vector<Finding> validate_model(const FimsmModel& model);

/// Human-readable remediation list grouped by layer. Contains exactly the
/// phrase "no gaps" when validate_model finds nothing.
std::string gap_report(const FimsmModel& model);

/// "<severity> <rule_id> <element_id|-> <message>", one finding per line;
/// the golden-file representation.
std::string render_findings(const std::vector<Finding>& findings);

} // namespace fedweaver::fimsm

#endif
