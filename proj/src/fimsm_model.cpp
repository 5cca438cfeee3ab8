/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "fedweaver/fimsm_model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <tuple>

namespace fedweaver::fimsm {

namespace {

struct Token {
    std::string text;
    std::size_t column; // 1-based
    bool quoted;
};

struct LineScan {
    std::vector<Token> tokens;
    std::optional<ModelError> error;
};

LineScan scan_line(std::string_view line, std::size_t line_no) {
    LineScan out;
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
        std::size_t start = i;
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
                out.error = ModelError{ModelError::Kind::Parse, "unterminated quoted string",
                                       line_no, start + 1};
                return out;
            }
            out.tokens.push_back(Token{std::move(text), start + 1, true});
        } else {
            std::size_t end = i;
            while (end < line.size() && line[end] != ' ' && line[end] != '\t' &&
                   line[end] != '#') {
                ++end;
            }
            out.tokens.push_back(Token{std::string(line.substr(i, end - i)), start + 1, false});
            i = end;
        }
    }
    return out;
}

ModelError parse_error(std::string message, std::size_t line, std::size_t column) {
    return ModelError{ModelError::Kind::Parse, std::move(message), line, column};
}

ModelError schema_error(std::string message, std::size_t line) {
    return ModelError{ModelError::Kind::Schema, std::move(message), line, 0};
}

std::string quote(std::string_view text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool name_has(const LayeredElement& element, std::string_view token) {
    return lower(element.name).find(token) != std::string::npos;
}

// Which layer a `serves` relation from the given service layer must target.
std::optional<Layer> served_layer(Layer from) {
    switch (from) {
    case Layer::BusinessService: return Layer::External;
    case Layer::ApplicationService: return Layer::Business;
    case Layer::TechnicalService: return Layer::Application;
    default: return std::nullopt;
    }
}

// Which service layer a `realizes` relation from the given implementation
// layer must target.
std::optional<Layer> realized_layer(Layer from) {
    switch (from) {
    case Layer::Business: return Layer::BusinessService;
    case Layer::Application: return Layer::ApplicationService;
    default: return std::nullopt;
    }
}

ElementKind representative_kind(Layer layer) {
    switch (layer) {
    case Layer::External: return ElementKind::Actor;
    case Layer::BusinessService: return ElementKind::Service;
    case Layer::Business: return ElementKind::Process;
    case Layer::ApplicationService: return ElementKind::Service;
    case Layer::Application: return ElementKind::Component;
    case Layer::TechnicalService: return ElementKind::Node;
    }
    return ElementKind::Service;
}

struct AnalyzedFinding {
    Finding finding;
    Layer layer;
    std::string suggestion;
};

std::vector<AnalyzedFinding> analyze(const FimsmModel& model) {
    std::vector<AnalyzedFinding> out;
    auto add = [&out](Severity severity, std::string rule, std::string message,
                      std::string element_id, Layer layer, std::string suggestion) {
        out.push_back(AnalyzedFinding{
            Finding{severity, std::move(rule), std::move(message), std::move(element_id)},
            layer, std::move(suggestion)});
    };

    // L0: every layer of the reference architecture is populated.
    for (Layer layer : kAllLayers) {
        bool populated = std::any_of(model.elements.begin(), model.elements.end(),
                                     [layer](const LayeredElement& e) { return e.layer == layer; });
        if (!populated) {
            std::string layer_name = to_string(layer);
            add(Severity::Gap, "L0", "layer " + layer_name + " is not populated", "", layer,
                "add a " + std::string(to_string(representative_kind(layer))) + " element to the " +
                    layer_name + " layer");
        }
    }

    // L1: serves/realizes follow the layer stack.
    for (const Relation& relation : model.relations) {
        const LayeredElement* source = model.find_element(relation.source);
        const LayeredElement* target = model.find_element(relation.target);
        if (source == nullptr || target == nullptr) {
            continue; // structural validity is load_model's job
        }
        std::optional<Layer> required;
        std::string verb;
        if (relation.kind == RelationKind::Serves) {
            verb = "serves";
            required = served_layer(source->layer);
            if (!required.has_value()) {
                add(Severity::Violation, "L1",
                    "serves relation from '" + source->id + "' must originate from a service layer",
                    source->id, source->layer,
                    "review element '" + source->id + "': serves originates from " +
                        to_string(source->layer));
                continue;
            }
        } else if (relation.kind == RelationKind::Realizes) {
            verb = "realizes";
            required = realized_layer(source->layer);
            if (!required.has_value()) {
                add(Severity::Violation, "L1",
                    "realizes relation from '" + source->id +
                        "' must originate from an implementation layer",
                    source->id, source->layer,
                    "review element '" + source->id + "': realizes originates from " +
                        to_string(source->layer));
                continue;
            }
        } else {
            continue; // uses / assigned-to are unconstrained by L1
        }
        if (target->layer != *required) {
            add(Severity::Violation, "L1",
                verb + " relation from '" + source->id + "' (" + to_string(source->layer) +
                    ") must target " + to_string(*required) + ", not " + to_string(target->layer),
                source->id, source->layer,
                "review element '" + source->id + "': retarget the " + verb + " relation to " +
                    to_string(*required));
        }
    }

    // L2: kind placement.
    for (const LayeredElement& element : model.elements) {
        if (element.kind == ElementKind::Actor && element.layer != Layer::External) {
            add(Severity::Violation, "L2", "Actor elements belong to the External layer",
                element.id, element.layer,
                "review element '" + element.id + "': move the Actor to the External layer");
        }
        if (element.kind == ElementKind::Node && element.layer != Layer::TechnicalService) {
            add(Severity::Violation, "L2", "Node elements belong to the TechnicalService layer",
                element.id, element.layer,
                "review element '" + element.id + "': move the Node to the TechnicalService layer");
        }
    }

    // F1: an entity offering AuthNZ must be federation-ready: a trusted
    // third party process, FIM protocol software, and a used discovery
    // service.
    bool offers_authnz = std::any_of(
        model.elements.begin(), model.elements.end(), [](const LayeredElement& e) {
            return (e.layer == Layer::BusinessService || e.layer == Layer::Business) &&
                   (name_has(e, "authnz") || name_has(e, "authentication"));
        });
    if (offers_authnz) {
        bool has_ttp = std::any_of(model.elements.begin(), model.elements.end(),
                                   [](const LayeredElement& e) {
                                       return e.kind == ElementKind::Process &&
                                              (name_has(e, "trusted third party") ||
                                               name_has(e, "ttp"));
                                   });
        if (!has_ttp) {
            add(Severity::Gap, "F1", "no trusted third party process", "", Layer::Business,
                "add trusted third party process to Business layer");
        }

        static constexpr std::string_view kFimTokens[] = {"saml",  "oidc", "oauth",
                                                          "shibboleth", "ad fs", "adfs", "fim"};
        bool has_fim_component = std::any_of(
            model.elements.begin(), model.elements.end(), [](const LayeredElement& e) {
                if (e.kind != ElementKind::Component || e.layer != Layer::Application) {
                    return false;
                }
                for (std::string_view token : kFimTokens) {
                    if (name_has(e, token)) {
                        return true;
                    }
                }
                return false;
            });
        if (!has_fim_component) {
            add(Severity::Gap, "F1", "no FIM protocol component", "", Layer::Application,
                "add FIM protocol component to Application layer");
        }

        bool has_discovery_usage = false;
        for (const LayeredElement& element : model.elements) {
            if (!name_has(element, "discovery")) {
                continue;
            }
            for (const Relation& relation : model.relations) {
                if (relation.kind == RelationKind::Uses && relation.target == element.id) {
                    has_discovery_usage = true;
                    break;
                }
            }
            if (has_discovery_usage) {
                break;
            }
        }
        if (!has_discovery_usage) {
            add(Severity::Gap, "F1", "no discovery service usage", "", Layer::ApplicationService,
                "add discovery service usage to ApplicationService layer");
        }
    }

    std::sort(out.begin(), out.end(), [](const AnalyzedFinding& a, const AnalyzedFinding& b) {
        return std::tie(a.finding.rule_id, a.finding.element_id, a.finding.message) <
               std::tie(b.finding.rule_id, b.finding.element_id, b.finding.message);
    });
    return out;
}

} // namespace

const LayeredElement* FimsmModel::find_element(std::string_view id) const {
    for (const LayeredElement& element : elements) {
        if (element.id == id) {
            return &element;
        }
    }
    return nullptr;
}

const char* to_string(Layer layer) {
    switch (layer) {
    case Layer::External: return "External";
    case Layer::BusinessService: return "BusinessService";
    case Layer::Business: return "Business";
    case Layer::ApplicationService: return "ApplicationService";
    case Layer::Application: return "Application";
    case Layer::TechnicalService: return "TechnicalService";
    }
    return "?";
}

const char* to_string(ElementKind kind) {
    switch (kind) {
    case ElementKind::Actor: return "Actor";
    case ElementKind::Service: return "Service";
    case ElementKind::Process: return "Process";
    case ElementKind::Function: return "Function";
    case ElementKind::Component: return "Component";
    case ElementKind::Node: return "Node";
    }
    return "?";
}

const char* to_string(RelationKind kind) {
    switch (kind) {
    case RelationKind::Serves: return "serves";
    case RelationKind::Realizes: return "realizes";
    case RelationKind::Uses: return "uses";
    case RelationKind::AssignedTo: return "assigned-to";
    }
    return "?";
}

const char* to_string(Severity severity) {
    switch (severity) {
    case Severity::Gap: return "Gap";
    case Severity::Violation: return "Violation";
    case Severity::Info: return "Info";
    }
    return "?";
}

std::optional<Layer> parse_layer(std::string_view text) {
    for (Layer layer : kAllLayers) {
        if (text == to_string(layer)) {
            return layer;
        }
    }
    return std::nullopt;
}

std::optional<ElementKind> parse_element_kind(std::string_view text) {
    for (ElementKind kind : {ElementKind::Actor, ElementKind::Service, ElementKind::Process,
                             ElementKind::Function, ElementKind::Component, ElementKind::Node}) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    return std::nullopt;
}

std::optional<RelationKind> parse_relation_kind(std::string_view text) {
    for (RelationKind kind : {RelationKind::Serves, RelationKind::Realizes, RelationKind::Uses,
                              RelationKind::AssignedTo}) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    return std::nullopt;
}

Result<FimsmModel, ModelError> load_model(std::string_view document) {
    FimsmModel model;
    std::set<std::string> seen_ids;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= document.size()) {
        std::size_t eol = document.find('\n', pos);
        std::string_view line = document.substr(
            pos, eol == std::string_view::npos ? document.size() - pos : eol - pos);
        ++line_no;
        pos = eol == std::string_view::npos ? document.size() + 1 : eol + 1;

        LineScan scan = scan_line(line, line_no);
        if (scan.error.has_value()) {
            return *scan.error;
        }
        if (scan.tokens.empty()) {
            continue;
        }
        const Token& head = scan.tokens.front();
        if (head.quoted) {
            return parse_error("record keyword expected", line_no, head.column);
        }

        if (head.text == "entity") {
            if (scan.tokens.size() != 2) {
                return parse_error("entity record expects one quoted name", line_no, head.column);
            }
            model.entity_name = scan.tokens[1].text;
        } else if (head.text == "element") {
            if (scan.tokens.size() != 5) {
                return parse_error("element record expects <id> <layer> <kind> \"<name>\"",
                                   line_no, head.column);
            }
            const Token& id = scan.tokens[1];
            const Token& layer_tok = scan.tokens[2];
            const Token& kind_tok = scan.tokens[3];
            const Token& name = scan.tokens[4];
            auto layer = parse_layer(layer_tok.text);
            if (!layer.has_value()) {
                return schema_error("unknown layer '" + layer_tok.text + "'", line_no);
            }
            auto kind = parse_element_kind(kind_tok.text);
            if (!kind.has_value()) {
                return schema_error("unknown element kind '" + kind_tok.text + "'", line_no);
            }
            if (!seen_ids.insert(id.text).second) {
                return schema_error("duplicate element id '" + id.text + "'", line_no);
            }
            model.elements.push_back(LayeredElement{id.text, name.text, *layer, *kind});
        } else if (head.text == "relation") {
            if (scan.tokens.size() != 4) {
                return parse_error("relation record expects <kind> <source-id> <target-id>",
                                   line_no, head.column);
            }
            auto kind = parse_relation_kind(scan.tokens[1].text);
            if (!kind.has_value()) {
                return schema_error("unknown relation kind '" + scan.tokens[1].text + "'",
                                    line_no);
            }
            model.relations.push_back(
                Relation{*kind, scan.tokens[2].text, scan.tokens[3].text});
        } else {
            return parse_error("unknown record '" + head.text + "'", line_no, head.column);
        }
    }

    for (const Relation& relation : model.relations) {
        for (const std::string* endpoint : {&relation.source, &relation.target}) {
            if (seen_ids.find(*endpoint) == seen_ids.end()) {
                return schema_error("relation references unknown element '" + *endpoint + "'", 0);
            }
        }
    }
    return model;
}

std::string serialize(const FimsmModel& model) {
    std::ostringstream out;
    if (!model.entity_name.empty()) {
        out << "entity " << quote(model.entity_name) << "\n";
    }
    for (const LayeredElement& element : model.elements) {
        out << "element " << element.id << ' ' << to_string(element.layer) << ' '
            << to_string(element.kind) << ' ' << quote(element.name) << "\n";
    }
    for (const Relation& relation : model.relations) {
        out << "relation " << to_string(relation.kind) << ' ' << relation.source << ' '
            << relation.target << "\n";
    }
    return out.str();
}

std::vector<Finding> validate_model(const FimsmModel& model) {
    std::vector<Finding> out;
    for (AnalyzedFinding& analyzed : analyze(model)) {
        out.push_back(std::move(analyzed.finding));
    }
    return out;
}

std::string gap_report(const FimsmModel& model) {
    std::vector<AnalyzedFinding> findings = analyze(model);
    std::ostringstream out;
    out << "gap report for "
        << (model.entity_name.empty() ? std::string("(unnamed entity)") : model.entity_name)
        << "\n";
    if (findings.empty()) {
        out << "no gaps\n";
        return out.str();
    }
    for (Layer layer : kAllLayers) {
        std::vector<const AnalyzedFinding*> section;
        for (const AnalyzedFinding& finding : findings) {
            if (finding.layer == layer) {
                section.push_back(&finding);
            }
        }
        if (section.empty()) {
            continue;
        }
        std::sort(section.begin(), section.end(),
                  [](const AnalyzedFinding* a, const AnalyzedFinding* b) {
                      return a->suggestion < b->suggestion;
                  });
        out << to_string(layer) << ":\n";
        for (const AnalyzedFinding* finding : section) {
            out << "  - " << finding->suggestion << " [" << finding->finding.rule_id << "]\n";
        }
    }
    return out.str();
}

std::string render_findings(const std::vector<Finding>& findings) {
    std::ostringstream out;
    for (const Finding& finding : findings) {
        out << to_string(finding.severity) << ' ' << finding.rule_id << ' '
            << (finding.element_id.empty() ? "-" : finding.element_id) << ' ' << finding.message
            << "\n";
    }
    return out.str();
}

} // namespace fedweaver::fimsm
